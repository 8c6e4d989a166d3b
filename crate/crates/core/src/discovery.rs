//! Bi-level discovery of a sharing scheme.
//!
//! The upper level picks a scheme `A` minimizing validation loss; the lower
//! level fits the free parameters `ψ` on the training split given `A`. Two
//! solvers are provided: exhaustive search over all partitions, and gradient
//! descent on a row-softmax relaxation of `A` with entropy and nuclear-norm
//! penalties, followed by argmax rounding.
//!
//! Every task is a linear regression `Ŷ = X Gᵀ` whose parameter matrix
//! `G` (outputs × inputs) is flattened row-major into `θ = Aψ`. Mean
//! estimation is the special case of a single constant input.

use crate::error::{shape_mismatch, Error, Result};
use crate::gaussian::{cluster_average, SampleSet};
use crate::numerics::{
    entropy_gradient, entropy_penalty, pseudo_inverse, row_softmax,
    softmax_backward, solve_least_squares, svd, AdamState, Matrix, Rng, PINV_RELATIVE_CUTOFF,
};
use crate::partition::{enumerate_partitions, partition_distance, Partition, SharingScheme, MAX_ENUMERATION};

/// Inputs and targets of a regression split.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionData {
    pub x: Matrix,
    pub y: Matrix,
}

impl RegressionData {
    pub fn new(x: Matrix, y: Matrix) -> Result<Self> {
        if x.rows() != y.rows() {
            return Err(shape_mismatch("RegressionData", x.rows(), y.rows()));
        }
        if x.rows() == 0 {
            return Err(Error::InvalidArgument("regression data needs at least one row".into()));
        }
        Ok(Self { x, y })
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        Self::new(self.x.select_rows(idx), self.y.select_rows(idx))
    }

    fn concat(a: &Self, b: &Self) -> Result<Self> {
        let stack = |m1: &Matrix, m2: &Matrix| -> Result<Matrix> {
            if m1.cols() != m2.cols() {
                return Err(shape_mismatch("concat", m1.cols(), m2.cols()));
            }
            let mut data = m1.as_slice().to_vec();
            data.extend_from_slice(m2.as_slice());
            Matrix::new(m1.rows() + m2.rows(), m1.cols(), data)
        };
        Self::new(stack(&a.x, &b.x)?, stack(&a.y, &b.y)?)
    }
}

/// Sufficient statistics of the squared loss on one data split:
/// `L(G) = Σ_q (g_q − c_q)ᵀ H (g_q − c_q) + rss`, where `g_q` is row q of
/// `G`, `H = XᵀX`, and `c` is the unconstrained least-squares fit.
#[derive(Debug, Clone, PartialEq)]
struct LossStats {
    gram: Matrix,
    center: Vec<f64>,
    rss: f64,
    inputs: usize,
    outputs: usize,
    samples: usize,
}

impl LossStats {
    fn regression(data: &RegressionData) -> Result<Self> {
        let (p, q) = (data.x.cols(), data.y.cols());
        let w = solve_least_squares(&data.x, &data.y)?;
        let residual = data.x.matmul(&w)?.sub(&data.y)?;
        let center = (0..q * p).map(|idx| w.get(idx % p, idx / p)).collect();
        Ok(Self {
            gram: data.x.transpose().matmul(&data.x)?,
            center,
            rss: residual.as_slice().iter().map(|v| v * v).sum(),
            inputs: p,
            outputs: q,
            samples: data.n(),
        })
    }

    /// Exact statistics for a constant design: the fit is the sample mean.
    fn mean(samples: &Matrix) -> Self {
        let center = samples.column_means();
        let rss = (0..samples.rows())
            .map(|i| {
                samples
                    .row(i)
                    .iter()
                    .zip(&center)
                    .map(|(y, m)| (y - m) * (y - m))
                    .sum::<f64>()
            })
            .sum();
        Self {
            gram: Matrix::from_fn(1, 1, |_, _| samples.rows() as f64),
            center,
            rss,
            inputs: 1,
            outputs: samples.cols(),
            samples: samples.rows(),
        }
    }

    fn k(&self) -> usize {
        self.center.len()
    }

    fn loss(&self, theta: &[f64]) -> f64 {
        let p = self.inputs;
        let mut total = self.rss;
        let mut diff = vec![0.0; p];
        for q in 0..self.outputs {
            for i in 0..p {
                diff[i] = theta[q * p + i] - self.center[q * p + i];
            }
            for i in 0..p {
                let row = self.gram.row(i);
                let hd: f64 = row.iter().zip(&diff).map(|(h, d)| h * d).sum();
                total += diff[i] * hd;
            }
        }
        total
    }

    fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let p = self.inputs;
        let mut out = vec![0.0; theta.len()];
        let mut diff = vec![0.0; p];
        for q in 0..self.outputs {
            for i in 0..p {
                diff[i] = theta[q * p + i] - self.center[q * p + i];
            }
            for i in 0..p {
                let row = self.gram.row(i);
                out[q * p + i] = 2.0 * row.iter().zip(&diff).map(|(h, d)| h * d).sum::<f64>();
            }
        }
        out
    }

    /// Exact `argmin_ψ L(Aψ)` for a binary scheme.
    fn fit_scheme(&self, scheme: &SharingScheme) -> Result<Vec<f64>> {
        let k = self.k();
        if scheme.k() != k {
            return Err(shape_mismatch("fit_scheme", k, scheme.k()));
        }
        if self.inputs == 1 {
            // H is a positive scalar: weighted and plain averages coincide.
            return Ok(cluster_average(scheme, &self.center));
        }
        let cols = scheme.columns();
        let mut active: Vec<usize> = cols.to_vec();
        active.sort_unstable();
        active.dedup();
        let slot = |c: usize| active.binary_search(&c).expect("active column");
        let r = active.len();
        let p = self.inputs;
        let mut normal = Matrix::zeros(r, r);
        let mut rhs = vec![0.0; r];
        for q in 0..self.outputs {
            for i in 0..p {
                let a = slot(cols[q * p + i]);
                for j in 0..p {
                    let h = self.gram.get(i, j);
                    let b = slot(cols[q * p + j]);
                    normal.set(a, b, normal.get(a, b) + h);
                    rhs[a] += h * self.center[q * p + j];
                }
            }
        }
        let solved = pseudo_inverse(&normal).matvec(&rhs)?;
        let mut psi = vec![0.0; k];
        for (s, &c) in active.iter().enumerate() {
            psi[c] = solved[s];
        }
        Ok(psi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    MeanEstimation,
    Regression,
}

/// A supervised task with a train/validation split. The full dataset is the
/// concatenation of the two splits.
#[derive(Debug, Clone)]
pub struct LinearSharedTask {
    kind: TaskKind,
    train: RegressionData,
    val: RegressionData,
    full: RegressionData,
    train_stats: LossStats,
    val_stats: LossStats,
    full_stats: LossStats,
}

impl LinearSharedTask {
    /// Estimate a K-dimensional mean from sample vectors.
    pub fn mean_estimation(train: &SampleSet, val: &SampleSet) -> Result<Self> {
        if train.k() != val.k() {
            return Err(shape_mismatch("mean_estimation", train.k(), val.k()));
        }
        let wrap = |s: &SampleSet| RegressionData::new(Matrix::from_fn(s.n(), 1, |_, _| 1.0), s.samples().clone());
        let (train, val) = (wrap(train)?, wrap(val)?);
        let full = RegressionData::concat(&train, &val)?;
        Ok(Self {
            kind: TaskKind::MeanEstimation,
            train_stats: LossStats::mean(&train.y),
            val_stats: LossStats::mean(&val.y),
            full_stats: LossStats::mean(&full.y),
            train,
            val,
            full,
        })
    }

    /// Linear regression `Y ≈ X Gᵀ` with `K = outputs × inputs` parameters.
    pub fn regression(train: RegressionData, val: RegressionData) -> Result<Self> {
        if train.x.cols() != val.x.cols() || train.y.cols() != val.y.cols() {
            return Err(shape_mismatch(
                "regression",
                format!("{}→{}", train.x.cols(), train.y.cols()),
                format!("{}→{}", val.x.cols(), val.y.cols()),
            ));
        }
        let full = RegressionData::concat(&train, &val)?;
        Ok(Self {
            kind: TaskKind::Regression,
            train_stats: LossStats::regression(&train)?,
            val_stats: LossStats::regression(&val)?,
            full_stats: LossStats::regression(&full)?,
            train,
            val,
            full,
        })
    }

    pub fn kind(&self) -> TaskKind {
        self.kind
    }

    /// Number of shareable parameters.
    pub fn k(&self) -> usize {
        self.train_stats.k()
    }

    pub fn inputs(&self) -> usize {
        self.train.x.cols()
    }

    pub fn outputs(&self) -> usize {
        self.train.y.cols()
    }

    pub fn train(&self) -> &RegressionData {
        &self.train
    }

    pub fn val(&self) -> &RegressionData {
        &self.val
    }

    pub fn full(&self) -> &RegressionData {
        &self.full
    }

    /// Unconstrained fit on the training split, flattened.
    pub fn train_target(&self) -> &[f64] {
        &self.train_stats.center
    }

    fn batch_stats(&self, batch: Option<&[usize]>) -> Result<LossStats> {
        match batch {
            None => Ok(self.val_stats.clone()),
            Some(idx) if idx.is_empty() => Err(Error::InvalidArgument("empty validation batch".into())),
            Some(idx) => {
                let sub = self.val.subset(idx)?;
                match self.kind {
                    TaskKind::MeanEstimation => Ok(LossStats::mean(&sub.y)),
                    TaskKind::Regression => LossStats::regression(&sub),
                }
            }
        }
    }

    /// Squared loss of flattened parameters on the validation split.
    pub fn val_loss(&self, theta: &[f64]) -> Result<f64> {
        self.check_len(theta)?;
        Ok(self.val_stats.loss(theta))
    }

    /// Squared loss of flattened parameters on the full dataset.
    pub fn full_loss(&self, theta: &[f64]) -> Result<f64> {
        self.check_len(theta)?;
        Ok(self.full_stats.loss(theta))
    }

    fn check_len(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.k() {
            return Err(shape_mismatch("parameter vector", self.k(), theta.len()));
        }
        Ok(())
    }

    /// Exact `argmin_ψ L(Aψ, T)` for a binary scheme.
    pub fn fit_train(&self, scheme: &SharingScheme) -> Result<Vec<f64>> {
        self.train_stats.fit_scheme(scheme)
    }

    /// Exact `argmin_ψ L(Aψ, D)` on the full dataset.
    pub fn fit_full(&self, scheme: &SharingScheme) -> Result<Vec<f64>> {
        self.full_stats.fit_scheme(scheme)
    }
}

/// `ψ* = A⁺ m` with `m` the column means of the training samples. For a
/// binary scheme this is exact per-cluster averaging.
pub fn lower_solve_mean(a: &Matrix, train: &SampleSet) -> Result<Vec<f64>> {
    if a.rows() != train.k() || a.cols() != train.k() {
        return Err(shape_mismatch("lower_solve_mean", train.k(), format!("{:?}", a.shape())));
    }
    let means = train.mean();
    match SharingScheme::from_matrix(a) {
        Ok(scheme) => Ok(cluster_average(&scheme, &means)),
        Err(_) => pseudo_inverse(a).matvec(&means),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LowerMode {
    /// Unconstrained least squares, then `ψ = A⁺ Flatten(G*)`.
    TwoStep,
    /// Least squares directly in `ψ`; binary schemes only.
    Direct,
}

/// Lower-level solve for `Y ≈ X Gᵀ` with `Flatten(G) = Aψ`.
pub fn lower_solve_regression(a: &Matrix, x: &Matrix, y: &Matrix, mode: LowerMode) -> Result<Vec<f64>> {
    let k = x.cols() * y.cols();
    if a.shape() != (k, k) {
        return Err(shape_mismatch("lower_solve_regression", format!("{k}x{k}"), format!("{:?}", a.shape())));
    }
    let stats = LossStats::regression(&RegressionData::new(x.clone(), y.clone())?)?;
    match mode {
        LowerMode::TwoStep => pseudo_inverse(a).matvec(&stats.center),
        LowerMode::Direct => stats.fit_scheme(&SharingScheme::from_matrix(a)?),
    }
}

/// Real-valued logits; `row_softmax(logits)` is the relaxed scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedScheme {
    logits: Matrix,
}

impl RelaxedScheme {
    pub fn new(logits: Matrix) -> Result<Self> {
        if logits.rows() != logits.cols() {
            return Err(shape_mismatch("RelaxedScheme", "square logits", format!("{:?}", logits.shape())));
        }
        if !logits.is_finite() {
            return Err(Error::NonFinite("RelaxedScheme logits"));
        }
        Ok(Self { logits })
    }

    pub fn k(&self) -> usize {
        self.logits.rows()
    }

    pub fn logits(&self) -> &Matrix {
        &self.logits
    }

    pub fn assignment(&self) -> Matrix {
        row_softmax(&self.logits)
    }
}

/// Optimizer and penalty settings of the relaxed solver.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxHyperparams {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub lambda_entropy: f64,
    pub lambda_nuclear: f64,
    pub max_epochs: usize,
    pub patience: usize,
    /// Minimum decrease of the full-validation objective that resets patience.
    pub tolerance: f64,
    pub minibatch_fraction: f64,
    /// Standard deviation of the initial logits.
    pub init_noise: f64,
    pub lower: RelaxedLower,
}

/// Lower-level solve used inside the relaxed objective. Both agree with
/// cluster averaging when `A` is binary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RelaxedLower {
    /// `ψ = Āᵀ θ*` with `Ā` the column-normalized `A`.
    Averaging,
    /// `ψ = (AᵀA + μI)⁻¹ Aᵀ θ*`; `ridge = 0` is the pseudo-inverse. Note
    /// that for invertible `A` the pseudo-inverse fits `θ*` exactly, so the
    /// data term then carries no gradient.
    Spectral { ridge: f64 },
}

impl Default for RelaxHyperparams {
    fn default() -> Self {
        Self {
            learning_rate: 2e-2,
            weight_decay: 1e-4,
            lambda_entropy: 0.01,
            lambda_nuclear: 0.01,
            max_epochs: 1000,
            patience: 50,
            tolerance: 1e-8,
            minibatch_fraction: 1.0,
            init_noise: 0.01,
            lower: RelaxedLower::Averaging,
        }
    }
}

impl RelaxHyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.learning_rate > 0.0) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if self.weight_decay < 0.0 || self.lambda_entropy < 0.0 || self.lambda_nuclear < 0.0 {
            return bad("weight decay and penalty weights must be non-negative".into());
        }
        if self.max_epochs == 0 {
            return bad("max epochs must be at least 1".into());
        }
        if !(self.minibatch_fraction > 0.0 && self.minibatch_fraction <= 1.0) {
            return bad(format!("minibatch fraction must lie in (0, 1], got {}", self.minibatch_fraction));
        }
        let ridge = match self.lower {
            RelaxedLower::Spectral { ridge } => ridge,
            RelaxedLower::Averaging => 0.0,
        };
        if self.init_noise < 0.0 || ridge < 0.0 || self.tolerance < 0.0 {
            return bad("init noise, ridge and tolerance must be non-negative".into());
        }
        Ok(())
    }
}

/// Value of the relaxed upper objective split into its terms.
#[derive(Debug, Clone, PartialEq)]
pub struct UpperEvaluation {
    pub data_loss: f64,
    pub entropy: f64,
    pub nuclear: f64,
    pub total: f64,
    /// Gradient of `total` with respect to the logits, when requested.
    pub gradient: Option<Matrix>,
}

/// Nuclear norm of `A` and its subgradient `UVᵀ`, plus the spectral solve
/// `V diag(f(s)) Uᵀ` with `f(s) = s/(s² + μ)`, or `1/s` above the cutoff
/// when `μ = 0`.
struct Spectrum {
    u: Matrix,
    v_t: Matrix,
    gains: Vec<f64>,
    nuclear: f64,
    nuclear_grad: Matrix,
}

impl Spectrum {
    fn new(a: &Matrix, ridge: f64, want_grad: bool) -> Self {
        let dec = svd(a);
        let largest = dec.singular_values.first().copied().unwrap_or(0.0);
        let cutoff = PINV_RELATIVE_CUTOFF * largest;
        let gains = dec
            .singular_values
            .iter()
            .map(|&s| {
                if ridge > 0.0 {
                    s / (s * s + ridge)
                } else if s > cutoff && s > 0.0 {
                    1.0 / s
                } else {
                    0.0
                }
            })
            .collect();
        let nuclear = dec.singular_values.iter().sum();
        let mut nuclear_grad = Matrix::zeros(a.rows(), a.cols());
        if want_grad {
            for (k, &s) in dec.singular_values.iter().enumerate() {
                if s <= cutoff {
                    continue;
                }
                for i in 0..a.rows() {
                    let uik = dec.u.get(i, k);
                    for (gj, vkj) in nuclear_grad.row_mut(i).iter_mut().zip(dec.v_t.row(k)) {
                        *gj += uik * vkj;
                    }
                }
            }
        }
        Self {
            u: dec.u,
            v_t: dec.v_t,
            gains,
            nuclear,
            nuclear_grad,
        }
    }

    fn apply(&self, b: &[f64]) -> Vec<f64> {
        let mut coeffs = self.u.tr_matvec(b).expect("shape");
        coeffs.iter_mut().zip(&self.gains).for_each(|(c, g)| *c *= g);
        self.v_t.tr_matvec(&coeffs).expect("shape")
    }
}

fn evaluate_upper(
    rs: &RelaxedScheme,
    task: &LinearSharedTask,
    batch: &LossStats,
    hp: &RelaxHyperparams,
    want_grad: bool,
) -> Result<UpperEvaluation> {
    let k = task.k();
    if rs.k() != k {
        return Err(shape_mismatch("relaxed scheme", k, rs.k()));
    }
    let a = rs.assignment();
    let ridge = match hp.lower {
        RelaxedLower::Spectral { ridge } => ridge,
        RelaxedLower::Averaging => 0.0,
    };
    let spectrum = Spectrum::new(&a, ridge, want_grad);
    let target = task.train_target();
    let col_sums: Vec<f64> = (0..k).map(|c| (0..k).map(|i| a.get(i, c)).sum()).collect();
    let psi = match hp.lower {
        RelaxedLower::Averaging => a
            .tr_matvec(target)?
            .iter()
            .zip(&col_sums)
            .map(|(v, s)| v / s)
            .collect(),
        RelaxedLower::Spectral { .. } => spectrum.apply(target),
    };
    let pred = a.matvec(&psi)?;
    // per-sample mean, so penalty weights do not depend on the split size
    let scale = 1.0 / batch.samples as f64;
    let data_loss = scale * batch.loss(&pred);
    let entropy = entropy_penalty(&a)?;
    let nuclear = spectrum.nuclear;
    let total = data_loss + hp.lambda_entropy * entropy + hp.lambda_nuclear * nuclear;

    let gradient = if want_grad {
        let mut g = batch.gradient(&pred);
        g.iter_mut().for_each(|v| *v *= scale);
        let mut grad_a = Matrix::zeros(k, k);
        match hp.lower {
            RelaxedLower::Averaging => {
                // ψ_c = Σ_i A_ic θ*_i / s_c, so ∂ψ_c/∂A_ic = (θ*_i − ψ_c)/s_c.
                let w = a.tr_matvec(&g)?;
                for i in 0..k {
                    for (c, out) in grad_a.row_mut(i).iter_mut().enumerate() {
                        *out = g[i] * psi[c] + w[c] * (target[i] - psi[c]) / col_sums[c];
                    }
                }
            }
            RelaxedLower::Spectral { .. } => {
                // ψ = F θ*: (g − A z) ψᵀ + (θ* − p) zᵀ with z = F g.
                let z = spectrum.apply(&g);
                let az = a.matvec(&z)?;
                for i in 0..k {
                    let left = g[i] - az[i];
                    let right = target[i] - pred[i];
                    for (j, out) in grad_a.row_mut(i).iter_mut().enumerate() {
                        *out = left * psi[j] + right * z[j];
                    }
                }
            }
        }
        if hp.lambda_entropy > 0.0 {
            grad_a = grad_a.add(&entropy_gradient(&a).scale(hp.lambda_entropy))?;
        }
        if hp.lambda_nuclear > 0.0 {
            grad_a = grad_a.add(&spectrum.nuclear_grad.scale(hp.lambda_nuclear))?;
        }
        Some(softmax_backward(&a, &grad_a)?)
    } else {
        None
    };

    Ok(UpperEvaluation {
        data_loss,
        entropy,
        nuclear,
        total,
        gradient,
    })
}

/// `L(Aψ*(A), batch)/|batch| + λ_H·H(A) + λ_*·‖A‖_*` with `A = row_softmax(logits)`.
/// `batch` indexes the validation split; `None` uses all of it.
pub fn upper_objective(
    rs: &RelaxedScheme,
    task: &LinearSharedTask,
    batch: Option<&[usize]>,
    hp: &RelaxHyperparams,
) -> Result<f64> {
    let total = evaluate_upper(rs, task, &task.batch_stats(batch)?, hp, false)?.total;
    if !total.is_finite() {
        return Err(Error::NonFinite("upper objective"));
    }
    Ok(total)
}

/// Gradient of [`upper_objective`] with respect to the logits, including the
/// dependence of `ψ*` on `A`.
pub fn upper_gradient(
    rs: &RelaxedScheme,
    task: &LinearSharedTask,
    batch: Option<&[usize]>,
    hp: &RelaxHyperparams,
) -> Result<Matrix> {
    let eval = evaluate_upper(rs, task, &task.batch_stats(batch)?, hp, true)?;
    Ok(eval.gradient.expect("gradient requested"))
}

/// Objective terms and gradient in one pass.
pub fn upper_evaluate(
    rs: &RelaxedScheme,
    task: &LinearSharedTask,
    batch: Option<&[usize]>,
    hp: &RelaxHyperparams,
) -> Result<UpperEvaluation> {
    evaluate_upper(rs, task, &task.batch_stats(batch)?, hp, true)
}

/// One-hot per row at the row maximum; ties go to the lowest column.
pub fn round_scheme(a: &Matrix) -> SharingScheme {
    let columns = (0..a.rows())
        .map(|i| {
            let row = a.row(i);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect();
    SharingScheme::from_columns(columns).expect("argmax column in range")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Relaxed data term (mean per validation sample).
    pub val_loss: f64,
    pub entropy: f64,
    pub nuclear: f64,
}

/// Outcome of a discovery run.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscoveryResult {
    pub scheme: SharingScheme,
    pub partition: Partition,
    /// Free parameters refit on the full dataset with `scheme` fixed.
    pub psi_final: Vec<f64>,
    /// Validation loss of `scheme` with `ψ` fit on the training split.
    pub val_loss: f64,
    pub history: Vec<EpochRecord>,
    pub epochs: usize,
}

impl DiscoveryResult {
    /// `θ = A ψ_final`.
    pub fn theta(&self) -> Vec<f64> {
        self.scheme.expand(&self.psi_final).expect("matching sizes")
    }

    pub fn distance_to(&self, gt: &Partition) -> Result<usize> {
        partition_distance(&self.partition, gt)
    }
}

/// Bi-level objective of a fixed binary scheme: fit on train, score on
/// validation.
pub fn scheme_validation_loss(task: &LinearSharedTask, scheme: &SharingScheme) -> Result<f64> {
    let psi = task.fit_train(scheme)?;
    task.val_loss(&scheme.expand(&psi)?)
}

/// Result for a scheme fixed in advance (baselines): refit on all data.
pub fn fixed_scheme(task: &LinearSharedTask, scheme: SharingScheme) -> Result<DiscoveryResult> {
    let val_loss = scheme_validation_loss(task, &scheme)?;
    let psi_final = task.fit_full(&scheme)?;
    Ok(DiscoveryResult {
        partition: scheme.partition(),
        scheme,
        psi_final,
        val_loss,
        history: Vec::new(),
        epochs: 0,
    })
}

fn ties(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

/// Exact solution of the bi-level program by enumerating every partition.
/// Ties go to fewer clusters, then to the earlier label string.
pub fn discover_brute_force(task: &LinearSharedTask) -> Result<DiscoveryResult> {
    let k = task.k();
    if k > MAX_ENUMERATION {
        return Err(Error::Capacity {
            what: "brute-force discovery",
            limit: MAX_ENUMERATION,
            got: k,
        });
    }
    let mut best: Option<(f64, Partition)> = None;
    for candidate in enumerate_partitions(k)? {
        let scheme = crate::partition::scheme_from_partition(&candidate);
        let loss = scheme_validation_loss(task, &scheme)?;
        let better = match &best {
            None => true,
            Some((best_loss, best_p)) => {
                if ties(loss, *best_loss) {
                    candidate.num_clusters() < best_p.num_clusters()
                } else {
                    loss < *best_loss
                }
            }
        };
        if better {
            best = Some((loss, candidate));
        }
    }
    let (_, winner) = best.expect("at least one partition");
    fixed_scheme(task, crate::partition::scheme_from_partition(&winner))
}

/// Relaxed gradient-based discovery with argmax rounding and a final refit
/// on the full dataset.
pub fn discover_relaxed(task: &LinearSharedTask, hp: &RelaxHyperparams, rng: &mut Rng) -> Result<DiscoveryResult> {
    hp.validate()?;
    let k = task.k();
    let n_val = task.val().n();
    let logits = Matrix::new(k, k, rng.normal(k * k, 0.0, hp.init_noise))?;
    let mut rs = RelaxedScheme::new(logits)?;
    let mut adam = AdamState::new((k, k), hp.learning_rate, hp.weight_decay);
    let batch_size = ((hp.minibatch_fraction * n_val as f64).ceil() as usize).clamp(1, n_val);
    let full_batch = batch_size == n_val;

    let mut history = Vec::with_capacity(hp.max_epochs);
    let mut best = f64::INFINITY;
    let mut stale = 0;
    let mut epochs = 0;
    for epoch in 0..hp.max_epochs {
        let (monitor, gradient) = if full_batch {
            let eval = evaluate_upper(&rs, task, &task.val_stats, hp, true)?;
            let grad = eval.gradient.clone().expect("gradient requested");
            (eval, grad)
        } else {
            let mut idx = rng.permutation(n_val);
            idx.truncate(batch_size);
            let stats = task.batch_stats(Some(&idx))?;
            let grad = evaluate_upper(&rs, task, &stats, hp, true)?.gradient.expect("gradient requested");
            (evaluate_upper(&rs, task, &task.val_stats, hp, false)?, grad)
        };
        if !monitor.total.is_finite() || !gradient.is_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: format!("objective {}", monitor.total),
            });
        }
        history.push(EpochRecord {
            epoch,
            val_loss: monitor.data_loss,
            entropy: monitor.entropy,
            nuclear: monitor.nuclear,
        });
        epochs = epoch + 1;
        if monitor.total < best - hp.tolerance {
            best = monitor.total;
            stale = 0;
        } else {
            stale += 1;
            if stale >= hp.patience {
                break;
            }
        }
        let mut logits = rs.logits.clone();
        adam.step(&mut logits, &gradient)?;
        rs = RelaxedScheme::new(logits)?;
    }

    let scheme = round_scheme(&rs.assignment());
    let mut result = fixed_scheme(task, scheme)?;
    result.history = history;
    result.epochs = epochs;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{gen_gaussian, mle_shared_mean, GaussianTask};
    use crate::numerics::finite_diff_gradient;
    use crate::partition::scheme_from_partition;

    fn samples(rows: &[&[f64]]) -> SampleSet {
        SampleSet::new(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    fn gaussian_task(k: usize, rank: usize, sigma: f64, n_train: usize, n_val: usize, seed: u64) -> (LinearSharedTask, GaussianTask) {
        let mut rng = Rng::new(seed);
        let gt = GaussianTask::random(k, rank, sigma, &mut rng).unwrap();
        let data = gen_gaussian(&gt, n_train + n_val, &mut rng).unwrap();
        let (t, v) = data.split_at(n_train).unwrap();
        (LinearSharedTask::mean_estimation(&t, &v).unwrap(), gt)
    }

    #[test]
    fn lower_mean_examples() {
        let train = samples(&[&[1.0, 3.0], &[3.0, 5.0]]);
        assert_eq!(lower_solve_mean(&Matrix::identity(2), &train).unwrap(), vec![2.0, 4.0]);
        let full = scheme_from_partition(&Partition::full(2)).matrix();
        assert_eq!(lower_solve_mean(&full, &samples(&[&[1.0, 3.0]])).unwrap(), vec![2.0, 0.0]);
        assert!(lower_solve_mean(&Matrix::identity(3), &train).is_err());
    }

    #[test]
    fn lower_mean_agrees_with_mle_for_binary_schemes() {
        let mut rng = Rng::new(5);
        let data = gen_gaussian(
            &GaussianTask::random(6, 3, 1.0, &mut rng).unwrap(),
            20,
            &mut rng,
        )
        .unwrap();
        for part in enumerate_partitions(6).unwrap().step_by(7) {
            let scheme = scheme_from_partition(&part);
            let psi = lower_solve_mean(&scheme.matrix(), &data).unwrap();
            let theta = scheme.expand(&psi).unwrap();
            assert_eq!(theta, mle_shared_mean(&scheme, &data).unwrap().theta_hat);
            // the pseudo-inverse route agrees to rounding
            let via_pinv = pseudo_inverse(&scheme.matrix()).matvec(&data.mean()).unwrap();
            assert!(via_pinv.iter().zip(&psi).all(|(a, b)| (a - b).abs() < 1e-12));
        }
    }

    #[test]
    fn lower_regression_identity_and_modes_agree_on_balanced_design() {
        // Orthogonal design with equal column norms: XᵀX = 4I.
        let x = Matrix::from_rows(&[
            [1.0, 1.0, 1.0],
            [1.0, -1.0, 1.0],
            [1.0, 1.0, -1.0],
            [1.0, -1.0, -1.0],
        ])
        .unwrap();
        let mut rng = Rng::new(12);
        let y = Matrix::new(4, 2, rng.normal(8, 0.0, 1.0)).unwrap();
        let g_star = solve_least_squares(&x, &y).unwrap().transpose();
        let two = lower_solve_regression(&Matrix::identity(6), &x, &y, LowerMode::TwoStep).unwrap();
        assert!(two.iter().zip(g_star.as_slice()).all(|(a, b)| (a - b).abs() < 1e-12));
        for _ in 0..20 {
            let blocks = 1 + rng.next_index(6);
            let part = crate::partition::random_partition(6, blocks, &mut rng).unwrap();
            let a = scheme_from_partition(&part).matrix();
            let two = lower_solve_regression(&a, &x, &y, LowerMode::TwoStep).unwrap();
            let direct = lower_solve_regression(&a, &x, &y, LowerMode::Direct).unwrap();
            assert!(two.iter().zip(&direct).all(|(a, b)| (a - b).abs() < 1e-8), "{part:?}");
        }
        assert!(lower_solve_regression(&Matrix::from_fn(6, 6, |_, _| 1.0 / 6.0), &x, &y, LowerMode::Direct).is_err());
    }

    #[test]
    fn round_scheme_examples() {
        let binary = scheme_from_partition(&Partition::from_labels(&[0, 1, 0]));
        assert_eq!(round_scheme(&binary.matrix()), binary);
        let a = Matrix::from_rows(&[[0.6, 0.4], [0.5, 0.5]]).unwrap();
        assert_eq!(round_scheme(&a).columns(), &[0, 0]);
    }

    #[test]
    fn objective_is_zero_for_exact_binary_fit() {
        let (task, gt) = gaussian_task(3, 2, 0.0, 10, 10, 1);
        let hp = RelaxHyperparams {
            lambda_entropy: 0.0,
            lambda_nuclear: 0.0,
            ..Default::default()
        };
        let scheme = scheme_from_partition(gt.gt_partition());
        // large logits saturate the softmax onto the binary scheme
        let logits = scheme.matrix().scale(60.0);
        let obj = upper_objective(&RelaxedScheme::new(logits).unwrap(), &task, None, &hp).unwrap();
        assert!(obj.abs() < 1e-9, "{obj}");
    }

    #[test]
    fn uniform_assignment_has_smaller_nuclear_term() {
        let (task, _) = gaussian_task(4, 1, 1.0, 10, 10, 2);
        let hp = RelaxHyperparams {
            lambda_entropy: 0.0,
            lambda_nuclear: 1.0,
            ..Default::default()
        };
        let uniform = upper_evaluate(&RelaxedScheme::new(Matrix::zeros(4, 4)).unwrap(), &task, None, &hp).unwrap();
        let near_id = upper_evaluate(&RelaxedScheme::new(Matrix::identity(4).scale(8.0)).unwrap(), &task, None, &hp).unwrap();
        assert!((uniform.nuclear - 1.0).abs() < 1e-9);
        assert!(near_id.nuclear > 3.9);
    }

    #[test]
    fn entropy_gradient_vanishes_at_uniform() {
        let (task, _) = gaussian_task(3, 1, 1.0, 10, 10, 3);
        let mut hp = RelaxHyperparams {
            lambda_entropy: 1.0,
            lambda_nuclear: 0.0,
            ..Default::default()
        };
        let rs = RelaxedScheme::new(Matrix::zeros(3, 3)).unwrap();
        let with = upper_gradient(&rs, &task, None, &hp).unwrap();
        hp.lambda_entropy = 0.0;
        let without = upper_gradient(&rs, &task, None, &hp).unwrap();
        assert!(with.max_abs_diff(&without) < 1e-12);
    }

    fn relative_error(a: &Matrix, b: &Matrix) -> f64 {
        a.sub(b).unwrap().frobenius_norm() / b.frobenius_norm().max(1e-12)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = Rng::new(31);
        for trial in 0..12 {
            let k = 2 + trial % 3;
            let (task, _) = gaussian_task(k, 1 + trial % k, 1.0, 12, 15, 100 + trial as u64);
            for lower in [
                RelaxedLower::Averaging,
                RelaxedLower::Spectral { ridge: 0.0 },
                RelaxedLower::Spectral { ridge: 0.05 },
            ] {
                let hp = RelaxHyperparams {
                    lower,
                    lambda_entropy: 0.3,
                    lambda_nuclear: 0.2,
                    ..Default::default()
                };
                let logits = Matrix::new(k, k, rng.uniform(k * k, -3.0, 3.0)).unwrap();
                let rs = RelaxedScheme::new(logits.clone()).unwrap();
                let analytic = upper_gradient(&rs, &task, None, &hp).unwrap();
                let numeric = finite_diff_gradient(
                    |l| upper_objective(&RelaxedScheme::new(l.clone()).unwrap(), &task, None, &hp).unwrap(),
                    &logits,
                    1e-5,
                );
                let err = relative_error(&analytic, &numeric);
                assert!(err < 1e-3, "trial {trial} {lower:?}: {err}");
            }
        }
    }

    #[test]
    fn gradient_is_shift_invariant_per_row() {
        let (task, _) = gaussian_task(3, 2, 1.0, 10, 10, 4);
        let hp = RelaxHyperparams::default();
        let logits = Matrix::from_rows(&[[0.1, -0.5, 1.0], [2.0, 0.0, -1.0], [0.3, 0.3, 0.2]]).unwrap();
        let mut shifted = logits.clone();
        shifted.row_mut(1).iter_mut().for_each(|v| *v += 4.0);
        let g1 = upper_gradient(&RelaxedScheme::new(logits).unwrap(), &task, None, &hp).unwrap();
        let g2 = upper_gradient(&RelaxedScheme::new(shifted).unwrap(), &task, None, &hp).unwrap();
        assert!(g1.max_abs_diff(&g2) < 1e-9);
    }

    #[test]
    fn adam_step_decreases_objective() {
        let mut rng = Rng::new(8);
        for trial in 0..20 {
            let k = 2 + trial % 3;
            let (task, _) = gaussian_task(k, 1 + trial % k, 1.0, 10, 20, 200 + trial as u64);
            let hp = RelaxHyperparams::default();
            let logits = Matrix::new(k, k, rng.uniform(k * k, -2.0, 2.0)).unwrap();
            let rs = RelaxedScheme::new(logits.clone()).unwrap();
            let before = upper_objective(&rs, &task, None, &hp).unwrap();
            let grad = upper_gradient(&rs, &task, None, &hp).unwrap();
            let mut stepped = logits;
            AdamState::new((k, k), 1e-4, 0.0).step(&mut stepped, &grad).unwrap();
            let after = upper_objective(&RelaxedScheme::new(stepped).unwrap(), &task, None, &hp).unwrap();
            assert!(after < before, "trial {trial}: {before} -> {after}");
        }
    }

    #[test]
    fn brute_force_tie_goes_to_fewer_clusters() {
        let row: &[f64] = &[0.7, 0.7];
        let data = samples(&[row; 6]);
        let (t, v) = data.split_at(3).unwrap();
        let task = LinearSharedTask::mean_estimation(&t, &v).unwrap();
        let result = discover_brute_force(&task).unwrap();
        assert_eq!(result.partition, Partition::full(2));
        assert!(result.val_loss.abs() < 1e-20);
    }

    #[test]
    fn brute_force_winner_is_minimal() {
        for seed in 0..5 {
            let (task, _) = gaussian_task(5, 2, 1.0, 30, 70, seed);
            let result = discover_brute_force(&task).unwrap();
            for part in enumerate_partitions(5).unwrap() {
                let loss = scheme_validation_loss(&task, &scheme_from_partition(&part)).unwrap();
                assert!(result.val_loss <= loss + 1e-9);
            }
        }
        let (task, _) = gaussian_task(13, 1, 1.0, 5, 5, 0);
        assert!(matches!(discover_brute_force(&task), Err(Error::Capacity { .. })));
    }

    #[test]
    fn refit_on_full_data_beats_train_fit() {
        let (task, _) = gaussian_task(4, 2, 1.0, 30, 70, 6);
        let result = discover_brute_force(&task).unwrap();
        let train_fit = result.scheme.expand(&task.fit_train(&result.scheme).unwrap()).unwrap();
        assert!(task.full_loss(&result.theta()).unwrap() <= task.full_loss(&train_fit).unwrap() + 1e-12);
    }

    #[test]
    fn relaxed_is_deterministic() {
        let (task, _) = gaussian_task(3, 1, 1.0, 30, 70, 9);
        let hp = RelaxHyperparams {
            max_epochs: 50,
            ..Default::default()
        };
        let a = discover_relaxed(&task, &hp, &mut Rng::new(1)).unwrap();
        let b = discover_relaxed(&task, &hp, &mut Rng::new(1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn relaxed_recovers_noise_free_full_sharing() {
        let (task, gt) = gaussian_task(2, 1, 0.0, 30, 70, 10);
        let result = discover_relaxed(&task, &RelaxHyperparams::default(), &mut Rng::new(3)).unwrap();
        assert_eq!(result.distance_to(gt.gt_partition()).unwrap(), 0);
        assert!(result.val_loss < 1e-20);
    }

    #[test]
    fn relaxed_without_penalties_fits_noise_free_data() {
        for k in 2..=4 {
            let (task, _) = gaussian_task(k, 2.min(k), 0.0, 30, 70, 20 + k as u64);
            let hp = RelaxHyperparams {
                lambda_entropy: 0.0,
                lambda_nuclear: 0.0,
                ..Default::default()
            };
            let result = discover_relaxed(&task, &hp, &mut Rng::new(k as u64)).unwrap();
            let first = result.history[0].val_loss;
            let best = result.history.iter().map(|h| h.val_loss).fold(f64::INFINITY, f64::min);
            assert!(best <= 0.05 * first, "K = {k}: {first} -> {best}");
            // rounding lands on a scheme that represents the truth exactly
            assert!(result.val_loss < 1e-20, "K = {k}: {}", result.val_loss);
        }
    }

    #[test]
    fn minibatches_are_supported() {
        let (task, _) = gaussian_task(3, 1, 1.0, 30, 70, 11);
        let hp = RelaxHyperparams {
            minibatch_fraction: 0.3,
            max_epochs: 30,
            ..Default::default()
        };
        let result = discover_relaxed(&task, &hp, &mut Rng::new(2)).unwrap();
        assert_eq!(result.history.len(), result.epochs);
        assert!(upper_objective(
            &RelaxedScheme::new(Matrix::zeros(3, 3)).unwrap(),
            &task,
            Some(&[]),
            &hp
        )
        .is_err());
    }
}
