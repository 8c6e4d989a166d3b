//! Synthetic linear tasks with known sharing structure.
//!
//! Each generator returns a regression pair `(X, Y)` for `Y ≈ X Gᵀ`. The
//! ground-truth partitions index `G` flattened row-major.

use crate::discovery::{DiscoveryResult, RegressionData};
use crate::error::{shape_mismatch, Error, Result};
use crate::numerics::{Matrix, Rng};
use crate::partition::{partition_distance, scheme_from_partition, Partition, SharingScheme};

/// Valid-mode cross-correlation `y[k] = Σ_j x[k+j] g[j]`.
pub fn crosscorr(x: &[f64], g: &[f64]) -> Result<Vec<f64>> {
    if g.is_empty() || g.len() > x.len() {
        return Err(Error::InvalidArgument(format!(
            "kernel length {} must lie in 1..={}",
            g.len(),
            x.len()
        )));
    }
    Ok((0..=x.len() - g.len())
        .map(|k| g.iter().enumerate().map(|(j, gj)| x[k + j] * gj).sum())
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftTaskSpec {
    pub k_in: usize,
    pub kernel: Vec<f64>,
    pub noise_sigma: f64,
}

impl ShiftTaskSpec {
    /// Kernel `[1, 3, 5, ...]` and noise variance 0.1.
    pub fn new(k_in: usize, g_len: usize) -> Result<Self> {
        Self::with_kernel(k_in, (0..g_len).map(|j| (2 * j + 1) as f64).collect(), 0.1f64.sqrt())
    }

    pub fn with_kernel(k_in: usize, kernel: Vec<f64>, noise_sigma: f64) -> Result<Self> {
        if kernel.is_empty() || kernel.len() > k_in {
            return Err(Error::InvalidArgument(format!(
                "kernel length {} must lie in 1..={k_in}",
                kernel.len()
            )));
        }
        if !(noise_sigma >= 0.0) || kernel.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("kernel and noise must be finite, noise non-negative".into()));
        }
        Ok(Self {
            k_in,
            kernel,
            noise_sigma,
        })
    }

    pub fn g_len(&self) -> usize {
        self.kernel.len()
    }

    pub fn k_out(&self) -> usize {
        self.k_in - self.kernel.len() + 1
    }

    /// The generating system as a `K_out × K_in` Toeplitz matrix.
    pub fn toeplitz(&self) -> Matrix {
        Matrix::from_fn(self.k_out(), self.k_in, |k, i| {
            if i >= k && i - k < self.g_len() {
                self.kernel[i - k]
            } else {
                0.0
            }
        })
    }
}

/// Standard-normal inputs and their cross-correlations.
pub fn gen_shift_data(spec: &ShiftTaskSpec, n: usize, rng: &mut Rng, with_noise: bool) -> Result<RegressionData> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    let x = Matrix::new(n, spec.k_in, rng.normal(n * spec.k_in, 0.0, 1.0))?;
    let k_out = spec.k_out();
    let mut y = Vec::with_capacity(n * k_out);
    for i in 0..n {
        y.extend(crosscorr(x.row(i), &spec.kernel)?);
    }
    if with_noise && spec.noise_sigma > 0.0 {
        for (v, e) in y.iter_mut().zip(rng.normal(n * k_out, 0.0, spec.noise_sigma)) {
            *v += e;
        }
    }
    RegressionData::new(x, Matrix::new(n, k_out, y)?)
}

/// One cluster per kernel tap, plus one for the structural zeros.
pub fn toeplitz_gt_partition(k_in: usize, g_len: usize) -> Result<Partition> {
    if g_len == 0 || g_len > k_in {
        return Err(Error::InvalidArgument(format!("kernel length {g_len} must lie in 1..={k_in}")));
    }
    let k_out = k_in - g_len + 1;
    let labels: Vec<usize> = (0..k_out * k_in)
        .map(|idx| {
            let (k, i) = (idx / k_in, idx % k_in);
            if i >= k && i - k < g_len {
                i - k
            } else {
                g_len
            }
        })
        .collect();
    Ok(Partition::from_labels(&labels))
}

/// Partition of a square `K × K` map by diagonal offset `i − k`, i.e. a
/// shift-equivariant linear filter.
pub fn diagonal_partition(k: usize) -> Partition {
    let labels: Vec<usize> = (0..k * k).map(|idx| (idx % k) + k - idx / k).collect();
    Partition::from_labels(&labels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseTaskSpec {
    pub k: usize,
    pub noise_sigma: f64,
}

impl DenoiseTaskSpec {
    pub fn new(k: usize, noise_sigma: f64) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidArgument(format!("signal length must be at least 2, got {k}")));
        }
        if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
            return Err(Error::InvalidArgument(format!("noise sigma must be non-negative, got {noise_sigma}")));
        }
        Ok(Self { k, noise_sigma })
    }

    /// `s·U(k−t) + b` with `U(0) = 1`.
    pub fn step_signal(&self, scale: f64, offset: f64, shift: usize) -> Vec<f64> {
        (0..self.k)
            .map(|k| if k >= shift { scale + offset } else { offset })
            .collect()
    }
}

/// Noisy inputs `X` and clean step signals `Y`.
pub fn gen_denoise_data(spec: &DenoiseTaskSpec, n: usize, rng: &mut Rng) -> Result<RegressionData> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    let k = spec.k;
    let mut clean = Vec::with_capacity(n * k);
    for _ in 0..n {
        let scale = rng.next_uniform(1.0, 50.0);
        let offset = rng.next_uniform(-5.0, 5.0);
        let shift = rng.next_int(0, k as i64) as usize;
        clean.extend(spec.step_signal(scale, offset, shift));
    }
    let mut noisy = clean.clone();
    if spec.noise_sigma > 0.0 {
        for (v, e) in noisy.iter_mut().zip(rng.normal(n * k, 0.0, spec.noise_sigma)) {
            *v += e;
        }
    }
    RegressionData::new(Matrix::new(n, k, noisy)?, Matrix::new(n, k, clean)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SumTaskSpec {
    pub seq_len: usize,
    pub negated: bool,
}

impl SumTaskSpec {
    pub const LABEL_NOISE: f64 = 0.5;

    pub fn new(seq_len: usize, negated: bool) -> Result<Self> {
        if seq_len == 0 {
            return Err(Error::InvalidArgument("sequence length must be at least 1".into()));
        }
        Ok(Self { seq_len, negated })
    }

    /// Per-position sign: even positions flip in the negated variant.
    pub fn weight(&self, position: usize) -> f64 {
        if self.negated && position % 2 == 0 {
            -1.0
        } else {
            1.0
        }
    }

    pub fn label(&self, x: &[f64]) -> f64 {
        x.iter().enumerate().map(|(i, v)| self.weight(i) * v).sum()
    }
}

/// Integer inputs from {1..10} and their (signed) sums.
pub fn gen_sum_data(spec: &SumTaskSpec, n: usize, rng: &mut Rng, with_label_noise: bool) -> Result<RegressionData> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    let x: Vec<f64> = (0..n * spec.seq_len).map(|_| rng.next_int(1, 10) as f64).collect();
    let y = x
        .chunks(spec.seq_len)
        .map(|row| {
            let noise = if with_label_noise {
                rng.next_uniform(-SumTaskSpec::LABEL_NOISE, SumTaskSpec::LABEL_NOISE)
            } else {
                0.0
            };
            spec.label(row) + noise
        })
        .collect();
    RegressionData::new(Matrix::new(n, spec.seq_len, x)?, Matrix::new(n, 1, y)?)
}

pub fn sum_gt_partition(seq_len: usize, negated: bool) -> Result<Partition> {
    if seq_len == 0 {
        return Err(Error::InvalidArgument("sequence length must be at least 1".into()));
    }
    let labels: Vec<usize> = (0..seq_len).map(|i| if negated { i % 2 } else { 0 }).collect();
    Ok(Partition::from_labels(&labels))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    NoSharing,
    Oracle,
}

pub fn baseline_scheme(kind: Baseline, gt: &Partition) -> SharingScheme {
    match kind {
        Baseline::NoSharing => SharingScheme::identity(gt.k()),
        Baseline::Oracle => scheme_from_partition(gt),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub test_loss: f64,
    pub pd: usize,
}

/// Mean per-sample squared error of `Y ≈ X Gᵀ` with `G = A ψ_final`, and
/// the partition distance to `gt`.
pub fn evaluate(result: &DiscoveryResult, test: &RegressionData, gt: &Partition) -> Result<EvalReport> {
    let (p, q) = (test.x.cols(), test.y.cols());
    if result.scheme.k() != p * q {
        return Err(shape_mismatch("evaluate", p * q, result.scheme.k()));
    }
    let g = Matrix::new(q, p, result.theta())?;
    let residual = test.x.matmul(&g.transpose())?.sub(&test.y)?;
    let sse: f64 = residual.as_slice().iter().map(|v| v * v).sum();
    Ok(EvalReport {
        test_loss: sse / test.n() as f64,
        pd: partition_distance(&result.partition, gt)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discovery::{fixed_scheme, LinearSharedTask};

    #[test]
    fn crosscorr_examples() {
        assert_eq!(crosscorr(&[1.0, 0.0, 0.0], &[2.0, 1.0]).unwrap(), vec![2.0, 0.0]);
        let x = [0.3, -1.0, 2.5];
        assert_eq!(crosscorr(&x, &[1.0]).unwrap(), x.to_vec());
        // impulse at p lands g[p - k] at output k
        let g = [1.0, 3.0, 5.0];
        let mut delta = vec![0.0; 6];
        delta[3] = 1.0;
        assert_eq!(crosscorr(&delta, &g).unwrap(), vec![0.0, 5.0, 3.0, 1.0]);
        assert!(crosscorr(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn toeplitz_matches_crosscorr() {
        let spec = ShiftTaskSpec::new(5, 3).unwrap();
        assert_eq!(spec.kernel, vec![1.0, 3.0, 5.0]);
        let x = [0.5, -1.0, 2.0, 0.0, 1.5];
        assert_eq!(spec.toeplitz().matvec(&x).unwrap(), crosscorr(&x, &spec.kernel).unwrap());
    }

    #[test]
    fn toeplitz_partition_examples() {
        let p = toeplitz_gt_partition(3, 2).unwrap();
        assert_eq!(p, Partition::from_clusters(6, &[vec![0, 4], vec![1, 5], vec![2, 3]]).unwrap());
        let single = toeplitz_gt_partition(4, 4).unwrap();
        assert_eq!(single, Partition::singletons(4));
        let p = toeplitz_gt_partition(6, 2).unwrap();
        assert_eq!(p.num_clusters(), 3);
        assert_eq!(p.k(), 30);
    }

    #[test]
    fn shift_noise_free_and_seeded() {
        let spec = ShiftTaskSpec::new(4, 2).unwrap();
        let d = gen_shift_data(&spec, 5, &mut Rng::new(1), false).unwrap();
        for i in 0..5 {
            assert_eq!(d.y.row(i), crosscorr(d.x.row(i), &spec.kernel).unwrap().as_slice());
        }
        let again = gen_shift_data(&spec, 5, &mut Rng::new(1), false).unwrap();
        assert_eq!(d, again);
        let noisy = gen_shift_data(&spec, 5, &mut Rng::new(1), true).unwrap();
        assert_eq!(noisy.x, d.x);
        assert_ne!(noisy.y, d.y);
    }

    #[test]
    fn oracle_reproduces_kernel() {
        let spec = ShiftTaskSpec::new(4, 2).unwrap();
        let mut rng = Rng::new(2);
        let train = gen_shift_data(&spec, 20, &mut rng, false).unwrap();
        let val = gen_shift_data(&spec, 20, &mut rng, false).unwrap();
        let task = LinearSharedTask::regression(train, val).unwrap();
        let gt = toeplitz_gt_partition(4, 2).unwrap();
        let result = fixed_scheme(&task, baseline_scheme(Baseline::Oracle, &gt)).unwrap();
        let g = result.theta();
        assert!(g.iter().zip(spec.toeplitz().as_slice()).all(|(a, b)| (a - b).abs() < 1e-10));
        let test = gen_shift_data(&spec, 50, &mut rng, false).unwrap();
        let report = evaluate(&result, &test, &gt).unwrap();
        assert!(report.test_loss < 1e-18);
        assert_eq!(report.pd, 0);
    }

    #[test]
    fn denoise_examples() {
        let spec = DenoiseTaskSpec::new(4, 0.0).unwrap();
        assert_eq!(spec.step_signal(1.0, 0.0, 2), vec![0.0, 0.0, 1.0, 1.0]);
        assert_eq!(spec.step_signal(3.0, 1.0, 0), vec![4.0; 4]);
        let d = gen_denoise_data(&spec, 30, &mut Rng::new(4)).unwrap();
        assert_eq!(d.x, d.y);
        assert!(DenoiseTaskSpec::new(1, 1.0).is_err());
        let noisy = gen_denoise_data(&DenoiseTaskSpec::new(4, 1.0).unwrap(), 30, &mut Rng::new(4)).unwrap();
        assert_ne!(noisy.x, noisy.y);
        // every clean row is a step: non-decreasing jumps of a single size
        for i in 0..30 {
            let row = noisy.y.row(i);
            let jumps: Vec<f64> = row.windows(2).map(|w| w[1] - w[0]).filter(|d| *d != 0.0).collect();
            assert!(jumps.len() <= 1 && jumps.iter().all(|d| (1.0..=50.0).contains(d)));
            assert!((-5.0..=55.0).contains(&row[0]));
        }
    }

    #[test]
    fn sum_examples() {
        let plain = SumTaskSpec::new(2, false).unwrap();
        let neg = SumTaskSpec::new(2, true).unwrap();
        assert_eq!(plain.label(&[1.0, 5.0]), 6.0);
        assert_eq!(neg.label(&[1.0, 5.0]), 4.0);
        assert_eq!(SumTaskSpec::new(3, false).unwrap().label(&[10.0; 3]), 30.0);
        let d = gen_sum_data(&SumTaskSpec::new(3, false).unwrap(), 200, &mut Rng::new(3), false).unwrap();
        assert!(d.x.as_slice().iter().all(|v| (1.0..=10.0).contains(v) && v.fract() == 0.0));
        assert!(d.x.as_slice().contains(&1.0) && d.x.as_slice().contains(&10.0));
        let noisy = gen_sum_data(&SumTaskSpec::new(3, true).unwrap(), 200, &mut Rng::new(3), true).unwrap();
        for i in 0..200 {
            let exact = SumTaskSpec::new(3, true).unwrap().label(noisy.x.row(i));
            assert!((noisy.y.get(i, 0) - exact).abs() <= 0.5);
        }
    }

    #[test]
    fn sum_partition_examples() {
        assert_eq!(sum_gt_partition(4, false).unwrap(), Partition::full(4));
        assert_eq!(
            sum_gt_partition(4, true).unwrap(),
            Partition::from_clusters(4, &[vec![0, 2], vec![1, 3]]).unwrap()
        );
        assert_eq!(sum_gt_partition(1, true).unwrap(), Partition::full(1));
    }

    #[test]
    fn baselines_and_evaluation() {
        let gt = Partition::full(3);
        assert_eq!(baseline_scheme(Baseline::NoSharing, &gt).matrix(), Matrix::identity(3));
        let full2 = baseline_scheme(Baseline::Oracle, &Partition::full(2));
        assert_eq!(full2.columns(), &[0, 0]);

        let spec = SumTaskSpec::new(5, false).unwrap();
        let mut rng = Rng::new(6);
        let train = gen_sum_data(&spec, 20, &mut rng, true).unwrap();
        let val = gen_sum_data(&spec, 20, &mut rng, true).unwrap();
        let task = LinearSharedTask::regression(train, val).unwrap();
        let gt = sum_gt_partition(5, false).unwrap();
        let none = fixed_scheme(&task, baseline_scheme(Baseline::NoSharing, &gt)).unwrap();
        let test = gen_sum_data(&spec, 100, &mut rng, false).unwrap();
        let report = evaluate(&none, &test, &gt).unwrap();
        assert_eq!(report.pd, 4);
        assert!(report.test_loss >= 0.0);
        let wrong = gen_sum_data(&SumTaskSpec::new(4, false).unwrap(), 5, &mut rng, false).unwrap();
        assert!(evaluate(&none, &wrong, &gt).is_err());
    }

    #[test]
    fn diagonal_partition_counts() {
        let p = diagonal_partition(3);
        assert_eq!(p.num_clusters(), 5);
        assert_eq!(p.label_of(0), p.label_of(4));
        assert_eq!(p.label_of(4), p.label_of(8));
        assert_eq!(p.label_of(1), p.label_of(5));
    }
}
