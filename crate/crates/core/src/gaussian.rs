//! Shared-mean Gaussian task: `y ~ N(A_gt ψ_gt, σ² I)`.
//!
//! Covers sampling, the maximum-likelihood mean under a fixed sharing scheme,
//! the closed-form MSE of that estimator, the validation loss the discovery
//! procedure minimizes, the finite-sample bound on the MSE gap between a
//! discovered and the true scheme, and a Monte-Carlo check of the χ² tail
//! bound used to derive it.

use crate::error::{shape_mismatch, Error, Result};
use crate::numerics::{Matrix, Rng};
use crate::partition::{random_partition, scheme_from_partition, Partition, SharingScheme};

/// Ground truth of a shared-mean task.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianTask {
    gt_partition: Partition,
    psi_gt: Vec<f64>,
    sigma: f64,
    theta_gt: Vec<f64>,
}

impl GaussianTask {
    /// `psi_gt` has one entry per index; the value of cluster ℓ sits at
    /// position ℓ and trailing entries are unused.
    pub fn new(gt_partition: Partition, psi_gt: Vec<f64>, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma must be non-negative, got {sigma}")));
        }
        let theta_gt = scheme_from_partition(&gt_partition).expand(&psi_gt)?;
        Ok(Self {
            gt_partition,
            psi_gt,
            sigma,
            theta_gt,
        })
    }

    /// Random ground truth with exactly `rank` clusters, chosen uniformly, and
    /// cluster means uniform on [−1, 1].
    pub fn random(k: usize, rank: usize, sigma: f64, rng: &mut Rng) -> Result<Self> {
        let gt = random_partition(k, rank, rng)?;
        let mut psi = vec![0.0; k];
        for v in psi.iter_mut().take(rank) {
            *v = rng.next_uniform(-1.0, 1.0);
        }
        Self::new(gt, psi, sigma)
    }

    pub fn k(&self) -> usize {
        self.theta_gt.len()
    }

    pub fn gt_partition(&self) -> &Partition {
        &self.gt_partition
    }

    pub fn psi_gt(&self) -> &[f64] {
        &self.psi_gt
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn theta_gt(&self) -> &[f64] {
        &self.theta_gt
    }
}

/// `n` samples stored as the rows of an n×K matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    samples: Matrix,
}

impl SampleSet {
    pub fn new(samples: Matrix) -> Result<Self> {
        if samples.rows() == 0 {
            return Err(Error::InvalidArgument("a sample set needs at least one sample".into()));
        }
        Ok(Self { samples })
    }

    pub fn n(&self) -> usize {
        self.samples.rows()
    }

    pub fn k(&self) -> usize {
        self.samples.cols()
    }

    pub fn samples(&self) -> &Matrix {
        &self.samples
    }

    pub fn mean(&self) -> Vec<f64> {
        self.samples.column_means()
    }

    /// Samples at the given row indices.
    pub fn subset(&self, idx: &[usize]) -> Result<SampleSet> {
        SampleSet::new(self.samples.select_rows(idx))
    }

    /// First `n_first` rows and the remainder.
    pub fn split_at(&self, n_first: usize) -> Result<(SampleSet, SampleSet)> {
        let first: Vec<usize> = (0..n_first).collect();
        let rest: Vec<usize> = (n_first..self.n()).collect();
        Ok((self.subset(&first)?, self.subset(&rest)?))
    }
}

/// Maximum-likelihood mean under a fixed scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanEstimate {
    pub theta_hat: Vec<f64>,
    pub psi_hat: Vec<f64>,
    pub scheme: SharingScheme,
}

pub fn gen_gaussian(task: &GaussianTask, n: usize, rng: &mut Rng) -> Result<SampleSet> {
    let k = task.k();
    let mut data = Vec::with_capacity(n * k);
    for _ in 0..n {
        for &mean in task.theta_gt() {
            data.push(mean + task.sigma * rng.next_normal());
        }
    }
    SampleSet::new(Matrix::new(n, k, data)?)
}

/// Averages each cluster over its indices and all samples.
pub fn mle_shared_mean(scheme: &SharingScheme, data: &SampleSet) -> Result<MeanEstimate> {
    if scheme.k() != data.k() {
        return Err(shape_mismatch("mle_shared_mean", scheme.k(), data.k()));
    }
    let means = data.mean();
    let psi_hat = cluster_average(scheme, &means);
    let theta_hat = scheme.expand(&psi_hat)?;
    Ok(MeanEstimate {
        theta_hat,
        psi_hat,
        scheme: scheme.clone(),
    })
}

/// Per-column average of `values` over the rows selecting that column;
/// zero for unused columns.
pub(crate) fn cluster_average(scheme: &SharingScheme, values: &[f64]) -> Vec<f64> {
    let k = scheme.k();
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (&c, &v) in scheme.columns().iter().zip(values) {
        sums[c] += v;
        counts[c] += 1;
    }
    sums.iter()
        .zip(&counts)
        .map(|(&s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect()
}

/// `Σ_{y ∈ val} ‖θ̂ − y‖²`.
pub fn validation_loss(theta_hat: &[f64], val: &SampleSet) -> Result<f64> {
    if theta_hat.len() != val.k() {
        return Err(shape_mismatch("validation_loss", val.k(), theta_hat.len()));
    }
    let m = val.samples();
    Ok((0..m.rows())
        .map(|i| {
            m.row(i)
                .iter()
                .zip(theta_hat)
                .map(|(y, t)| (t - y) * (t - y))
                .sum::<f64>()
        })
        .sum())
}

/// Squared bias `‖A Āᵀ θ_gt − θ_gt‖²` of the shared-mean estimator.
pub fn sharing_bias(scheme: &SharingScheme, theta_gt: &[f64]) -> Result<f64> {
    if scheme.k() != theta_gt.len() {
        return Err(shape_mismatch("sharing_bias", scheme.k(), theta_gt.len()));
    }
    let averaged = scheme.expand(&cluster_average(scheme, theta_gt))?;
    Ok(averaged
        .iter()
        .zip(theta_gt)
        .map(|(a, t)| (a - t) * (a - t))
        .sum())
}

/// Exact MSE of the shared-mean estimator on `n` samples:
/// squared bias plus `rank(A)·σ²/n`.
pub fn mse_closed_form(scheme: &SharingScheme, theta_gt: &[f64], sigma: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let bias = sharing_bias(scheme, theta_gt)?;
    Ok(bias + scheme.rank() as f64 * sigma * sigma / n as f64)
}

/// Monte-Carlo mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub runs: usize,
}

impl McEstimate {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        let n = values.len();
        if n < 2 {
            return Err(Error::InvalidArgument("need at least two Monte-Carlo runs".into()));
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        Ok(Self {
            mean,
            std_error: (var / n as f64).sqrt(),
            runs: n,
        })
    }

    /// Whether `target` lies within `z` standard errors of the mean.
    pub fn covers(&self, target: f64, z: f64) -> bool {
        (self.mean - target).abs() <= z * self.std_error
    }
}

/// Empirical `E‖θ̂(D) − θ_gt‖²` over `runs` fresh datasets of size `n`.
pub fn mc_mse(
    scheme: &SharingScheme,
    task: &GaussianTask,
    n: usize,
    runs: usize,
    rng: &mut Rng,
) -> Result<McEstimate> {
    if runs < 2 {
        return Err(Error::InvalidArgument("mc_mse needs at least two runs".into()));
    }
    let mut errors = Vec::with_capacity(runs);
    for _ in 0..runs {
        let data = gen_gaussian(task, n, rng)?;
        let est = mle_shared_mean(scheme, &data)?;
        errors.push(squared_error(&est.theta_hat, task.theta_gt()));
    }
    McEstimate::from_values(&errors)
}

pub fn squared_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Rejects confidence levels outside `0 < α < exp(−K/10)`.
pub fn check_alpha(k: usize, alpha: f64) -> Result<()> {
    let limit = (-(k as f64) / 10.0).exp();
    if !(alpha > 0.0 && alpha < limit) {
        return Err(Error::InvalidArgument(format!(
            "alpha must satisfy 0 < alpha < exp(-K/10) = {limit:.6} for K = {k}, got {alpha}"
        )));
    }
    Ok(())
}

/// Upper bound on `MSE(θ̂_val(D)) − MSE(θ̂_gt(D))`, holding with probability
/// `1 − α`:
///
/// `σ²·[(1−r)/(r·n)·(rank_gt − 1) − 40·ln(α)/((1−r)·n)]`
pub fn claim2_bound(rank_gt: usize, sigma: f64, n_total: usize, r: f64, alpha: f64) -> Result<f64> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::InvalidArgument(format!("train ratio must lie in (0, 1), got {r}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if rank_gt == 0 || n_total == 0 {
        return Err(Error::InvalidArgument("rank_gt and n_total must be positive".into()));
    }
    let n = n_total as f64;
    let sharing = (1.0 - r) / (r * n) * (rank_gt as f64 - 1.0);
    let confidence = -40.0 * alpha.ln() / ((1.0 - r) * n);
    Ok(sigma * sigma * (sharing + confidence))
}

/// The bound evaluated over a grid of train ratios.
pub fn claim2_curve(
    rank_gt: usize,
    sigma: f64,
    n_total: usize,
    alpha: f64,
    ratios: &[f64],
) -> Result<Vec<(f64, f64)>> {
    ratios
        .iter()
        .map(|&r| Ok((r, claim2_bound(rank_gt, sigma, n_total, r, alpha)?)))
        .collect()
}

/// Estimated `P(U ≥ 2tK)` for `U ~ χ²_K`, next to the bound `exp(−tK/10)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chi2Tail {
    pub empirical: f64,
    pub bound: f64,
}

impl Chi2Tail {
    pub fn holds(&self) -> bool {
        self.empirical <= self.bound
    }
}

pub fn chi2_tail_bound(k: usize, t: f64) -> f64 {
    (-t * k as f64 / 10.0).exp()
}

pub fn chi2_tail_check(k: usize, t: f64, samples: usize, rng: &mut Rng) -> Result<Chi2Tail> {
    if t < 1.0 {
        return Err(Error::InvalidArgument(format!("t must be at least 1, got {t}")));
    }
    if samples < 10_000 {
        return Err(Error::InvalidArgument(format!(
            "at least 10^4 samples required, got {samples}"
        )));
    }
    let threshold = 2.0 * t * k as f64;
    let hits = (0..samples)
        .filter(|_| {
            let u: f64 = (0..k).map(|_| rng.next_normal().powi(2)).sum();
            u >= threshold
        })
        .count();
    Ok(Chi2Tail {
        empirical: hits as f64 / samples as f64,
        bound: chi2_tail_bound(k, t),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::pseudo_inverse;

    fn p(k: usize, clusters: &[&[usize]]) -> Partition {
        let owned: Vec<Vec<usize>> = clusters.iter().map(|c| c.to_vec()).collect();
        Partition::from_clusters(k, &owned).unwrap()
    }

    fn samples(rows: &[&[f64]]) -> SampleSet {
        SampleSet::new(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn zero_sigma_rows_equal_theta() {
        let task = GaussianTask::new(p(3, &[&[0, 2], &[1]]), vec![0.5, -2.0, 0.0], 0.0).unwrap();
        assert_eq!(task.theta_gt(), &[0.5, -2.0, 0.5]);
        let data = gen_gaussian(&task, 5, &mut Rng::new(1)).unwrap();
        for i in 0..5 {
            assert_eq!(data.samples().row(i), task.theta_gt());
        }
    }

    #[test]
    fn sampling_is_seeded_and_unbiased() {
        let task = GaussianTask::new(Partition::singletons(3), vec![1.0, -1.0, 3.0], 1.0).unwrap();
        let a = gen_gaussian(&task, 10, &mut Rng::new(4)).unwrap();
        let b = gen_gaussian(&task, 10, &mut Rng::new(4)).unwrap();
        assert_eq!(a, b);
        let n = 100_000;
        let big = gen_gaussian(&task, n, &mut Rng::new(5)).unwrap();
        for (m, t) in big.mean().iter().zip(task.theta_gt()) {
            assert!((m - t).abs() < 4.0 / (n as f64).sqrt());
        }
    }

    #[test]
    fn mle_examples() {
        let data = samples(&[&[1.0, 2.0, 3.0], &[3.0, 2.0, 0.0]]);
        let est = mle_shared_mean(&SharingScheme::identity(3), &data).unwrap();
        assert_eq!(est.theta_hat, data.mean());

        let full = scheme_from_partition(&Partition::full(2));
        let est = mle_shared_mean(&full, &samples(&[&[1.0, 3.0]])).unwrap();
        assert_eq!(est.theta_hat, vec![2.0, 2.0]);
        assert_eq!(est.psi_hat, vec![2.0, 0.0]);

        let scheme = scheme_from_partition(&p(3, &[&[0, 1], &[2]]));
        let est = mle_shared_mean(&scheme, &samples(&[&[0.0, 2.0, 5.0]])).unwrap();
        assert_eq!(est.theta_hat, vec![1.0, 1.0, 5.0]);
        assert_eq!(scheme.expand(&est.psi_hat).unwrap(), est.theta_hat);

        assert!(mle_shared_mean(&SharingScheme::identity(2), &data).is_err());
    }

    #[test]
    fn validation_loss_examples() {
        let val = samples(&[&[1.0, 1.0]]);
        assert_eq!(validation_loss(&[1.0, 1.0], &val).unwrap(), 0.0);
        assert_eq!(validation_loss(&[0.0, 0.0], &val).unwrap(), 2.0);
        let val = samples(&[&[1.0, 0.0], &[3.0, 1.0], &[2.0, 5.0]]);
        let best = validation_loss(&val.mean(), &val).unwrap();
        for d in [0.1, -0.3, 1.0] {
            let shifted: Vec<f64> = val.mean().iter().map(|m| m + d).collect();
            assert!(validation_loss(&shifted, &val).unwrap() > best);
        }
        assert!(validation_loss(&[0.0], &val).is_err());
    }

    #[test]
    fn closed_form_examples() {
        let theta = [0.3, -1.0, 2.0, 0.7];
        let id = SharingScheme::identity(4);
        assert_eq!(mse_closed_form(&id, &theta, 2.0, 10).unwrap(), 4.0 * 4.0 / 10.0);
        let full = scheme_from_partition(&Partition::full(3));
        assert!((mse_closed_form(&full, &[0.5; 3], 1.5, 9).unwrap() - 2.25 / 9.0).abs() < 1e-15);
        let full2 = scheme_from_partition(&Partition::full(2));
        assert!((mse_closed_form(&full2, &[0.0, 2.0], 1.0, 100).unwrap() - 2.01).abs() < 1e-12);
    }

    #[test]
    fn bias_matches_matrix_expression() {
        // A Āᵀ with Ā the column-normalized A; for binary A, Āᵀ = A⁺.
        let scheme = scheme_from_partition(&p(5, &[&[0, 3], &[1, 2, 4]]));
        let a = scheme.matrix();
        let a_bar = Matrix::from_fn(5, 5, |i, j| {
            let count: f64 = (0..5).map(|r| a.get(r, j)).sum();
            if count == 0.0 { 0.0 } else { a.get(i, j) / count }
        });
        assert!(a_bar.transpose().max_abs_diff(&pseudo_inverse(&a)) < 1e-12);
        let theta = [0.1, 0.9, -0.4, 1.3, 2.0];
        let projected = a.matmul(&a_bar.transpose()).unwrap().matvec(&theta).unwrap();
        let expected = squared_error(&projected, &theta);
        assert!((sharing_bias(&scheme, &theta).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn refinement_of_truth_is_unbiased() {
        let gt = p(4, &[&[0, 1, 3], &[2]]);
        let task = GaussianTask::new(gt.clone(), vec![0.4, -0.2, 0.0, 0.0], 1.0).unwrap();
        let fine = p(4, &[&[0, 3], &[1], &[2]]);
        assert_eq!(sharing_bias(&scheme_from_partition(&fine), task.theta_gt()).unwrap(), 0.0);
        assert!(sharing_bias(&scheme_from_partition(&Partition::full(4)), task.theta_gt()).unwrap() > 0.0);
    }

    #[test]
    fn monte_carlo_identity_matches_no_sharing_formula() {
        let task = GaussianTask::new(Partition::singletons(4), vec![0.1, 0.2, -0.3, 0.4], 1.0).unwrap();
        let est = mc_mse(&SharingScheme::identity(4), &task, 50, 20_000, &mut Rng::new(9)).unwrap();
        assert!(est.covers(0.08, 3.0), "{est:?}");
        let zero = GaussianTask::new(Partition::full(3), vec![1.0, 0.0, 0.0], 0.0).unwrap();
        let est = mc_mse(&scheme_from_partition(&Partition::full(3)), &zero, 5, 10, &mut Rng::new(1)).unwrap();
        assert_eq!(est.mean, 0.0);
    }

    #[test]
    fn claim2_examples() {
        let alpha = 0.05f64;
        let b = claim2_bound(1, 1.3, 80, 0.4, alpha).unwrap();
        assert!((b - (-40.0 * alpha.ln() * 1.69 / (0.6 * 80.0))).abs() < 1e-12);
        // by hand: 0.5/(0.5·100)·2 + 40/(0.5·100) = 0.02 + 0.8
        let b = claim2_bound(3, 1.0, 100, 0.5, (-1.0f64).exp()).unwrap();
        assert!((b - 0.82).abs() < 1e-12, "{b}");
        assert!(claim2_bound(2, 1.0, 100, 1.0, 0.1).is_err());
        assert!(check_alpha(20, 0.1).is_ok());
        assert!(check_alpha(30, 0.1).is_err());
    }

    #[test]
    fn claim2_curve_is_valley_shaped() {
        let grid: Vec<f64> = (1..100).map(|i| i as f64 / 100.0).collect();
        for rank in 2..6 {
            let curve = claim2_curve(rank, 1.0, 100, 0.1, &grid).unwrap();
            let argmin = curve
                .iter()
                .enumerate()
                .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
                .unwrap()
                .0;
            assert!(argmin > 0 && argmin < grid.len() - 1);
            assert!(curve[..=argmin].windows(2).all(|w| w[1].1 <= w[0].1));
            assert!(curve[argmin..].windows(2).all(|w| w[1].1 >= w[0].1));
        }
    }

    #[test]
    fn chi2_examples() {
        assert_eq!(chi2_tail_bound(10, 1.0), (-1.0f64).exp());
        let c = chi2_tail_check(5, 1.0, 100_000, &mut Rng::new(3)).unwrap();
        assert!(c.holds() && c.empirical > 0.0, "{c:?}");
        let c = chi2_tail_check(10, 2.0, 100_000, &mut Rng::new(3)).unwrap();
        assert!(c.holds(), "{c:?}");
        assert!(chi2_tail_check(5, 0.5, 100_000, &mut Rng::new(3)).is_err());
        assert!(chi2_tail_check(5, 1.0, 100, &mut Rng::new(3)).is_err());
    }
}
