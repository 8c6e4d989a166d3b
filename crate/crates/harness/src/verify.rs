//! Monte-Carlo and exhaustive checks of the analytical results, plus the
//! `pd` command.

use std::fmt;
use std::path::Path;

use eqdisc_core::discovery::{fixed_scheme, LinearSharedTask};
use eqdisc_core::gaussian::{
    chi2_tail_check, claim2_bound, claim2_curve, gen_gaussian, mc_mse, mse_closed_form, squared_error, Chi2Tail,
    GaussianTask, McEstimate,
};
use eqdisc_core::numerics::derive_rng;
use eqdisc_core::partition::{
    claim3_check, enumerate_partitions, parse_partition, partition_distance, random_partition, scheme_from_partition,
    Partition, SharingScheme, MAX_ENUMERATION,
};
use rayon::prelude::*;

use crate::config::{Experiment, ExperimentConfig, Method};
use crate::error::{HarnessError, Result};
use crate::experiment::{solve, with_pool};

/// Standard errors allowed between a Monte-Carlo mean and its prediction.
pub const MC_Z: f64 = 3.0;

/// Number of random (scheme, θ_gt) configurations checked per dimension.
pub const CLAIM1_CONFIGS: usize = 20;

/// Tail multipliers checked per dimension.
pub const CHI2_T: [f64; 2] = [1.0, 2.0];

fn expect(cfg: &ExperimentConfig, experiment: Experiment) -> Result<()> {
    if cfg.experiment != experiment {
        return Err(HarnessError::Config(format!(
            "expected a {} config, got {}",
            experiment.name(),
            cfg.experiment.name()
        )));
    }
    cfg.validate()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Claim1Case {
    pub k: usize,
    pub scheme_rank: usize,
    pub gt_rank: usize,
    pub predicted: f64,
    pub empirical: McEstimate,
}

impl Claim1Case {
    pub fn holds(&self) -> bool {
        self.empirical.covers(self.predicted, MC_Z)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Claim1Report {
    pub cases: Vec<Claim1Case>,
}

impl Claim1Report {
    pub fn holds(&self) -> bool {
        self.cases.iter().all(Claim1Case::holds)
    }
}

impl fmt::Display for Claim1Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>3} {:>6} {:>7} {:>10} {:>10} {:>9} {:>5}", "K", "rank", "gt-rank", "predicted", "empirical", "se", "ok")?;
        for c in &self.cases {
            writeln!(
                f,
                "{:>3} {:>6} {:>7} {:>10.5} {:>10.5} {:>9.5} {:>5}",
                c.k,
                c.scheme_rank,
                c.gt_rank,
                c.predicted,
                c.empirical.mean,
                c.empirical.std_error,
                c.holds()
            )?;
        }
        let passed = self.cases.iter().filter(|c| c.holds()).count();
        write!(f, "{passed}/{} configurations within {MC_Z} standard errors", self.cases.len())
    }
}

/// Empirical MSE of fixed sharing schemes against the closed form. The
/// first configuration per dimension uses the identity scheme, the others
/// draw both the ground-truth and the estimator partition at random.
pub fn verify_claim1(cfg: &ExperimentConfig) -> Result<Claim1Report> {
    expect(cfg, Experiment::Claim1)?;
    let jobs: Vec<(usize, usize)> = cfg
        .dims
        .iter()
        .flat_map(|&k| (0..CLAIM1_CONFIGS).map(move |i| (k, i)))
        .collect();
    let cases = with_pool(cfg.threads, || {
        jobs.par_iter()
            .enumerate()
            .map(|(job, &(k, i))| -> Result<Claim1Case> {
                let mut rng = derive_rng(cfg.base_seed, job as u64);
                let gt_rank = 1 + rng.next_index(k);
                let task = GaussianTask::random(k, gt_rank, cfg.sigma, &mut rng)?;
                let scheme = if i == 0 {
                    SharingScheme::identity(k)
                } else {
                    let rank = 1 + rng.next_index(k);
                    scheme_from_partition(&random_partition(k, rank, &mut rng)?)
                };
                let predicted = mse_closed_form(&scheme, task.theta_gt(), cfg.sigma, cfg.n_total)?;
                let empirical = mc_mse(&scheme, &task, cfg.n_total, cfg.runs, &mut rng)?;
                Ok(Claim1Case {
                    k,
                    scheme_rank: scheme.rank(),
                    gt_rank,
                    predicted,
                    empirical,
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(Claim1Report { cases })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Claim2Report {
    pub k: usize,
    pub method: Method,
    /// Per-run `‖θ̂_val − θ_gt‖² − ‖θ̂_gt − θ_gt‖²`.
    pub gap: McEstimate,
    pub mse_val: f64,
    pub mse_gt: f64,
    pub bound: f64,
    /// `(r, bound)` over [`claim2_ratio_grid`].
    pub curve: Vec<(f64, f64)>,
}

impl Claim2Report {
    pub fn holds(&self) -> bool {
        self.gap.mean <= self.bound
    }
}

impl fmt::Display for Claim2Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "K={} discovery={} runs={}", self.k, self.method, self.gap.runs)?;
        writeln!(f, "mse(discovered)={:.6} mse(oracle)={:.6}", self.mse_val, self.mse_gt)?;
        writeln!(
            f,
            "gap={:.6} (se {:.6}) bound={:.6} holds={}",
            self.gap.mean,
            self.gap.std_error,
            self.bound,
            self.holds()
        )?;
        write!(f, "bound curve:")?;
        for (r, b) in &self.curve {
            write!(f, " {r:.2}:{b:.4}")?;
        }
        Ok(())
    }
}

/// Train ratios 0.05, 0.10, ..., 0.95.
pub fn claim2_ratio_grid() -> Vec<f64> {
    (1..20).map(|i| i as f64 / 20.0).collect()
}

/// Gap between the discovered scheme and the ground-truth scheme, both
/// refit on all of D. Discovery is exhaustive up to the enumeration limit
/// and relaxed beyond it.
pub fn verify_claim2(cfg: &ExperimentConfig) -> Result<Vec<Claim2Report>> {
    expect(cfg, Experiment::Claim2)?;
    cfg.dims.iter().map(|&k| claim2_for(&cfg.with_dim(k))).collect()
}

fn claim2_for(cfg: &ExperimentConfig) -> Result<Claim2Report> {
    let k = cfg.dim();
    let method = if k <= MAX_ENUMERATION { Method::Brute } else { Method::Relaxed };
    let (n_train, _) = cfg.split_sizes();
    let pairs = with_pool(cfg.threads, || {
        (0..cfg.runs)
            .into_par_iter()
            .map(|run| -> Result<(f64, f64)> {
                let mut rng = derive_rng(cfg.base_seed, run as u64);
                let truth = GaussianTask::random(k, cfg.rank_gt, cfg.sigma, &mut rng)?;
                let data = gen_gaussian(&truth, cfg.n_total, &mut rng)?;
                let (train, val) = data.split_at(n_train)?;
                let task = LinearSharedTask::mean_estimation(&train, &val)?;
                let found = solve(method, &task, truth.gt_partition(), cfg, &mut rng)?;
                let oracle = fixed_scheme(&task, scheme_from_partition(truth.gt_partition()))?;
                Ok((
                    squared_error(&found.theta(), truth.theta_gt()),
                    squared_error(&oracle.theta(), truth.theta_gt()),
                ))
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let runs = pairs.len() as f64;
    let gaps: Vec<f64> = pairs.iter().map(|(v, g)| v - g).collect();
    Ok(Claim2Report {
        k,
        method,
        gap: McEstimate::from_values(&gaps)?,
        mse_val: pairs.iter().map(|p| p.0).sum::<f64>() / runs,
        mse_gt: pairs.iter().map(|p| p.1).sum::<f64>() / runs,
        bound: claim2_bound(cfg.rank_gt, cfg.sigma, cfg.n_total, cfg.train_ratio, cfg.alpha)?,
        curve: claim2_curve(cfg.rank_gt, cfg.sigma, cfg.n_total, cfg.alpha, &claim2_ratio_grid())?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Claim3Report {
    pub k: usize,
    pub pairs: usize,
    pub failures: Vec<(Partition, Partition)>,
    /// Largest `|G1 Δ G2| / PD` seen.
    pub max_ratio: f64,
    pub kappa: usize,
}

impl Claim3Report {
    pub fn holds(&self) -> bool {
        self.failures.is_empty()
    }
}

impl fmt::Display for Claim3Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "K={}: {}/{} pairs satisfy PD <= |G1 delta G2| <= {}*PD (max ratio {:.2})",
            self.k,
            self.pairs - self.failures.len(),
            self.pairs,
            self.kappa,
            self.max_ratio
        )?;
        for (a, b) in &self.failures {
            write!(f, "\n  fails: {:?} vs {:?}", a.labels(), b.labels())?;
        }
        Ok(())
    }
}

/// Every unordered pair of distinct partitions of `0..K`.
pub fn verify_claim3(cfg: &ExperimentConfig) -> Result<Vec<Claim3Report>> {
    expect(cfg, Experiment::Claim3)?;
    cfg.dims.iter().map(|&k| claim3_for(k)).collect()
}

fn claim3_for(k: usize) -> Result<Claim3Report> {
    let all: Vec<Partition> = enumerate_partitions(k)?.collect();
    let mut report = Claim3Report {
        k,
        pairs: 0,
        failures: Vec::new(),
        max_ratio: 0.0,
        kappa: (1..=k).product::<usize>() - 1,
    };
    for (i, a) in all.iter().enumerate() {
        for b in &all[i + 1..] {
            let check = claim3_check(a, b)?;
            report.pairs += 1;
            if check.distance > 0 {
                report.max_ratio = report
                    .max_ratio
                    .max(check.symmetric_difference as f64 / check.distance as f64);
            }
            if !check.holds() {
                report.failures.push((a.clone(), b.clone()));
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chi2Cell {
    pub k: usize,
    pub t: f64,
    pub tail: Chi2Tail,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chi2Report {
    pub samples: usize,
    pub cells: Vec<Chi2Cell>,
}

impl Chi2Report {
    pub fn holds(&self) -> bool {
        self.cells.iter().all(|c| c.tail.holds())
    }
}

impl fmt::Display for Chi2Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>3} {:>3} {:>10} {:>10} {:>5}", "K", "t", "empirical", "bound", "ok")?;
        for c in &self.cells {
            writeln!(
                f,
                "{:>3} {:>3} {:>10.6} {:>10.6} {:>5}",
                c.k,
                c.t,
                c.tail.empirical,
                c.tail.bound,
                c.tail.holds()
            )?;
        }
        write!(f, "{} samples per cell", self.samples)
    }
}

/// `P(χ²_K ≥ 2tK) ≤ exp(−tK/10)` over the grid `dims × {1, 2}`.
pub fn verify_chi2(cfg: &ExperimentConfig) -> Result<Chi2Report> {
    expect(cfg, Experiment::Chi2)?;
    let grid: Vec<(usize, f64)> = cfg
        .dims
        .iter()
        .flat_map(|&k| CHI2_T.into_iter().map(move |t| (k, t)))
        .collect();
    let cells = with_pool(cfg.threads, || {
        grid.par_iter()
            .enumerate()
            .map(|(cell, &(k, t))| {
                let mut rng = derive_rng(cfg.base_seed, cell as u64);
                Ok(Chi2Cell {
                    k,
                    t,
                    tail: chi2_tail_check(k, t, cfg.runs, &mut rng)?,
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(Chi2Report {
        samples: cfg.runs,
        cells,
    })
}

/// Reads a partition file, mapping syntax errors to file positions.
pub fn read_partition(path: &Path) -> Result<Partition> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_partition(&text).map_err(|e| HarnessError::Parse {
        path: path.to_path_buf(),
        line: e.line,
        column: e.column,
        message: e.message,
    })
}

/// Partition distance between two partition files.
pub fn pd_command(first: &Path, second: &Path) -> Result<usize> {
    let a = read_partition(first)?;
    let b = read_partition(second)?;
    if a.k() != b.k() {
        return Err(HarnessError::Config(format!(
            "partitions have different sizes: {} has K={}, {} has K={}",
            first.display(),
            a.k(),
            second.display(),
            b.k()
        )));
    }
    Ok(partition_distance(&a, &b)?)
}
