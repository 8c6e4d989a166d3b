//! Seeded, parallel experiment runs and their aggregation.

use std::collections::BTreeMap;
use std::time::Instant;

use eqdisc_core::discovery::{
    discover_brute_force, discover_relaxed, fixed_scheme, DiscoveryResult, LinearSharedTask, RegressionData,
};
use eqdisc_core::gaussian::{gen_gaussian, squared_error, GaussianTask};
use eqdisc_core::lintasks::{
    baseline_scheme, diagonal_partition, evaluate, gen_denoise_data, gen_shift_data, gen_sum_data, sum_gt_partition,
    toeplitz_gt_partition, Baseline, DenoiseTaskSpec, ShiftTaskSpec, SumTaskSpec,
};
use eqdisc_core::numerics::{derive_rng, Rng};
use eqdisc_core::partition::{partition_distance, scheme_from_partition, Partition};
use rayon::prelude::*;

use crate::config::{Experiment, ExperimentConfig, Method};
use crate::error::{HarnessError, Result};

/// One method applied to one seeded dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub method: Method,
    /// Parameter MSE for Gaussian runs, mean test loss for the linear tasks.
    pub metric_mse: f64,
    pub metric_pd: usize,
    pub epochs: usize,
    pub wall_time_s: f64,
}

/// A generated problem: the bi-level task plus what it is scored against.
enum Instance {
    Gaussian {
        task: LinearSharedTask,
        truth: GaussianTask,
    },
    Linear {
        task: LinearSharedTask,
        test: RegressionData,
        truth: Partition,
    },
}

impl Instance {
    fn generate(cfg: &ExperimentConfig, rng: &mut Rng) -> Result<Self> {
        let k = cfg.dim();
        let (n_train, n_val) = cfg.split_sizes();
        let linear = |train, val, test, truth| -> Result<Instance> {
            Ok(Instance::Linear {
                task: LinearSharedTask::regression(train, val)?,
                test,
                truth,
            })
        };
        match cfg.experiment {
            Experiment::Gaussian => {
                let truth = GaussianTask::random(k, cfg.rank_gt, cfg.sigma, rng)?;
                let data = gen_gaussian(&truth, cfg.n_total, rng)?;
                let (train, val) = data.split_at(n_train)?;
                Ok(Instance::Gaussian {
                    task: LinearSharedTask::mean_estimation(&train, &val)?,
                    truth,
                })
            }
            Experiment::Shift => {
                let spec = ShiftTaskSpec::new(k, cfg.kernel_len)?;
                let train = gen_shift_data(&spec, n_train, rng, true)?;
                let val = gen_shift_data(&spec, n_val, rng, true)?;
                let test = gen_shift_data(&spec, cfg.test_size, rng, false)?;
                linear(train, val, test, toeplitz_gt_partition(k, cfg.kernel_len)?)
            }
            Experiment::Denoise => {
                let spec = DenoiseTaskSpec::new(k, cfg.sigma)?;
                let train = gen_denoise_data(&spec, n_train, rng)?;
                let val = gen_denoise_data(&spec, n_val, rng)?;
                let test = gen_denoise_data(&spec, cfg.test_size, rng)?;
                linear(train, val, test, diagonal_partition(k))
            }
            Experiment::Sum => {
                let spec = SumTaskSpec::new(cfg.seq_len, cfg.negated)?;
                let train = gen_sum_data(&spec, n_train, rng, true)?;
                let val = gen_sum_data(&spec, n_val, rng, true)?;
                let test = gen_sum_data(&spec, cfg.test_size, rng, false)?;
                linear(train, val, test, sum_gt_partition(cfg.seq_len, cfg.negated)?)
            }
            other => Err(HarnessError::Config(format!("{} is not a run experiment", other.name()))),
        }
    }

    fn task(&self) -> &LinearSharedTask {
        match self {
            Instance::Gaussian { task, .. } | Instance::Linear { task, .. } => task,
        }
    }

    fn truth(&self) -> &Partition {
        match self {
            Instance::Gaussian { truth, .. } => truth.gt_partition(),
            Instance::Linear { truth, .. } => truth,
        }
    }

    fn score(&self, result: &DiscoveryResult) -> Result<(f64, usize)> {
        match self {
            Instance::Gaussian { truth, .. } => Ok((
                squared_error(&result.theta(), truth.theta_gt()),
                partition_distance(&result.partition, truth.gt_partition())?,
            )),
            Instance::Linear { test, truth, .. } => {
                let report = evaluate(result, test, truth)?;
                Ok((report.test_loss, report.pd))
            }
        }
    }
}

/// Runs `method` on a task. `rng` only seeds the relaxed solver.
pub fn solve(
    method: Method,
    task: &LinearSharedTask,
    truth: &Partition,
    cfg: &ExperimentConfig,
    rng: &mut Rng,
) -> Result<DiscoveryResult> {
    let result = match method {
        Method::Brute => discover_brute_force(task)?,
        Method::Relaxed => discover_relaxed(task, &cfg.relax, rng)?,
        Method::NoSharing => fixed_scheme(task, baseline_scheme(Baseline::NoSharing, truth))?,
        Method::Oracle => fixed_scheme(task, scheme_from_partition(truth))?,
    };
    Ok(result)
}

fn run_one(cfg: &ExperimentConfig, run: usize) -> Result<Vec<RunRecord>> {
    let mut rng = derive_rng(cfg.base_seed, run as u64);
    let instance = Instance::generate(cfg, &mut rng)?;
    let mut records = Vec::with_capacity(cfg.methods.len());
    for &method in &cfg.methods {
        // every method sees the same dataset and the same solver stream
        let mut method_rng = rng.clone();
        let start = Instant::now();
        let result = solve(method, instance.task(), instance.truth(), cfg, &mut method_rng)?;
        let elapsed = start.elapsed().as_secs_f64();
        let (metric_mse, metric_pd) = instance.score(&result)?;
        records.push(RunRecord {
            run,
            seed: cfg.base_seed,
            method,
            metric_mse,
            metric_pd,
            epochs: result.epochs,
            wall_time_s: if cfg.timing { elapsed } else { 0.0 },
        });
    }
    Ok(records)
}

/// Runs `work` on a dedicated pool when a thread count is configured.
pub(crate) fn with_pool<T: Send>(threads: Option<usize>, work: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(work()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| HarnessError::Pool(e.to_string()))?;
            Ok(pool.install(work))
        }
    }
}

/// All runs of a single-dimension experiment, sorted by run index and then
/// method. Each run derives its own random stream from `(base_seed, run)`,
/// so the output does not depend on scheduling.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    if cfg.dims.len() != 1 {
        return Err(HarnessError::Config(format!(
            "run_experiment takes one dimension, got {:?}; use run_sweep",
            cfg.dims
        )));
    }
    let nested = with_pool(cfg.threads, || {
        (0..cfg.runs)
            .into_par_iter()
            .map(|run| run_one(cfg, run))
            .collect::<Result<Vec<_>>>()
    })??;
    let mut records: Vec<RunRecord> = nested.into_iter().flatten().collect();
    records.sort_by_key(|r| (r.run, r.method));
    Ok(records)
}

/// One experiment per entry of `cfg.dims`.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<(usize, Vec<RunRecord>)>> {
    cfg.validate()?;
    cfg.dims
        .iter()
        .map(|&k| Ok((k, run_experiment(&cfg.with_dim(k))?)))
        .collect()
}

/// Mean, sample standard deviation and normal-approximation 95% half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub sd: f64,
    pub half_width: f64,
}

impl Stat {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        let n = values.len();
        if n < 2 {
            return Err(HarnessError::Config(format!("need at least 2 values for a summary, got {n}")));
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sd = var.sqrt();
        Ok(Self {
            mean,
            sd,
            half_width: 1.96 * sd / (n as f64).sqrt(),
        })
    }

    pub fn lower(&self) -> f64 {
        self.mean - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.half_width
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub method: Method,
    pub runs: usize,
    pub mse: Stat,
    pub pd: Stat,
}

/// Per-method statistics, in method order.
pub fn summarize(records: &[RunRecord]) -> Result<Vec<Summary>> {
    let mut groups: BTreeMap<Method, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in records {
        let entry = groups.entry(r.method).or_default();
        entry.0.push(r.metric_mse);
        entry.1.push(r.metric_pd as f64);
    }
    groups
        .into_iter()
        .map(|(method, (mse, pd))| {
            Ok(Summary {
                method,
                runs: mse.len(),
                mse: Stat::from_values(&mse)
                    .map_err(|_| HarnessError::Config(format!("method {method} has fewer than 2 records")))?,
                pd: Stat::from_values(&pd)?,
            })
        })
        .collect()
}
