//! Experiment configuration: per-experiment defaults, a `key=value` file
//! format, and command-line overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use eqdisc_core::discovery::RelaxHyperparams;
use eqdisc_core::gaussian::check_alpha;
use eqdisc_core::partition::MAX_ENUMERATION;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Brute,
    Relaxed,
    NoSharing,
    Oracle,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Brute, Method::Relaxed, Method::NoSharing, Method::Oracle];

    pub fn name(self) -> &'static str {
        match self {
            Method::Brute => "brute",
            Method::Relaxed => "relaxed",
            Method::NoSharing => "no-sharing",
            Method::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| format!("unknown method `{s}` (expected brute, relaxed, no-sharing or oracle)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Gaussian,
    Shift,
    Denoise,
    Sum,
    Claim1,
    Claim2,
    Claim3,
    Chi2,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Gaussian => "gaussian",
            Experiment::Shift => "shift",
            Experiment::Denoise => "denoise",
            Experiment::Sum => "sum",
            Experiment::Claim1 => "verify-claim1",
            Experiment::Claim2 => "verify-claim2",
            Experiment::Claim3 => "verify-claim3",
            Experiment::Chi2 => "verify-chi2",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub methods: Vec<Method>,
    /// K for Gaussian and denoising, K_in for shift, the K grid for chi2.
    /// Several values run one experiment per value.
    pub dims: Vec<usize>,
    pub kernel_len: usize,
    pub seq_len: usize,
    pub negated: bool,
    pub rank_gt: usize,
    pub sigma: f64,
    pub n_total: usize,
    pub train_ratio: f64,
    pub test_size: usize,
    pub runs: usize,
    pub base_seed: u64,
    pub relax: RelaxHyperparams,
    pub alpha: f64,
    /// Record wall-clock seconds per run. Off by default so that CSV output
    /// is byte-for-byte reproducible.
    pub timing: bool,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub plot: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        let mut cfg = Self {
            experiment,
            methods: vec![Method::Relaxed, Method::NoSharing, Method::Oracle],
            dims: vec![4],
            kernel_len: 2,
            seq_len: 4,
            negated: false,
            rank_gt: 1,
            sigma: 1.0,
            n_total: 100,
            train_ratio: 0.3,
            test_size: 10_000,
            runs: 200,
            base_seed: 0,
            relax: RelaxHyperparams::default(),
            alpha: 0.1,
            timing: false,
            threads: None,
            out: None,
            plot: None,
        };
        match experiment {
            Experiment::Gaussian | Experiment::Claim3 => {}
            Experiment::Shift => {
                cfg.dims = vec![3];
                cfg.n_total = 150;
                cfg.train_ratio = 1.0 / 3.0;
                cfg.runs = 5;
                cfg.relax.learning_rate = 0.1;
            }
            Experiment::Denoise => {
                cfg.dims = vec![10];
                cfg.n_total = 150;
                cfg.train_ratio = 1.0 / 3.0;
                cfg.runs = 5;
                cfg.relax.learning_rate = 0.2;
            }
            Experiment::Sum => {
                cfg.n_total = 250;
                cfg.train_ratio = 0.4;
                cfg.test_size = 100_000;
                cfg.runs = 5;
            }
            Experiment::Claim1 => {
                cfg.n_total = 50;
                cfg.runs = 20_000;
            }
            Experiment::Claim2 => {
                cfg.dims = vec![20];
                cfg.runs = 500;
            }
            Experiment::Chi2 => {
                cfg.dims = vec![5, 10];
                cfg.runs = 100_000;
            }
        }
        cfg
    }

    /// Copy restricted to a single entry of the `dims` grid.
    pub fn with_dim(&self, k: usize) -> Self {
        Self {
            dims: vec![k],
            ..self.clone()
        }
    }

    pub fn dim(&self) -> usize {
        self.dims[0]
    }

    /// Number of shareable parameters for dimension `k`.
    pub fn param_count(&self, k: usize) -> usize {
        match self.experiment {
            Experiment::Shift => (k + 1).saturating_sub(self.kernel_len) * k,
            Experiment::Denoise => k * k,
            Experiment::Sum => self.seq_len,
            _ => k,
        }
    }

    /// `(|T|, |V|)` with both parts non-empty.
    pub fn split_sizes(&self) -> (usize, usize) {
        let n_train = ((self.n_total as f64 * self.train_ratio).round() as usize).clamp(1, self.n_total - 1);
        (n_train, self.n_total - n_train)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.dims.is_empty() {
            return bad("dims must list at least one value".into());
        }
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return bad(format!("train ratio must lie strictly between 0 and 1, got {}", self.train_ratio));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return bad(format!("sigma must be non-negative, got {}", self.sigma));
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        self.relax.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        let runs_experiment = matches!(
            self.experiment,
            Experiment::Gaussian | Experiment::Shift | Experiment::Denoise | Experiment::Sum
        );
        if runs_experiment {
            if self.methods.is_empty() {
                return bad("at least one method is required".into());
            }
            if self.n_total < 2 {
                return bad("n must be at least 2 to form train and validation sets".into());
            }
            if self.experiment != Experiment::Gaussian && self.test_size == 0 {
                return bad("test size must be at least 1".into());
            }
        }
        for &k in &self.dims {
            match self.experiment {
                Experiment::Gaussian | Experiment::Claim1 | Experiment::Claim2 => {
                    if k == 0 {
                        return bad("dims must be positive".into());
                    }
                    if self.rank_gt == 0 || self.rank_gt > k {
                        return bad(format!("rank-gt must lie in 1..={k}, got {}", self.rank_gt));
                    }
                }
                Experiment::Shift => {
                    if self.kernel_len == 0 || self.kernel_len > k {
                        return bad(format!("kernel length must lie in 1..={k}, got {}", self.kernel_len));
                    }
                }
                Experiment::Denoise => {
                    if k < 2 {
                        return bad(format!("denoising needs a signal length of at least 2, got {k}"));
                    }
                }
                Experiment::Sum => {
                    if self.seq_len == 0 {
                        return bad("seq-len must be at least 1".into());
                    }
                }
                Experiment::Claim3 => {
                    if k == 0 || k > eqdisc_core::partition::MAX_GROUP_ENUMERATION {
                        return bad(format!(
                            "claim3 enumerates permutations and supports K in 1..={}, got {k}",
                            eqdisc_core::partition::MAX_GROUP_ENUMERATION
                        ));
                    }
                }
                Experiment::Chi2 => {
                    if k == 0 {
                        return bad("dims must be positive".into());
                    }
                }
            }
            if runs_experiment && self.methods.contains(&Method::Brute) && self.param_count(k) > MAX_ENUMERATION {
                return bad(format!(
                    "brute force enumerates partitions of at most {MAX_ENUMERATION} parameters; this task has {}",
                    self.param_count(k)
                ));
            }
        }
        match self.experiment {
            Experiment::Claim1 | Experiment::Claim2 if self.runs < 2 => {
                return bad("Monte-Carlo checks need at least 2 runs".into());
            }
            Experiment::Claim2 => {
                for &k in &self.dims {
                    check_alpha(k, self.alpha).map_err(|e| HarnessError::Config(e.to_string()))?;
                }
                if self.n_total < 2 {
                    return bad("n must be at least 2".into());
                }
            }
            Experiment::Claim1 if self.n_total == 0 => return bad("n must be at least 1".into()),
            Experiment::Chi2 if self.runs < 10_000 => {
                return bad(format!("chi2 needs at least 10^4 samples per cell (runs), got {}", self.runs));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        macro_rules! set {
            ($field:ident => $target:expr) => {
                if let Some(v) = &o.$field {
                    $target = v.clone();
                }
            };
        }
        if let Some(methods) = &o.method {
            self.methods = parse_list(methods, "method")?;
        }
        if let Some(dims) = &o.dims {
            self.dims = parse_list(dims, "dims")?;
        }
        set!(kernel_len => self.kernel_len);
        set!(seq_len => self.seq_len);
        set!(negated => self.negated);
        set!(rank_gt => self.rank_gt);
        set!(sigma => self.sigma);
        set!(n => self.n_total);
        set!(train_ratio => self.train_ratio);
        set!(test_size => self.test_size);
        set!(runs => self.runs);
        set!(seed => self.base_seed);
        set!(lambda_entropy => self.relax.lambda_entropy);
        set!(lambda_nuclear => self.relax.lambda_nuclear);
        set!(lr => self.relax.learning_rate);
        set!(weight_decay => self.relax.weight_decay);
        set!(epochs => self.relax.max_epochs);
        set!(patience => self.relax.patience);
        set!(minibatch_frac => self.relax.minibatch_fraction);
        set!(alpha => self.alpha);
        set!(timing => self.timing);
        if o.threads.is_some() {
            self.threads = o.threads;
        }
        if o.out.is_some() {
            self.out = o.out.clone();
        }
        if o.plot.is_some() {
            self.plot = o.plot.clone();
        }
        Ok(())
    }

    /// Defaults for `experiment`, then the config file named in the flags
    /// (if any), then the flags themselves.
    pub fn resolve(experiment: Experiment, flags: &Overrides) -> Result<Self> {
        let mut cfg = Self::defaults(experiment);
        if let Some(path) = &flags.config {
            cfg.apply(&Overrides::from_file(path)?)?;
        }
        cfg.apply(flags)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_list<T: FromStr>(text: &str, key: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|e| HarnessError::Config(format!("{key}: cannot parse `{}`: {e}", s.trim())))
        })
        .collect()
}

/// Optional settings shared by the command line and the config file. Every
/// flag name doubles as a config-file key (`sigma = 0.5`, `train-ratio = 0.3`).
#[derive(Debug, Clone, Default, PartialEq, Args)]
pub struct Overrides {
    /// Plain-text `key=value` file; flags given on the command line win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Parameter dimension K (K_in for shift); a comma list runs a sweep.
    #[arg(long)]
    pub dims: Option<String>,
    #[arg(long = "rank-gt")]
    pub rank_gt: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Total dataset size |D| = |T| + |V|.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long = "train-ratio")]
    pub train_ratio: Option<f64>,
    #[arg(long = "test-size")]
    pub test_size: Option<usize>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma list of brute, relaxed, no-sharing, oracle.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long = "lambda-entropy")]
    pub lambda_entropy: Option<f64>,
    #[arg(long = "lambda-nuclear")]
    pub lambda_nuclear: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long = "weight-decay")]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long = "minibatch-frac")]
    pub minibatch_frac: Option<f64>,
    #[arg(long = "kernel-len")]
    pub kernel_len: Option<usize>,
    #[arg(long = "seq-len")]
    pub seq_len: Option<usize>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub negated: Option<bool>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Record per-run wall time (makes the CSV non-reproducible).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub timing: Option<bool>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

impl Overrides {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::parse_kv(&text).map_err(|(line, message)| HarnessError::Parse {
            path: path.to_path_buf(),
            line,
            column: 1,
            message,
        })
    }

    /// Parses `key = value` lines; `#` starts a comment. Errors carry the
    /// 1-based line number.
    pub fn parse_kv(text: &str) -> std::result::Result<Self, (usize, String)> {
        let mut o = Overrides::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| (line_no, format!("expected `key = value`, got `{line}`")))?;
            let key = key.trim().replace('_', "-");
            let value = value.trim();
            o.set(&key, value).map_err(|msg| (line_no, msg))?;
        }
        Ok(o)
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn parse<T: FromStr>(key: &str, value: &str) -> std::result::Result<Option<T>, String>
        where
            T::Err: fmt::Display,
        {
            value
                .parse()
                .map(Some)
                .map_err(|e| format!("{key}: cannot parse `{value}`: {e}"))
        }
        match key {
            "dims" => self.dims = Some(value.to_string()),
            "method" => self.method = Some(value.to_string()),
            "rank-gt" => self.rank_gt = parse(key, value)?,
            "sigma" => self.sigma = parse(key, value)?,
            "n" => self.n = parse(key, value)?,
            "train-ratio" => self.train_ratio = parse(key, value)?,
            "test-size" => self.test_size = parse(key, value)?,
            "runs" => self.runs = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "lambda-entropy" => self.lambda_entropy = parse(key, value)?,
            "lambda-nuclear" => self.lambda_nuclear = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "weight-decay" => self.weight_decay = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "minibatch-frac" => self.minibatch_frac = parse(key, value)?,
            "kernel-len" => self.kernel_len = parse(key, value)?,
            "seq-len" => self.seq_len = parse(key, value)?,
            "negated" => self.negated = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "threads" => self.threads = parse(key, value)?,
            "timing" => self.timing = parse(key, value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            "plot" => self.plot = Some(PathBuf::from(value)),
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }
}
