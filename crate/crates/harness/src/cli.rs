//! Command-line front end.

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::{Experiment, ExperimentConfig, Overrides};
use crate::error::{HarnessError, Result};
use crate::experiment::{run_sweep, summarize, Summary};
use crate::output::{emit_plot, sweep_panels, sweep_path, write_csv, Panel, Series};
use crate::verify::{verify_chi2, verify_claim1, verify_claim2, verify_claim3, pd_command};

#[derive(Debug, Parser)]
#[command(name = "eqdisc", version, about = "Discover parameter-sharing schemes and check their theory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Shared-mean estimation with a random ground-truth partition.
    Gaussian(Overrides),
    /// Learn a linear layer whose ground truth is a cross-correlation.
    Shift(Overrides),
    /// Linear denoising of noisy step signals.
    Denoise(Overrides),
    /// Linear sum of integers (alternating signs with --negated).
    Sum(Overrides),
    /// Print the partition distance between two partition files.
    Pd { first: PathBuf, second: PathBuf },
    /// Check an analytical result numerically.
    Verify {
        #[command(subcommand)]
        check: Check,
    },
}

#[derive(Debug, Subcommand)]
pub enum Check {
    /// Closed-form MSE of fixed schemes against Monte Carlo.
    Claim1(Overrides),
    /// Finite-sample gap bound for the discovered scheme.
    Claim2(Overrides),
    /// Partition distance against the size of the group difference.
    Claim3(Overrides),
    /// Chi-squared tail bound.
    Chi2(Overrides),
}

/// Whether a verification passed; failed checks exit with status 2.
type Verdict = bool;

fn mse_label(experiment: Experiment) -> &'static str {
    match experiment {
        Experiment::Gaussian => "MSE",
        _ => "test loss",
    }
}

fn print_summaries(out: &mut dyn Write, k: usize, label: &str, sums: &[Summary]) -> std::io::Result<()> {
    writeln!(out, "K={k}")?;
    writeln!(
        out,
        "  {:<11} {:>5} {:>12} {:>12} {:>8} {:>8}",
        "method", "runs", label, "+/-95%", "PD", "+/-95%"
    )?;
    for s in sums {
        writeln!(
            out,
            "  {:<11} {:>5} {:>12.6} {:>12.6} {:>8.3} {:>8.3}",
            s.method.name(),
            s.runs,
            s.mse.mean,
            s.mse.half_width,
            s.pd.mean,
            s.pd.half_width
        )?;
    }
    Ok(())
}

fn stdout_err(e: std::io::Error) -> HarnessError {
    HarnessError::io("<stdout>", e)
}

fn run_task(experiment: Experiment, flags: &Overrides, out: &mut dyn Write) -> Result<Verdict> {
    let cfg = ExperimentConfig::resolve(experiment, flags)?;
    let sweep = run_sweep(&cfg)?;
    let label = mse_label(experiment);
    let mut summaries = Vec::with_capacity(sweep.len());
    for (k, records) in &sweep {
        if let Some(path) = &cfg.out {
            write_csv(records, &sweep_path(path, *k, sweep.len() > 1))?;
        }
        // a single run has no spread to report
        let sums = if cfg.runs >= 2 { summarize(records)? } else { Vec::new() };
        if sums.is_empty() {
            for r in records {
                writeln!(out, "K={k} run={} method={} {label}={} pd={}", r.run, r.method, r.metric_mse, r.metric_pd)
                    .map_err(stdout_err)?;
            }
        } else {
            print_summaries(out, *k, label, &sums).map_err(stdout_err)?;
        }
        summaries.push((*k, sums));
    }
    if let Some(path) = &cfg.plot {
        emit_plot(&sweep_panels(&summaries, label), path)?;
    }
    Ok(true)
}

fn run_check(check: &Check, out: &mut dyn Write) -> Result<Verdict> {
    let (experiment, flags) = match check {
        Check::Claim1(f) => (Experiment::Claim1, f),
        Check::Claim2(f) => (Experiment::Claim2, f),
        Check::Claim3(f) => (Experiment::Claim3, f),
        Check::Chi2(f) => (Experiment::Chi2, f),
    };
    let cfg = ExperimentConfig::resolve(experiment, flags)?;
    let verdict = match experiment {
        Experiment::Claim1 => {
            let report = verify_claim1(&cfg)?;
            writeln!(out, "{report}").map_err(stdout_err)?;
            report.holds()
        }
        Experiment::Claim2 => {
            let reports = verify_claim2(&cfg)?;
            let mut panels = Vec::new();
            for report in &reports {
                writeln!(out, "{report}").map_err(stdout_err)?;
                panels.push(Panel {
                    title: format!("gap bound, K={}", report.k),
                    x_label: "train ratio r".into(),
                    y_label: "MSE gap".into(),
                    series: vec![
                        Series {
                            label: "bound".into(),
                            points: report.curve.iter().map(|&(r, b)| (r, b, 0.0)).collect(),
                        },
                        Series {
                            label: "empirical".into(),
                            points: vec![(cfg.train_ratio, report.gap.mean, 1.96 * report.gap.std_error)],
                        },
                    ],
                });
            }
            if let Some(path) = &cfg.plot {
                emit_plot(&panels, path)?;
            }
            reports.iter().all(|r| r.holds())
        }
        Experiment::Claim3 => {
            let reports = verify_claim3(&cfg)?;
            for report in &reports {
                writeln!(out, "{report}").map_err(stdout_err)?;
            }
            reports.iter().all(|r| r.holds())
        }
        _ => {
            let report = verify_chi2(&cfg)?;
            writeln!(out, "{report}").map_err(stdout_err)?;
            report.holds()
        }
    };
    writeln!(out, "{}", if verdict { "PASS" } else { "FAIL" }).map_err(stdout_err)?;
    Ok(verdict)
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<Verdict> {
    match &cli.command {
        Command::Gaussian(f) => run_task(Experiment::Gaussian, f, out),
        Command::Shift(f) => run_task(Experiment::Shift, f, out),
        Command::Denoise(f) => run_task(Experiment::Denoise, f, out),
        Command::Sum(f) => run_task(Experiment::Sum, f, out),
        Command::Pd { first, second } => {
            let d = pd_command(first, second)?;
            writeln!(out, "{d}").map_err(stdout_err)?;
            Ok(true)
        }
        Command::Verify { check } => run_check(check, out),
    }
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit status: 0 on success, 1 for invalid input, 2 for runtime
/// failures including failed verifications.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match dispatch(&cli, out) {
        Ok(true) => 0,
        Ok(false) => 2,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
