//! `pushsum`: run, verify, sweep and audit push-subgradient experiments.
//!
//! Exit codes: 0 when every check passes, 1 when a check fails, 2 for
//! usage, config or input errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use pushsum_core::harness::{
    self, audit_dir, run_experiment, sweep, verify, write_outputs, CheckStatus, ExperimentConfig, GraphSpec,
    WeightSpec, EXIT_CHECK_FAILED, EXIT_CONFIG_ERROR, EXIT_PASS,
};
use pushsum_core::RateFit;

#[derive(Parser)]
#[command(name = "pushsum", version, about = "Push-sum and push-subgradient experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a config and write trace.csv, report.json, config.toml and plots.
    Simulate {
        #[command(flatten)]
        input: Input,
        /// Output directory; defaults to the config's `out`, then `out`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the numerical identities over a short horizon.
    Verify {
        #[command(flatten)]
        input: Input,
        /// Also write verify.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run fixed-horizon experiments for several T and fit the rate.
    Sweep {
        #[command(flatten)]
        input: Input,
        /// Comma-separated horizons.
        #[arg(long, value_delimiter = ',', default_value = "100,400,1600,6400")]
        horizons: Vec<usize>,
        /// Also write sweep.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute a saved report from its trace.
    Report {
        /// Directory written by `simulate`.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Input {
    #[arg(long)]
    config: PathBuf,
    /// Override the seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Read the graph sequence from this file instead.
    #[arg(long)]
    graph_file: Option<PathBuf>,
    /// Read custom weight matrices from this file.
    #[arg(long)]
    weights_file: Option<PathBuf>,
}

impl Input {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut config = ExperimentConfig::load(&self.config)
            .with_context(|| format!("loading {}", self.config.display()))?;
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(path) = &self.graph_file {
            config.graph = GraphSpec::File { path: absolute(path)? };
        }
        if let Some(path) = &self.weights_file {
            config.weights = WeightSpec::Custom { path: absolute(path)? };
        }
        config.validate()?;
        Ok(config)
    }
}

fn absolute(path: &Path) -> Result<PathBuf> {
    std::path::absolute(path).with_context(|| format!("resolving {}", path.display()))
}

fn write_json(dir: &Path, name: &str, value: &impl serde::Serialize) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(value)? + "\n")?;
    println!("wrote {}", path.display());
    Ok(())
}

fn verdict(passed: bool) -> i32 {
    if passed {
        EXIT_PASS
    } else {
        EXIT_CHECK_FAILED
    }
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Simulate { input, out } => {
            let config = input.load()?;
            let dir = out.or_else(|| config.out.clone()).unwrap_or_else(|| "out".into());
            let output = run_experiment(&config)?;
            for path in write_outputs(&output, &dir)? {
                println!("wrote {}", path.display());
            }
            let r = &output.report;
            println!("{}: n = {}, d = {}, steps = {}", r.label, r.n, r.d, r.steps);
            match r.connectivity.window {
                Some(l) => println!("connectivity window L = {l}"),
                None => println!("no connectivity window within the horizon"),
            }
            if let Some(gap) = r.final_gap {
                println!("final gap {gap:.6e}");
            }
            println!("final consensus error {:.6e}", r.final_consensus_error);
            for b in &r.bounds {
                println!(
                    "bound {:?}/{:?}: min margin {:.6e} at t = {}",
                    b.family, b.constants, b.min_margin, b.at_t
                );
            }
            for s in &r.skipped_bounds {
                println!("skipped: {s}");
            }
            for f in &r.failures {
                println!("FAIL: {f}");
            }
            println!("{}", if r.passed { "PASS" } else { "FAIL" });
            Ok(verdict(r.passed))
        }
        Command::Verify { input, out } => {
            let report = verify(&input.load()?)?;
            for c in &report.checks {
                let tag = match c.status {
                    CheckStatus::Pass => "pass",
                    CheckStatus::Fail => "FAIL",
                    CheckStatus::Skipped => "skip",
                };
                println!("{tag:4} {:22} {}", c.name, c.detail);
            }
            if let Some(dir) = out {
                write_json(&dir, "verify.json", &report)?;
            }
            println!("{}", if report.passed { "PASS" } else { "FAIL" });
            Ok(verdict(report.passed))
        }
        Command::Sweep { input, horizons, out } => {
            let report = sweep(&input.load()?, &horizons)?;
            println!("{:>8}  {:>14}  checks", "T", "gap");
            for row in &report.rows {
                println!(
                    "{:>8}  {:>14.6e}  {}",
                    row.horizon,
                    row.final_gap,
                    if row.passed { "pass" } else { "FAIL" }
                );
            }
            match &report.fit {
                RateFit::Fitted { fit, .. } => {
                    println!("log-log slope {:.4}, r2 {:.4}", fit.slope, fit.r2)
                }
                RateFit::ExactConvergence { .. } => println!("every gap is zero"),
            }
            if let Some(dir) = out {
                write_json(&dir, "sweep.json", &report)?;
            }
            Ok(verdict(report.passed()))
        }
        Command::Report { out } => {
            let audit = audit_dir(&out)?;
            for item in &audit.items {
                println!(
                    "{} {:28} stored {:.17e} recomputed {:.17e}",
                    if item.passed { "pass" } else { "FAIL" },
                    item.name,
                    item.stored,
                    item.recomputed
                );
            }
            println!("{}", if audit.passed { "PASS" } else { "FAIL" });
            Ok(verdict(audit.passed))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            err.downcast_ref::<pushsum_core::Error>()
                .map(harness::exit_code)
                .unwrap_or(EXIT_CONFIG_ERROR)
        }
    };
    ExitCode::from(code as u8)
}
