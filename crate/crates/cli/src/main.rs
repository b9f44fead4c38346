//! `herdsim`: simulation and exact analysis of the contact process on
//! switching random d-regular multigraphs and its herd-type local limits.
//!
//! Every subcommand accepts `--config <file.json>` (strict keys) with
//! individual flags overriding the file. All randomness derives from
//! `--seed`; reruns with the same configuration are bit-identical.
//! `HERDSIM_THREADS` caps worker parallelism.

use clap::{Args, Parser, Subcommand};
use herdsim_core::harness::{self, ExperimentConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "herdsim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// JSON configuration file; flags override its entries
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    h: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    /// comma-separated birth-rate grid
    #[arg(long, value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,
    #[arg(long)]
    v: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    /// comma-separated vertex-count grid
    #[arg(long, value_delimiter = ',')]
    n_grid: Option<Vec<usize>>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    event_cap: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    target_herds: Option<usize>,
    /// write the JSON summary here as well as to stdout
    #[arg(long)]
    output: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig, herdsim_core::Error> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(x) = &self.$field { cfg.$field = x.clone(); })*
            };
        }
        set!(d, h, lambda, v, n, reps, horizon, event_cap, seed, tol, target_herds);
        if let Some(g) = &self.lambda_grid {
            cfg.lambda_grid = g.clone();
        }
        if let Some(g) = &self.n_grid {
            cfg.n_grid = g.clone();
        }
        if let Some(o) = &self.output {
            cfg.output = Some(o.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Survival estimation for the herds process on the infinite tree
    SimulateHerds(Common),
    /// Replicated truncated (h-herds) runs
    SimulateHherds(Common),
    /// Marked/freezing herds: expected frozen-herd statistics
    SimulateMarked(Common),
    /// Type enumeration and the dominant eigenpair of the mean matrix
    Pf {
        #[command(flatten)]
        common: Common,
        /// include the eigenfunction keyed by class code in the output
        #[arg(long)]
        export_f: bool,
    },
    /// Bisection for the truncated critical birth rate
    LambdaBar(Common),
    /// Contact process on the switching multigraph at one parameter cell
    SimulateCp {
        #[command(flatten)]
        common: Common,
        /// per-run CSV (run_id,seed,n,d,lambda,v,outcome,tau,events,wall_ms)
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Extinction-time quantiles over an (n, lambda) grid
    ExtinctionScan {
        #[command(flatten)]
        common: Common,
        /// cell-summary CSV
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Joint run of the embedded h-herds process with drift monitors
    Embedded(Common),
    /// Run the acceptance-criteria suite
    Validate {
        /// quick: the sub-minute criteria only; full: all twelve
        #[arg(long, default_value = "quick")]
        level: String,
    },
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("HERDSIM_THREADS") {
        if let Ok(k) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(harness::exit_code_for(&err))
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, herdsim_core::Error> {
    let summary = match cli.command {
        Command::SimulateHerds(c) => harness::cmd_simulate_herds(&c.resolve()?)?,
        Command::SimulateHherds(c) => harness::cmd_simulate_hherds(&c.resolve()?)?,
        Command::SimulateMarked(c) => harness::cmd_frozen_stats(&c.resolve()?)?,
        Command::Pf { common, export_f } => harness::cmd_pf(&common.resolve()?, export_f)?,
        Command::LambdaBar(c) => harness::cmd_lambda_bar(&c.resolve()?)?,
        Command::SimulateCp { common, csv } => {
            harness::cmd_simulate_cp(&common.resolve()?, csv.as_deref())?
        }
        Command::ExtinctionScan { common, csv } => {
            harness::cmd_extinction_scan(&common.resolve()?, csv.as_deref())?
        }
        Command::Embedded(c) => harness::cmd_embedded(&c.resolve()?)?,
        Command::Validate { level } => {
            let quick = match level.as_str() {
                "quick" => true,
                "full" => false,
                other => {
                    return Err(herdsim_core::Error::InvalidArgument(format!(
                        "validate level must be quick or full, got {other}"
                    )))
                }
            };
            let (results, all_pass) = harness::cmd_validate(quick)?;
            for r in &results {
                println!("{}", r.line());
            }
            return Ok(if all_pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            });
        }
    };
    println!("{}", summary.to_json());
    Ok(ExitCode::SUCCESS)
}
