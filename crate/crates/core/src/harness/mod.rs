//! Experiment orchestration: configuration, the command dispatcher behind
//! the CLI, and the validation suite.

pub mod acceptance;
mod config;

pub use acceptance::{run_suite, CriterionResult, MASTER_SEED};
pub use config::ExperimentConfig;

use crate::contact_dynamic::{self, CpOutcome, JointRun, ScanCell};
use crate::embedded_herds::{EmbeddedRunConfig, FTable, MonitorConfig};
use crate::h_herds::{self, pf_for};
use crate::herds_sim::{estimate_survival, run_frozen_stats};
use crate::tree_algebra::TypeTable;
use crate::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use std::io::Write;
use std::path::Path;

/// Summary of one experiment: deterministic given (config, seed, version).
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub result: serde_json::Value,
}

impl RunSummary {
    fn new(command: &str, cfg: &ExperimentConfig, result: serde_json::Value) -> Self {
        RunSummary {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: cfg.seed,
            config_hash: cfg.hash(),
            result,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

fn write_output(cfg: &ExperimentConfig, text: &str) -> Result<()> {
    if let Some(path) = &cfg.output {
        std::fs::write(path, text)?;
    }
    Ok(())
}

/// `pf`: enumerate the type space and compute the dominant eigenpair;
/// exports {d,h,lambda,v,mu,f_min,f_max,dim,residual} and optionally the
/// eigenfunction keyed by class code.
pub fn cmd_pf(cfg: &ExperimentConfig, export_f: bool) -> Result<RunSummary> {
    cfg.validate()?;
    let types = TypeTable::enumerate(cfg.d, cfg.h, cfg.enum_bound)?;
    let pf = pf_for(&types, cfg.lambda, cfg.v, cfg.pf_tol)?;
    let mut result = json!({
        "d": cfg.d,
        "h": cfg.h,
        "lambda": cfg.lambda,
        "v": cfg.v,
        "mu": pf.mu,
        "f_min": pf.f_min,
        "f_max": pf.f_max,
        "dim": types.len(),
        "residual": pf.residual,
    });
    result["strongly_connected"] = json!(pf.strongly_connected);
    if export_f {
        let f: serde_json::Map<String, serde_json::Value> = types
            .classes
            .iter()
            .zip(&pf.f)
            .map(|(c, &val)| (c.code.hex(), json!(val)))
            .collect();
        result["f"] = serde_json::Value::Object(f);
    }
    let summary = RunSummary::new("pf", cfg, result);
    write_output(cfg, &summary.to_json())?;
    Ok(summary)
}

/// `lambda-bar`: bisection for the truncated critical birth rate.
pub fn cmd_lambda_bar(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let types = TypeTable::enumerate(cfg.d, cfg.h, cfg.enum_bound)?;
    let out = h_herds::lambda_bar(&types, cfg.v, cfg.tol, cfg.pf_tol)?;
    let summary = RunSummary::new(
        "lambda-bar",
        cfg,
        serde_json::to_value(&out).expect("serializes"),
    );
    write_output(cfg, &summary.to_json())?;
    Ok(summary)
}

/// `simulate-herds`: survival estimation for the herds process.
pub fn cmd_simulate_herds(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let est = estimate_survival(&cfg.sim_params(), cfg.reps)?;
    let summary = RunSummary::new(
        "simulate-herds",
        cfg,
        serde_json::to_value(&est).expect("serializes"),
    );
    write_output(cfg, &summary.to_json())?;
    Ok(summary)
}

/// `simulate-hherds`: replicated truncated-process runs; reports survival,
/// leaf-touch probability and censoring.
pub fn cmd_simulate_hherds(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let params = cfg.sim_params();
    let results: Vec<_> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| {
            crate::h_herds::run_h_herds(
                &params,
                cfg.h,
                None,
                r as u64,
                crate::h_herds::HRunChecks::default(),
                None,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let alive = results.iter().filter(|r| r.outcome.alive()).count();
    let leaf_hits = results.iter().filter(|r| r.tau_leaf.is_some()).count();
    let (p, se) = crate::stats::proportion_se(alive, cfg.reps);
    let (pl, sel) = crate::stats::proportion_se(leaf_hits, cfg.reps);
    let summary = RunSummary::new(
        "simulate-hherds",
        cfg,
        json!({
            "alive_at_horizon": p, "alive_se": se,
            "leaf_touch_probability": pl, "leaf_touch_se": sel,
            "reps": cfg.reps,
        }),
    );
    write_output(cfg, &summary.to_json())?;
    Ok(summary)
}

/// `simulate-cp`: replicated joint-chain extinction runs at one cell; the
/// per-run CSV carries run_id, seed, n, d, lambda, v, outcome, tau, events,
/// wall_ms.
pub fn cmd_simulate_cp(cfg: &ExperimentConfig, csv_path: Option<&Path>) -> Result<RunSummary> {
    cfg.validate()?;
    let records: Vec<_> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| {
            contact_dynamic::run_joint(
                &JointRun {
                    n: cfg.n,
                    d: cfg.d,
                    lambda: cfg.lambda,
                    v: cfg.v,
                    initial: None,
                    horizon: cfg.horizon,
                    event_cap: cfg.event_cap,
                    seed: cfg.seed,
                    run_id: r as u64,
                },
                None,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(path) = csv_path {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(file, "run_id,seed,n,d,lambda,v,outcome,tau,events,wall_ms")?;
        for (i, rec) in records.iter().enumerate() {
            let (outcome, tau) = match rec.outcome {
                CpOutcome::Died { tau } => ("died", tau),
                CpOutcome::Censored { at, .. } => ("censored", at),
            };
            writeln!(
                file,
                "{i},{},{},{},{},{},{outcome},{tau},{},{}",
                rec.seed, rec.n, rec.d, rec.lambda, rec.v, rec.events, rec.wall_ms
            )?;
        }
    }
    let cell = ScanCell {
        n: cfg.n,
        lambda: cfg.lambda,
        v: cfg.v,
    };
    let row = contact_dynamic::summarize_cell(&cell, &records);
    let summary = RunSummary::new(
        "simulate-cp",
        cfg,
        serde_json::to_value(&row).expect("serializes"),
    );
    write_output(cfg, &summary.to_json())?;
    Ok(summary)
}

/// `extinction-scan`: quantile table over the (n, lambda) grid; CSV output.
pub fn cmd_extinction_scan(cfg: &ExperimentConfig, csv_path: Option<&Path>) -> Result<RunSummary> {
    cfg.validate()?;
    let ns = if cfg.n_grid.is_empty() { vec![cfg.n] } else { cfg.n_grid.clone() };
    let lambdas = if cfg.lambda_grid.is_empty() {
        vec![cfg.lambda]
    } else {
        cfg.lambda_grid.clone()
    };
    let mut cells = Vec::new();
    for &n in &ns {
        for &lambda in &lambdas {
            cells.push(ScanCell { n, lambda, v: cfg.v });
        }
    }
    let rows = contact_dynamic::extinction_scan(
        &cells,
        cfg.d,
        cfg.reps,
        cfg.horizon,
        cfg.event_cap,
        cfg.seed,
    )?;
    if let Some(path) = csv_path {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(file, "n,lambda,v,reps,q1,median,q3,censored_fraction,mean_events")?;
        for r in &rows {
            writeln!(
                file,
                "{},{},{},{},{},{},{},{},{}",
                r.n, r.lambda, r.v, r.reps, r.q1, r.median, r.q3, r.censored_fraction, r.mean_events
            )?;
        }
    }
    let summary = RunSummary::new(
        "extinction-scan",
        cfg,
        serde_json::to_value(&rows).expect("serializes"),
    );
    write_output(cfg, &summary.to_json())?;
    Ok(summary)
}

/// `embedded`: one joint embedded run with the monitor report.
pub fn cmd_embedded(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let types = TypeTable::enumerate(cfg.d, cfg.h, cfg.enum_bound)?;
    let pf = pf_for(&types, cfg.lambda, cfg.v, cfg.pf_tol)?;
    let ftable = FTable::from_pf(&types, &pf);
    let mut monitors = MonitorConfig::defaults(&ftable, cfg.lambda, cfg.v);
    if let Some(x) = cfg.eps1 {
        monitors.eps1 = x;
    }
    if let Some(x) = cfg.eps2 {
        monitors.eps2 = x;
    }
    if let Some(x) = cfg.delta {
        monitors.delta = x;
    }
    if let Some(x) = cfg.mu_bar {
        monitors.mu_bar = x;
    }
    monitors.grid_dt = cfg.grid_dt;
    let report = crate::embedded_herds::run_embedded(
        &cfg.sim_params(),
        &EmbeddedRunConfig {
            n: cfg.n,
            h: cfg.h,
            target_herds: cfg.target_herds,
            monitors: Some(monitors),
            check_surgery: true,
            event_cap: cfg.event_cap,
        },
        &types,
        &pf,
        0,
    )?;
    let summary = RunSummary::new(
        "embedded",
        cfg,
        serde_json::to_value(&report).expect("serializes"),
    );
    write_output(cfg, &summary.to_json())?;
    Ok(summary)
}

/// `simulate-marked`: the freezing statistics driver.
pub fn cmd_frozen_stats(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let stats = run_frozen_stats(&cfg.sim_params(), cfg.reps)?;
    let summary = RunSummary::new(
        "simulate-marked",
        cfg,
        serde_json::to_value(&stats).expect("serializes"),
    );
    write_output(cfg, &summary.to_json())?;
    Ok(summary)
}

/// `validate`: run the acceptance suite; quick stays below five minutes.
pub fn cmd_validate(quick: bool) -> Result<(Vec<CriterionResult>, bool)> {
    let results = run_suite(quick)?;
    let all_pass = results.iter().all(|r| r.passed);
    Ok((results, all_pass))
}

/// Exit-code mapping: invalid configuration is 2, numerical failure 3.
pub fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::InvalidArgument(_) | Error::InvalidState(_) | Error::Json(_) => 2,
        Error::NonConvergence { .. } | Error::EnumerationOverflow { .. } | Error::Bracket { .. } => 3,
        _ => 1,
    }
}
