//! Experiment configuration: JSON-loadable, strictly validated, unknown
//! keys rejected.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub d: usize,
    pub h: usize,
    pub lambda: f64,
    pub lambda_grid: Vec<f64>,
    pub v: f64,
    pub n: usize,
    pub n_grid: Vec<usize>,
    pub reps: usize,
    pub horizon: f64,
    pub event_cap: u64,
    pub seed: u64,
    pub tol: f64,
    pub pf_tol: f64,
    pub enum_bound: usize,
    pub target_herds: usize,
    pub freezing: bool,
    /// monitor thresholds; None means the derived defaults
    pub eps1: Option<f64>,
    pub eps2: Option<f64>,
    pub delta: Option<f64>,
    pub mu_bar: Option<f64>,
    pub grid_dt: f64,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            d: 3,
            h: 2,
            lambda: 1.0,
            lambda_grid: Vec::new(),
            v: 1.0,
            n: 1000,
            n_grid: Vec::new(),
            reps: 1000,
            horizon: 50.0,
            event_cap: 1_000_000,
            seed: 12345,
            tol: 1e-3,
            pf_tol: 1e-10,
            enum_bound: crate::tree_algebra::DEFAULT_ENUM_BOUND,
            target_herds: 40,
            freezing: true,
            eps1: None,
            eps2: None,
            delta: None,
            mu_bar: None,
            grid_dt: 0.25,
            output: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 3 {
            return Err(Error::InvalidArgument("d must be >= 3".into()));
        }
        if self.h == 0 {
            return Err(Error::InvalidArgument("h must be >= 1".into()));
        }
        for &l in std::iter::once(&self.lambda).chain(&self.lambda_grid) {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::InvalidArgument(format!("lambda {l} out of range")));
            }
        }
        if !(self.v >= 0.0 && self.v.is_finite()) {
            return Err(Error::InvalidArgument("v must be finite and >= 0".into()));
        }
        if self.n * self.d % 2 != 0 {
            return Err(Error::InvalidArgument("nd must be even".into()));
        }
        for &n in &self.n_grid {
            if n * self.d % 2 != 0 {
                return Err(Error::InvalidArgument(format!("n={n}: nd must be even")));
            }
        }
        if self.reps == 0 {
            return Err(Error::InvalidArgument("reps must be >= 1".into()));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidArgument("horizon must be positive".into()));
        }
        if !(self.tol > 0.0 && self.pf_tol > 0.0) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        Ok(())
    }

    pub fn sim_params(&self) -> crate::herds_sim::SimParams {
        crate::herds_sim::SimParams {
            d: self.d,
            lambda: self.lambda,
            v: self.v,
            horizon: self.horizon,
            event_cap: self.event_cap,
            seed: self.seed,
        }
    }

    /// Stable content hash of the canonical JSON form.
    pub fn hash(&self) -> String {
        use std::hash::Hasher;
        let json = serde_json::to_string(self).expect("config serializes");
        let mut h = crate::det_hash::Fnv1a::default();
        h.write(json.as_bytes());
        format!("{:016x}", h.finish())
    }
}
