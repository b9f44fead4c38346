//! Event-driven simulation and exact first-moment analysis of the contact
//! process on a switching random d-regular multigraph, together with its
//! local-limit surrogates: herds, h-herds, marked/frozen herds and embedded
//! h-herds.
//!
//! The crate is organized around the processes themselves:
//!
//! * [`tree_algebra`] — finite subtrees of the infinite d-regular tree,
//!   splitting operations, canonical forms, shape and type enumeration.
//! * [`herds_sim`] — the herds process on the infinite tree, its marked
//!   variant, freezing, boundary functionals and exact generator sums.
//! * [`h_herds`] — the truncated (h-herds) process, its mean matrix,
//!   Perron-Frobenius pair and the truncated critical birth rate.
//! * [`switch_graph`] — the multigraph as a half-edge matching, the switching
//!   chain, loop counting and local balls.
//! * [`contact_dynamic`] — the joint chain (graph, infection), extinction
//!   times and the monotone coupling.
//! * [`embedded_herds`] — disjoint embedded h-herds inside the evolving
//!   multigraph, switch classification and surgery, drift monitors.
//! * [`harness`] — configuration, RNG streams, experiment drivers and the
//!   validation suite.

#![forbid(unsafe_code)]

pub mod contact_dynamic;
pub mod det_hash;
pub mod embedded_herds;
pub mod h_herds;
pub mod harness;
pub mod herds_sim;
pub mod rng;
pub mod stats;
pub mod switch_graph;
pub mod tree_algebra;

use serde::Serialize;
use thiserror::Error;

/// Version tag baked into serialized caches; bump when canonical codes or
/// table layouts change.
pub const CODE_VERSION: u32 = 1;

/// Why a run stopped before dying. Censored outcomes are first-class and are
/// never silently folded into survival or death.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CensorReason {
    Horizon,
    EventCap,
}

/// Terminal state of one stochastic run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum RunOutcome {
    Died { t: f64 },
    Censored { at: f64, reason: CensorReason },
}

impl RunOutcome {
    pub fn died(&self) -> Option<f64> {
        match self {
            RunOutcome::Died { t } => Some(*t),
            RunOutcome::Censored { .. } => None,
        }
    }

    /// Alive when censored (at the horizon or at the event cap).
    pub fn alive(&self) -> bool {
        matches!(self, RunOutcome::Censored { .. })
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("enumeration overflow: more than {bound} entries for d={d}, h={h}")]
    EnumerationOverflow { d: usize, h: usize, bound: usize },
    #[error("edge {0} is not present")]
    EdgeNotFound(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("internal consistency: {0}")]
    Consistency(String),
    #[error("power iteration did not converge: residual {residual:.3e} after {iterations} iterations")]
    NonConvergence { residual: f64, iterations: usize },
    #[error("bisection bracket [{lo}, {hi}] does not change sign (mu_lo={mu_lo:.4e}, mu_hi={mu_hi:.4e})")]
    Bracket { lo: f64, hi: f64, mu_lo: f64, mu_hi: f64 },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
