//! The herds process on the infinite d-regular tree: event-driven
//! simulation, the marked-particle and freezing variants, boundary
//! functionals and exact generator sums.

mod functionals;
mod herds;
mod marked;
mod tree_cp;

pub use functionals::{
    apply_jump, boundary_pairs, evaluate_functional, functionals, generator_apply,
    generator_apply_all,
};
pub use herds::{
    estimate_survival, run_herds, HerdsEngine, HerdsInit, HerdsRunResult, HerdsSnapshot,
    SurvivalEstimate,
};
pub use marked::{
    run_frozen_stats, run_marked, FrozenStats, MarkedEngine, MarkedHerd, MarkedHerdsState,
    MarkedJump, MarkedRunResult,
};
pub use tree_cp::{tree_cp_extinct_by, tree_cp_survival};

use serde::{Deserialize, Serialize};
use crate::det_hash::DetHashMap;
use std::hash::Hash;

/// Parameters shared by the herd-type simulations.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SimParams {
    pub d: usize,
    /// birth rate per (particle, neighbor slot)
    pub lambda: f64,
    /// split rate per active edge
    pub v: f64,
    pub horizon: f64,
    pub event_cap: u64,
    pub seed: u64,
}

impl SimParams {
    pub fn validate(&self) -> crate::Result<()> {
        if self.d < 3 {
            return Err(crate::Error::InvalidArgument("d must be >= 3".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(crate::Error::InvalidArgument(
                "lambda must be finite and >= 0".into(),
            ));
        }
        if !(self.v >= 0.0 && self.v.is_finite()) {
            return Err(crate::Error::InvalidArgument(
                "v must be finite and >= 0".into(),
            ));
        }
        if !(self.horizon > 0.0) {
            return Err(crate::Error::InvalidArgument("horizon must be positive".into()));
        }
        Ok(())
    }
}

/// Constant-time keyed list: O(1) insert, remove and uniform sampling.
pub(crate) struct KeyedList<K: Eq + Hash + Clone> {
    items: Vec<K>,
    pos: DetHashMap<K, u32>,
}

impl<K: Eq + Hash + Clone> KeyedList<K> {
    pub fn new() -> Self {
        KeyedList {
            items: Vec::new(),
            pos: DetHashMap::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn insert(&mut self, k: K) {
        debug_assert!(!self.pos.contains_key(&k));
        self.pos.insert(k.clone(), self.items.len() as u32);
        self.items.push(k);
    }

    pub fn remove(&mut self, k: &K) {
        let p = self.pos.remove(k).expect("key present in keyed list");
        self.items.swap_remove(p as usize);
        if (p as usize) < self.items.len() {
            let moved = self.items[p as usize].clone();
            self.pos.insert(moved, p);
        }
    }

    pub fn sample<R: rand::Rng>(&self, rng: &mut R) -> &K {
        &self.items[rng.gen_range(0..self.items.len())]
    }
}
