//! Event engine for the herds process: per-herd contact dynamics on the
//! infinite tree plus splitting of active edges.
//!
//! Rates are maintained exactly: state-changing births at rate lambda per
//! (occupied vertex, unoccupied neighbor) pair, deaths at rate one per
//! particle, splits at rate v per active edge. Active edges are exactly the
//! edges of each herd's occupied-set spanning subtree, maintained
//! incrementally.

use super::{KeyedList, SimParams};
use crate::rng::{exponential, stream, tag};
use crate::tree_algebra::TreeAddress;
use crate::{CensorReason, RunOutcome};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use crate::det_hash::{DetHashMap, DetHashSet};
use std::collections::BTreeSet;

pub type HerdsInit = Vec<BTreeSet<TreeAddress>>;

struct Herd {
    id: u64,
    particles: DetHashSet<TreeAddress>,
    /// unoccupied vertex -> number of occupied neighbors
    frontier: DetHashMap<TreeAddress, u8>,
    birth_weight: u64,
    /// spanning-subtree vertex -> occupied flag
    steiner: DetHashMap<TreeAddress, bool>,
}

impl Herd {
    fn build(d: usize, id: u64, particles: DetHashSet<TreeAddress>) -> Herd {
        let mut frontier: DetHashMap<TreeAddress, u8> = DetHashMap::default();
        for p in &particles {
            for w in p.neighbors(d) {
                if !particles.contains(&w) {
                    *frontier.entry(w).or_insert(0) += 1;
                }
            }
        }
        let birth_weight = frontier.values().map(|&c| c as u64).sum();
        // spanning subtree: union of paths to an anchor particle
        let mut steiner: DetHashMap<TreeAddress, bool> = DetHashMap::default();
        let mut iter = particles.iter();
        let anchor = iter.next().expect("herd nonempty").clone();
        steiner.insert(anchor.clone(), true);
        for p in iter {
            for w in p.path_to(&anchor) {
                if steiner.contains_key(&w) {
                    break;
                }
                steiner.insert(w, false);
            }
        }
        for p in &particles {
            steiner.insert(p.clone(), true);
        }
        Herd {
            id,
            particles,
            frontier,
            birth_weight,
            steiner,
        }
    }

    /// Edges of the spanning subtree, named by their child endpoint.
    fn steiner_edge_children(&self) -> Vec<TreeAddress> {
        self.steiner
            .keys()
            .filter(|x| {
                x.parent()
                    .map(|p| self.steiner.contains_key(&p))
                    .unwrap_or(false)
            })
            .cloned()
            .collect()
    }
}

/// Read-only view handed to observers.
pub struct HerdsSnapshot {
    pub clock: f64,
    pub herd_count: usize,
    pub particle_count: usize,
}

#[derive(Debug, Clone)]
pub struct HerdsRunResult {
    pub outcome: RunOutcome,
    pub events: u64,
    pub final_herds: usize,
    pub final_particles: usize,
}

/// An optional CSV sink receiving one line per event:
/// `time,event_kind,herd_id,payload`.
pub type EventLog<'a> = &'a mut dyn std::io::Write;

pub struct HerdsEngine {
    d: usize,
    lambda: f64,
    v: f64,
    herds: Vec<Option<Herd>>,
    free_slots: Vec<u32>,
    particle_reg: KeyedList<(u32, TreeAddress)>,
    split_reg: KeyedList<(u32, TreeAddress)>,
    total_birth_weight: u64,
    pub clock: f64,
    pub events: u64,
    next_id: u64,
    rng: ChaCha8Rng,
}

pub(crate) enum HerdsEventKind {
    Death,
    Birth,
    Split,
}

impl HerdsEngine {
    pub fn new(params: &SimParams, init: HerdsInit, run_id: u64) -> crate::Result<Self> {
        params.validate()?;
        let mut engine = HerdsEngine {
            d: params.d,
            lambda: params.lambda,
            v: params.v,
            herds: Vec::new(),
            free_slots: Vec::new(),
            particle_reg: KeyedList::new(),
            split_reg: KeyedList::new(),
            total_birth_weight: 0,
            clock: 0.0,
            events: 0,
            next_id: 0,
            rng: stream(params.seed, tag::HERDS, run_id),
        };
        for occ in init {
            if occ.is_empty() {
                return Err(crate::Error::InvalidState("initial herd is empty".into()));
            }
            engine.install_herd(occ.into_iter().collect());
        }
        Ok(engine)
    }

    pub fn herd_count(&self) -> usize {
        self.herds.len() - self.free_slots.len()
    }

    pub fn particle_count(&self) -> usize {
        self.particle_reg.len()
    }

    pub fn active_edge_count(&self) -> usize {
        self.split_reg.len()
    }

    /// Total state-changing jump rate out of the current state.
    pub fn total_rate(&self) -> f64 {
        self.particle_reg.len() as f64
            + self.lambda * self.total_birth_weight as f64
            + self.v * self.split_reg.len() as f64
    }

    pub fn snapshot(&self) -> HerdsSnapshot {
        HerdsSnapshot {
            clock: self.clock,
            herd_count: self.herd_count(),
            particle_count: self.particle_count(),
        }
    }

    /// Occupied sets of the live herds, keyed by herd id.
    pub fn herd_sets(&self) -> Vec<(u64, BTreeSet<TreeAddress>)> {
        self.herds
            .iter()
            .flatten()
            .map(|h| (h.id, h.particles.iter().cloned().collect()))
            .collect()
    }

    fn install_herd(&mut self, particles: DetHashSet<TreeAddress>) -> u32 {
        let id = self.next_id;
        self.next_id += 1;
        let herd = Herd::build(self.d, id, particles);
        let slot = match self.free_slots.pop() {
            Some(s) => {
                self.herds[s as usize] = Some(herd);
                s
            }
            None => {
                self.herds.push(Some(herd));
                (self.herds.len() - 1) as u32
            }
        };
        let herd = self.herds[slot as usize].as_ref().unwrap();
        for p in herd.particles.iter() {
            self.particle_reg.insert((slot, p.clone()));
        }
        for c in herd.steiner_edge_children() {
            self.split_reg.insert((slot, c));
        }
        self.total_birth_weight += herd.birth_weight;
        slot
    }

    fn retire_herd(&mut self, slot: u32) -> Herd {
        let herd = self.herds[slot as usize].take().expect("live herd");
        for p in herd.particles.iter() {
            self.particle_reg.remove(&(slot, p.clone()));
        }
        for c in herd.steiner_edge_children() {
            self.split_reg.remove(&(slot, c));
        }
        self.total_birth_weight -= herd.birth_weight;
        self.free_slots.push(slot);
        herd
    }

    fn apply_birth(&mut self, slot: u32, target: TreeAddress) {
        let d = self.d;
        let herd = self.herds[slot as usize].as_mut().expect("live herd");
        let prev = herd
            .frontier
            .remove(&target)
            .expect("birth target is a frontier vertex");
        herd.birth_weight -= prev as u64;
        self.total_birth_weight -= prev as u64;
        herd.particles.insert(target.clone());
        for w in target.neighbors(d) {
            if herd.particles.contains(&w) {
                continue;
            }
            *herd.frontier.entry(w).or_insert(0) += 1;
            herd.birth_weight += 1;
            self.total_birth_weight += 1;
        }
        // spanning subtree gains at most the edge toward the parent particle
        if let Some(flag) = herd.steiner.get_mut(&target) {
            *flag = true;
        } else {
            let nb = target
                .neighbors(d)
                .into_iter()
                .find(|w| herd.steiner.contains_key(w))
                .expect("birth target touches the spanning subtree");
            let child = if nb.parent().as_ref() == Some(&target) {
                nb
            } else {
                debug_assert_eq!(target.parent().as_ref(), Some(&nb));
                target.clone()
            };
            herd.steiner.insert(target.clone(), true);
            self.split_reg.insert((slot, child));
        }
        self.particle_reg.insert((slot, target));
    }

    fn apply_death(&mut self, slot: u32, at: TreeAddress) {
        let d = self.d;
        let herd = self.herds[slot as usize].as_mut().expect("live herd");
        herd.particles.remove(&at);
        self.particle_reg.remove(&(slot, at.clone()));
        if herd.particles.is_empty() {
            // the last spanning vertex is `at` with no edges left
            debug_assert_eq!(herd.steiner.len(), 1);
            self.total_birth_weight -= herd.birth_weight;
            herd.birth_weight = 0;
            self.herds[slot as usize] = None;
            self.free_slots.push(slot);
            return;
        }
        for w in at.neighbors(d) {
            if herd.particles.contains(&w) {
                continue;
            }
            if let Some(c) = herd.frontier.get_mut(&w) {
                *c -= 1;
                herd.birth_weight -= 1;
                self.total_birth_weight -= 1;
                if *c == 0 {
                    herd.frontier.remove(&w);
                }
            }
        }
        let occ_neighbors = at
            .neighbors(d)
            .into_iter()
            .filter(|w| herd.particles.contains(w))
            .count() as u8;
        if occ_neighbors > 0 {
            herd.frontier.insert(at.clone(), occ_neighbors);
            herd.birth_weight += occ_neighbors as u64;
            self.total_birth_weight += occ_neighbors as u64;
        }
        // prune the spanning subtree from the vacated vertex
        *herd.steiner.get_mut(&at).expect("particle was spanning") = false;
        let mut x = at;
        loop {
            if *herd.steiner.get(&x).expect("in subtree") {
                break;
            }
            let nbs: Vec<TreeAddress> = x
                .neighbors(d)
                .into_iter()
                .filter(|w| herd.steiner.contains_key(w))
                .collect();
            if nbs.len() != 1 {
                break;
            }
            let nb = nbs.into_iter().next().unwrap();
            herd.steiner.remove(&x);
            let child = if nb.parent().as_ref() == Some(&x) {
                nb.clone()
            } else {
                x.clone()
            };
            self.split_reg.remove(&(slot, child));
            x = nb;
        }
    }

    fn apply_split(&mut self, slot: u32, edge_child: TreeAddress) -> (u32, u32, u64, u64, u64) {
        let herd = self.retire_herd(slot);
        let parent_id = herd.id;
        let (side_a, side_b): (DetHashSet<TreeAddress>, DetHashSet<TreeAddress>) = herd
            .particles
            .into_iter()
            .partition(|p| edge_child.is_prefix_of(p));
        debug_assert!(!side_a.is_empty() && !side_b.is_empty(), "split edge was active");
        let sa = self.install_herd(side_a);
        let sb = self.install_herd(side_b);
        let ia = self.herds[sa as usize].as_ref().unwrap().id;
        let ib = self.herds[sb as usize].as_ref().unwrap().id;
        (sa, sb, parent_id, ia, ib)
    }

    /// Advance one jump. Returns `None` when the process has died or the
    /// next jump falls beyond `horizon`.
    pub(crate) fn step(&mut self, horizon: f64) -> Option<(HerdsEventKind, u64)> {
        if self.particle_reg.len() == 0 {
            return None;
        }
        let death = self.particle_reg.len() as f64;
        let birth = self.lambda * self.total_birth_weight as f64;
        let split = self.v * self.split_reg.len() as f64;
        let total = death + birth + split;
        let dt = exponential(&mut self.rng, total);
        if self.clock + dt > horizon {
            self.clock = horizon;
            return None;
        }
        self.clock += dt;
        self.events += 1;
        let u: f64 = self.rng.gen::<f64>() * total;
        if u < death {
            let (slot, at) = self.particle_reg.sample(&mut self.rng).clone();
            let id = self.herds[slot as usize].as_ref().unwrap().id;
            self.apply_death(slot, at);
            Some((HerdsEventKind::Death, id))
        } else if u < death + birth {
            // rejection over (particle, slot) pairs realizes the exact
            // target law: targets are hit proportionally to their
            // occupied-neighbor count
            loop {
                let (slot, from) = self.particle_reg.sample(&mut self.rng).clone();
                let s = self.rng.gen_range(0..self.d);
                let target = from.neighbor(self.d, s);
                let herd = self.herds[slot as usize].as_ref().unwrap();
                if !herd.particles.contains(&target) {
                    let id = herd.id;
                    self.apply_birth(slot, target);
                    return Some((HerdsEventKind::Birth, id));
                }
            }
        } else {
            let (slot, child) = self.split_reg.sample(&mut self.rng).clone();
            let (.., parent_id, _, _) = self.apply_split(slot, child);
            Some((HerdsEventKind::Split, parent_id))
        }
    }

    #[cfg(test)]
    fn check_consistency(&self) {
        use crate::tree_algebra::{active_edges, Ambient};
        let mut particles = 0;
        let mut weight = 0u64;
        let mut edges = 0;
        for herd in self.herds.iter().flatten() {
            particles += herd.particles.len();
            let occ: BTreeSet<TreeAddress> = herd.particles.iter().cloned().collect();
            let expect = active_edges(Ambient::Infinite { d: self.d }, &occ);
            edges += expect.len();
            let mut w = 0u64;
            for p in &occ {
                for nb in p.neighbors(self.d) {
                    if !occ.contains(&nb) {
                        w += 1;
                    }
                }
            }
            assert_eq!(herd.birth_weight, w, "birth weight drifted");
            assert_eq!(
                herd.steiner_edge_children().len(),
                expect.len(),
                "spanning edge count drifted"
            );
            weight += w;
        }
        assert_eq!(self.particle_reg.len(), particles);
        assert_eq!(self.total_birth_weight, weight);
        assert_eq!(self.split_reg.len(), edges);
    }
}

/// Observer invoked on a fixed time grid.
pub type HerdsObserver<'a> = &'a mut dyn FnMut(&HerdsSnapshot);

/// Run one herds process realization.
pub fn run_herds(
    params: &SimParams,
    init: Option<HerdsInit>,
    run_id: u64,
    observer: Option<(f64, HerdsObserver)>,
    mut event_log: Option<EventLog>,
) -> crate::Result<HerdsRunResult> {
    let init = init.unwrap_or_else(|| vec![[TreeAddress::root()].into_iter().collect()]);
    let mut engine = HerdsEngine::new(params, init, run_id)?;
    let (grid_dt, mut obs) = match observer {
        Some((dt, f)) => (dt, Some(f)),
        None => (f64::INFINITY, None),
    };
    let mut next_obs = 0.0f64;
    let outcome = loop {
        if engine.events >= params.event_cap {
            break RunOutcome::Censored {
                at: engine.clock,
                reason: CensorReason::EventCap,
            };
        }
        let before = (engine.herd_count(), engine.particle_count());
        match engine.step(params.horizon) {
            None => {
                if engine.particle_count() == 0 {
                    break RunOutcome::Died { t: engine.clock };
                }
                break RunOutcome::Censored {
                    at: params.horizon,
                    reason: CensorReason::Horizon,
                };
            }
            Some((kind, id)) => {
                if let Some(f) = obs.as_mut() {
                    // grid points strictly before the jump see the pre-jump state
                    while next_obs < engine.clock {
                        f(&HerdsSnapshot {
                            clock: next_obs,
                            herd_count: before.0,
                            particle_count: before.1,
                        });
                        next_obs += grid_dt;
                    }
                }
                if let Some(log) = event_log.as_mut() {
                    let kind = match kind {
                        HerdsEventKind::Death => "death",
                        HerdsEventKind::Birth => "birth",
                        HerdsEventKind::Split => "split",
                    };
                    writeln!(
                        log,
                        "{:.6},{},{},{}",
                        engine.clock,
                        kind,
                        id,
                        engine.particle_count()
                    )?;
                }
            }
        }
    };
    // the state is constant after death and up to the horizon; event-cap
    // censoring stops observation at the censor time
    if !matches!(outcome, RunOutcome::Censored { reason: CensorReason::EventCap, .. }) {
        if let Some(f) = obs.as_mut() {
            while next_obs <= params.horizon {
                f(&HerdsSnapshot {
                    clock: next_obs,
                    herd_count: engine.herd_count(),
                    particle_count: engine.particle_count(),
                });
                next_obs += grid_dt;
            }
        }
    }
    Ok(HerdsRunResult {
        outcome,
        events: engine.events,
        final_herds: engine.herd_count(),
        final_particles: engine.particle_count(),
    })
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct SurvivalEstimate {
    pub p: f64,
    pub se: f64,
    pub reps: usize,
    pub alive: usize,
    /// runs that hit the event cap while alive; they are counted as alive
    /// and reported here so censoring is never silent
    pub event_capped: usize,
}

/// Fraction of runs alive at the horizon, with binomial standard error.
/// Replications run on independent substreams keyed by (seed, run id).
pub fn estimate_survival(params: &SimParams, reps: usize) -> crate::Result<SurvivalEstimate> {
    let outcomes: Vec<RunOutcome> = (0..reps)
        .into_par_iter()
        .map(|r| run_herds(params, None, r as u64, None, None).map(|out| out.outcome))
        .collect::<crate::Result<Vec<_>>>()?;
    let alive = outcomes.iter().filter(|o| o.alive()).count();
    let event_capped = outcomes
        .iter()
        .filter(|o| matches!(o, RunOutcome::Censored { reason: CensorReason::EventCap, .. }))
        .count();
    let (p, se) = crate::stats::proportion_se(alive, reps);
    Ok(SurvivalEstimate {
        p,
        se,
        reps,
        alive,
        event_capped,
    })
}
