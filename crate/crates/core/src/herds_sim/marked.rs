//! Herds with marked particles, the exclusion rule, and freezing.
//!
//! Two implementations share the transition semantics: `MarkedHerdsState`
//! is a plain value type with an explicit `apply` used by the exact
//! generator sums and as a reference, and `MarkedEngine` is the event-driven
//! simulator. Birth attempts are scheduled at the full rate lambda per
//! (particle, neighbor slot) and resolved through the outcome table; rows
//! without effect consume the attempt, which is the standard thinning
//! equivalent of the adjusted-rate scheme used for plain herds.

use super::{KeyedList, SimParams};
use crate::rng::{exponential, stream, tag};
use crate::tree_algebra::{active_edges, Ambient, TreeAddress};
use crate::{CensorReason, Error, Result, RunOutcome};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use crate::det_hash::{DetHashMap, DetHashSet};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MarkedHerd {
    pub particles: BTreeSet<TreeAddress>,
    pub marked: BTreeSet<TreeAddress>,
}

impl MarkedHerd {
    pub fn is_valid(&self) -> bool {
        !self.particles.is_empty() && self.marked.is_subset(&self.particles)
    }
}

/// A full configuration of the marked (and optionally freezing) herds
/// process. Frozen herds stay in `herds` and are listed in `frozen`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarkedHerdsState {
    pub herds: BTreeMap<u64, MarkedHerd>,
    pub frozen: BTreeSet<u64>,
    pub clock: f64,
    pub next_id: u64,
    /// total number of herds ever frozen (equals `frozen.len()`, which never
    /// shrinks)
    pub frozen_ever: u64,
}

impl MarkedHerdsState {
    /// Single herd with one marked particle at the root.
    pub fn default_init() -> Self {
        let herd = MarkedHerd {
            particles: [TreeAddress::root()].into_iter().collect(),
            marked: [TreeAddress::root()].into_iter().collect(),
        };
        MarkedHerdsState {
            herds: [(0u64, herd)].into_iter().collect(),
            frozen: BTreeSet::new(),
            clock: 0.0,
            next_id: 1,
            frozen_ever: 0,
        }
    }

    pub fn marked_union(&self) -> BTreeSet<TreeAddress> {
        self.herds
            .values()
            .flat_map(|h| h.marked.iter().cloned())
            .collect()
    }

    pub fn marked_count(&self) -> usize {
        self.herds.values().map(|h| h.marked.len()).sum()
    }

    /// address -> id of the unique herd holding a marked particle there
    pub fn exclusion_index(&self) -> Result<BTreeMap<TreeAddress, u64>> {
        let mut idx = BTreeMap::new();
        for (&id, herd) in &self.herds {
            for m in &herd.marked {
                if idx.insert(m.clone(), id).is_some() {
                    return Err(Error::InvalidState(format!(
                        "exclusion rule violated at {m:?}"
                    )));
                }
            }
        }
        Ok(idx)
    }

    pub fn validate(&self, freezing: bool) -> Result<()> {
        for (&id, herd) in &self.herds {
            if !herd.is_valid() {
                return Err(Error::InvalidState(format!("herd {id} invalid")));
            }
            let is_frozen = self.frozen.contains(&id);
            if freezing && herd.marked.is_empty() && !is_frozen {
                return Err(Error::InvalidState(format!(
                    "herd {id} has no marks but is not frozen"
                )));
            }
            if is_frozen && !herd.marked.is_empty() {
                return Err(Error::InvalidState(format!("frozen herd {id} has marks")));
            }
            if !freezing && is_frozen {
                return Err(Error::InvalidState("frozen herd without freezing".into()));
            }
        }
        self.exclusion_index()?;
        Ok(())
    }

    /// Jumps enabled from this state: deaths and birth attempts per particle
    /// of every unfrozen herd, splits per active edge. Attempt jumps with no
    /// effect are included (their rate is real; they just do not change the
    /// state).
    pub fn enabled_jumps(&self, d: usize, lambda: f64, v: f64) -> Vec<(MarkedJump, f64)> {
        let mut out = Vec::new();
        for (&id, herd) in &self.herds {
            if self.frozen.contains(&id) {
                continue;
            }
            for u in &herd.particles {
                out.push((
                    MarkedJump::Death {
                        herd: id,
                        at: u.clone(),
                    },
                    1.0,
                ));
                if lambda > 0.0 {
                    for to in u.neighbors(d) {
                        out.push((
                            MarkedJump::BirthAttempt {
                                herd: id,
                                from: u.clone(),
                                to,
                            },
                            lambda,
                        ));
                    }
                }
            }
            if v > 0.0 {
                for (a, b) in active_edges(Ambient::Infinite { d }, &herd.particles) {
                    out.push((
                        MarkedJump::Split {
                            herd: id,
                            edge: (a, b),
                        },
                        v,
                    ));
                }
            }
        }
        out
    }

    /// Apply one jump, returning the successor state.
    pub fn apply(&self, jump: &MarkedJump, freezing: bool) -> Result<MarkedHerdsState> {
        let mut next = self.clone();
        match jump {
            MarkedJump::Death { herd, at } => {
                let h = next
                    .herds
                    .get_mut(herd)
                    .ok_or_else(|| Error::InvalidState("dead herd".into()))?;
                if !h.particles.remove(at) {
                    return Err(Error::InvalidState("death at empty site".into()));
                }
                h.marked.remove(at);
                if h.particles.is_empty() {
                    // empty herds are deleted, never frozen
                    next.herds.remove(herd);
                } else if freezing && h.marked.is_empty() && !next.frozen.contains(herd) {
                    next.frozen.insert(*herd);
                    next.frozen_ever += 1;
                }
            }
            MarkedJump::BirthAttempt { herd, from, to } => {
                let marked_elsewhere = next
                    .herds
                    .iter()
                    .any(|(&j, h)| j != *herd && h.marked.contains(to));
                let h = next
                    .herds
                    .get_mut(herd)
                    .ok_or_else(|| Error::InvalidState("dead herd".into()))?;
                let from_marked = h.marked.contains(from);
                debug_assert!(h.particles.contains(from));
                debug_assert!(from.is_adjacent(to));
                if h.particles.contains(to) {
                    // occupied in-herd: only a promotion by a marked parent
                    // of an unmarked particle not marked elsewhere succeeds
                    if from_marked && !h.marked.contains(to) && !marked_elsewhere {
                        h.marked.insert(to.clone());
                    }
                } else if from_marked && !marked_elsewhere {
                    h.particles.insert(to.clone());
                    h.marked.insert(to.clone());
                } else {
                    // normal offspring (also the exclusion-blocked marked case)
                    h.particles.insert(to.clone());
                }
            }
            MarkedJump::Split { herd, edge } => {
                let h = next
                    .herds
                    .remove(herd)
                    .ok_or_else(|| Error::InvalidState("dead herd".into()))?;
                let child = if edge.0.depth() > edge.1.depth() {
                    &edge.0
                } else {
                    &edge.1
                };
                let (pa, pb): (BTreeSet<TreeAddress>, BTreeSet<TreeAddress>) = h
                    .particles
                    .iter()
                    .cloned()
                    .partition(|p| child.is_prefix_of(p));
                if pa.is_empty() || pb.is_empty() {
                    return Err(Error::InvalidState("split through inactive edge".into()));
                }
                for particles in [pa, pb] {
                    let marked: BTreeSet<TreeAddress> =
                        h.marked.intersection(&particles).cloned().collect();
                    let id = next.next_id;
                    next.next_id += 1;
                    let frozen_child = freezing && marked.is_empty();
                    next.herds.insert(id, MarkedHerd { particles, marked });
                    if frozen_child {
                        next.frozen.insert(id);
                        next.frozen_ever += 1;
                    }
                }
            }
        }
        Ok(next)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MarkedJump {
    Death { herd: u64, at: TreeAddress },
    BirthAttempt { herd: u64, from: TreeAddress, to: TreeAddress },
    Split { herd: u64, edge: (TreeAddress, TreeAddress) },
}

// ---------------------------------------------------------------------------
// event engine
// ---------------------------------------------------------------------------

struct RtHerd {
    id: u64,
    particles: DetHashSet<TreeAddress>,
    marked: DetHashSet<TreeAddress>,
    steiner: DetHashMap<TreeAddress, bool>,
}

impl RtHerd {
    fn build(id: u64, particles: DetHashSet<TreeAddress>, marked: DetHashSet<TreeAddress>) -> Self {
        let mut steiner: DetHashMap<TreeAddress, bool> = DetHashMap::default();
        let mut iter = particles.iter();
        let anchor = iter.next().expect("herd nonempty").clone();
        steiner.insert(anchor.clone(), false);
        for p in iter {
            for w in p.path_to(&anchor) {
                if steiner.contains_key(&w) {
                    break;
                }
                steiner.insert(w, false);
            }
        }
        for p in &particles {
            *steiner.get_mut(p).expect("particle spans") = true;
        }
        RtHerd {
            id,
            particles,
            marked,
            steiner,
        }
    }

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

#[derive(Debug, Clone, Serialize)]
pub struct MarkedRunResult {
    pub outcome: RunOutcome,
    /// time the marked marginal died, when it did
    pub marked_extinct_at: Option<f64>,
    pub frozen_ever: u64,
    pub events: u64,
}

pub struct MarkedEngine {
    d: usize,
    lambda: f64,
    v: f64,
    freezing: bool,
    herds: Vec<Option<RtHerd>>,
    free_slots: Vec<u32>,
    particle_reg: KeyedList<(u32, TreeAddress)>,
    split_reg: KeyedList<(u32, TreeAddress)>,
    /// address -> slot of the herd holding a marked particle there
    exclusion: DetHashMap<TreeAddress, u32>,
    frozen_store: Vec<MarkedHerd>,
    frozen_ids: Vec<u64>,
    marked_total: usize,
    pub clock: f64,
    pub events: u64,
    next_id: u64,
    rng: ChaCha8Rng,
}

impl MarkedEngine {
    pub fn new(
        params: &SimParams,
        init: MarkedHerdsState,
        freezing: bool,
        run_id: u64,
    ) -> Result<Self> {
        params.validate()?;
        init.validate(freezing)?;
        let mut engine = MarkedEngine {
            d: params.d,
            lambda: params.lambda,
            v: params.v,
            freezing,
            herds: Vec::new(),
            free_slots: Vec::new(),
            particle_reg: KeyedList::new(),
            split_reg: KeyedList::new(),
            exclusion: DetHashMap::default(),
            frozen_store: Vec::new(),
            frozen_ids: Vec::new(),
            marked_total: 0,
            clock: init.clock,
            events: 0,
            next_id: init.next_id,
            rng: stream(params.seed, tag::MARKED, run_id),
        };
        for (&id, herd) in &init.herds {
            if init.frozen.contains(&id) {
                engine.frozen_store.push(herd.clone());
                engine.frozen_ids.push(id);
                continue;
            }
            engine.install(
                id,
                herd.particles.iter().cloned().collect(),
                herd.marked.iter().cloned().collect(),
            );
        }
        Ok(engine)
    }

    pub fn marked_count(&self) -> usize {
        self.marked_total
    }

    pub fn frozen_count(&self) -> usize {
        self.frozen_store.len()
    }

    pub fn live_particle_count(&self) -> usize {
        self.particle_reg.len()
    }

    fn install(&mut self, id: u64, particles: DetHashSet<TreeAddress>, marked: DetHashSet<TreeAddress>) {
        if self.freezing && marked.is_empty() {
            self.frozen_store.push(MarkedHerd {
                particles: particles.into_iter().collect(),
                marked: marked.into_iter().collect(),
            });
            self.frozen_ids.push(id);
            return;
        }
        let herd = RtHerd::build(id, particles, marked);
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
        for m in herd.marked.iter() {
            let prev = self.exclusion.insert(m.clone(), slot);
            debug_assert!(prev.is_none(), "exclusion rule violated on install");
        }
        self.marked_total += herd.marked.len();
        for c in herd.steiner_edge_children() {
            self.split_reg.insert((slot, c));
        }
    }

    fn retire(&mut self, slot: u32) -> RtHerd {
        let herd = self.herds[slot as usize].take().expect("live herd");
        for p in herd.particles.iter() {
            self.particle_reg.remove(&(slot, p.clone()));
        }
        for m in herd.marked.iter() {
            self.exclusion.remove(m);
        }
        self.marked_total -= herd.marked.len();
        for c in herd.steiner_edge_children() {
            self.split_reg.remove(&(slot, c));
        }
        self.free_slots.push(slot);
        herd
    }

    fn freeze(&mut self, slot: u32) {
        let herd = self.retire(slot);
        debug_assert!(herd.marked.is_empty());
        self.frozen_ids.push(herd.id);
        self.frozen_store.push(MarkedHerd {
            particles: herd.particles.into_iter().collect(),
            marked: BTreeSet::new(),
        });
    }

    fn fresh_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    /// one jump; `None` past the horizon or after total extinction
    pub fn step(&mut self, horizon: f64) -> Option<()> {
        if self.particle_reg.len() == 0 {
            return None;
        }
        let death = self.particle_reg.len() as f64;
        let attempts = self.lambda * (self.d * self.particle_reg.len()) as f64;
        let split = self.v * self.split_reg.len() as f64;
        let total = death + attempts + split;
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
            self.apply_death(slot, at);
        } else if u < death + attempts {
            let (slot, from) = self.particle_reg.sample(&mut self.rng).clone();
            let s = self.rng.gen_range(0..self.d);
            let to = from.neighbor(self.d, s);
            self.apply_birth_attempt(slot, from, to);
        } else {
            let (slot, child) = self.split_reg.sample(&mut self.rng).clone();
            self.apply_split(slot, child);
        }
        Some(())
    }

    fn apply_death(&mut self, slot: u32, at: TreeAddress) {
        let d = self.d;
        let herd = self.herds[slot as usize].as_mut().expect("live herd");
        herd.particles.remove(&at);
        self.particle_reg.remove(&(slot, at.clone()));
        if herd.marked.remove(&at) {
            self.exclusion.remove(&at);
            self.marked_total -= 1;
        }
        if herd.particles.is_empty() {
            debug_assert!(herd.marked.is_empty());
            self.herds[slot as usize] = None;
            self.free_slots.push(slot);
            return;
        }
        // prune the spanning subtree
        *herd.steiner.get_mut(&at).expect("particle spans") = false;
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
        if self.freezing && self.herds[slot as usize].as_ref().unwrap().marked.is_empty() {
            self.freeze(slot);
        }
    }

    fn apply_birth_attempt(&mut self, slot: u32, from: TreeAddress, to: TreeAddress) {
        let excl = self.exclusion.get(&to).copied();
        let marked_elsewhere = excl.map(|s| s != slot).unwrap_or(false);
        let herd = self.herds[slot as usize].as_mut().expect("live herd");
        let from_marked = herd.marked.contains(&from);
        if herd.particles.contains(&to) {
            if from_marked && !herd.marked.contains(&to) && !marked_elsewhere {
                herd.marked.insert(to.clone());
                self.exclusion.insert(to, slot);
                self.marked_total += 1;
            }
            return;
        }
        // a new particle appears at `to`
        herd.particles.insert(to.clone());
        if from_marked && !marked_elsewhere {
            herd.marked.insert(to.clone());
            self.exclusion.insert(to.clone(), slot);
            self.marked_total += 1;
        }
        if let Some(flag) = herd.steiner.get_mut(&to) {
            *flag = true;
        } else {
            let nb = to
                .neighbors(self.d)
                .into_iter()
                .find(|w| herd.steiner.contains_key(w))
                .expect("offspring touches the spanning subtree");
            let child = if nb.parent().as_ref() == Some(&to) {
                nb
            } else {
                to.clone()
            };
            herd.steiner.insert(to.clone(), true);
            self.split_reg.insert((slot, child));
        }
        self.particle_reg.insert((slot, to));
    }

    fn apply_split(&mut self, slot: u32, edge_child: TreeAddress) {
        let herd = self.retire(slot);
        let (pa, pb): (DetHashSet<TreeAddress>, DetHashSet<TreeAddress>) = herd
            .particles
            .into_iter()
            .partition(|p| edge_child.is_prefix_of(p));
        debug_assert!(!pa.is_empty() && !pb.is_empty(), "split edge was active");
        for particles in [pa, pb] {
            let marked: DetHashSet<TreeAddress> = herd
                .marked
                .iter()
                .filter(|m| particles.contains(*m))
                .cloned()
                .collect();
            let id = self.fresh_id();
            self.install(id, particles, marked);
        }
    }

    /// Full configuration export (live and frozen herds).
    pub fn snapshot(&self) -> MarkedHerdsState {
        let mut herds = BTreeMap::new();
        for herd in self.herds.iter().flatten() {
            herds.insert(
                herd.id,
                MarkedHerd {
                    particles: herd.particles.iter().cloned().collect(),
                    marked: herd.marked.iter().cloned().collect(),
                },
            );
        }
        let mut frozen = BTreeSet::new();
        for (store, &id) in self.frozen_store.iter().zip(&self.frozen_ids) {
            herds.insert(id, store.clone());
            frozen.insert(id);
        }
        MarkedHerdsState {
            herds,
            frozen,
            clock: self.clock,
            next_id: self.next_id,
            frozen_ever: self.frozen_store.len() as u64,
        }
    }
}

/// Run the marked (or freezing) herds process.
///
/// `stop_on_marked_extinction` ends the run as soon as the marked marginal
/// dies; marks never reappear, so the marked marginal is unaffected.
pub fn run_marked(
    params: &SimParams,
    init: Option<MarkedHerdsState>,
    freezing: bool,
    stop_on_marked_extinction: bool,
    run_id: u64,
) -> Result<MarkedRunResult> {
    let init = init.unwrap_or_else(MarkedHerdsState::default_init);
    let mut engine = MarkedEngine::new(params, init, freezing, run_id)?;
    let mut marked_extinct_at = if engine.marked_count() == 0 {
        Some(engine.clock)
    } else {
        None
    };
    let outcome = loop {
        if engine.events >= params.event_cap {
            break RunOutcome::Censored {
                at: engine.clock,
                reason: CensorReason::EventCap,
            };
        }
        if marked_extinct_at.is_some() && stop_on_marked_extinction {
            break RunOutcome::Censored {
                at: engine.clock,
                reason: CensorReason::Horizon,
            };
        }
        match engine.step(params.horizon) {
            None => {
                if engine.live_particle_count() == 0 && engine.frozen_count() == 0 {
                    break RunOutcome::Died { t: engine.clock };
                }
                break RunOutcome::Censored {
                    at: params.horizon,
                    reason: CensorReason::Horizon,
                };
            }
            Some(()) => {
                if marked_extinct_at.is_none() && engine.marked_count() == 0 {
                    marked_extinct_at = Some(engine.clock);
                }
            }
        }
    };
    Ok(MarkedRunResult {
        outcome,
        marked_extinct_at,
        frozen_ever: engine.frozen_count() as u64,
        events: engine.events,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FrozenStats {
    /// mean/SE of the total frozen-herd count over runs whose marked
    /// marginal died by the horizon
    pub k_mean: f64,
    pub k_se: f64,
    pub completed: usize,
    pub censored: usize,
    /// mean/SE over all runs with censored runs contributing their frozen
    /// count so far: a stochastic lower bound for E[K]
    pub k_lower_mean: f64,
    pub k_lower_se: f64,
    pub reps: usize,
}

/// Estimate the expected number of herds ever frozen, starting from one herd
/// with one marked particle. Runs whose marked marginal is still alive at
/// the horizon (or that hit the event cap) are censored and reported
/// separately; their truncated counts enter only the lower-bound estimator.
pub fn run_frozen_stats(params: &SimParams, reps: usize) -> Result<FrozenStats> {
    let results: Vec<MarkedRunResult> = (0..reps)
        .into_par_iter()
        .map(|r| run_marked(params, None, true, true, r as u64))
        .collect::<Result<Vec<_>>>()?;
    let mut completed = Vec::new();
    let mut all = Vec::new();
    for r in &results {
        let k = r.frozen_ever as f64;
        all.push(k);
        let capped = matches!(
            r.outcome,
            RunOutcome::Censored {
                reason: CensorReason::EventCap,
                ..
            }
        );
        if r.marked_extinct_at.is_some() && !capped {
            completed.push(k);
        }
    }
    let (k_mean, k_se) = crate::stats::mean_se(&completed);
    let (k_lower_mean, k_lower_se) = crate::stats::mean_se(&all);
    Ok(FrozenStats {
        k_mean,
        k_se,
        completed: completed.len(),
        censored: reps - completed.len(),
        k_lower_mean,
        k_lower_se,
        reps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn o() -> TreeAddress {
        TreeAddress::root()
    }

    fn params(lambda: f64, v: f64) -> SimParams {
        SimParams {
            d: 3,
            lambda,
            v,
            horizon: 50.0,
            event_cap: 200_000,
            seed: 31,
        }
    }

    #[test]
    fn lambda_zero_single_marked_dies_without_freezing() {
        let p = params(0.0, 1.0);
        for r in 0..200 {
            let res = run_marked(&p, None, true, false, r).unwrap();
            assert_eq!(res.frozen_ever, 0);
            assert!(res.outcome.died().is_some());
        }
    }

    #[test]
    fn v_zero_freezes_at_most_once() {
        let p = SimParams {
            d: 3,
            lambda: 0.8,
            v: 0.0,
            horizon: 15.0,
            event_cap: 30_000,
            seed: 77,
        };
        for r in 0..60 {
            let res = run_marked(&p, None, true, true, r).unwrap();
            assert!(res.frozen_ever <= 1, "single herd can freeze at most once");
        }
    }

    #[test]
    fn outcome_table_rows() {
        // herd 0: marked at o; herd 1: marked at o.0
        let mut herds = BTreeMap::new();
        herds.insert(
            0,
            MarkedHerd {
                particles: [o()].into_iter().collect(),
                marked: [o()].into_iter().collect(),
            },
        );
        herds.insert(
            1,
            MarkedHerd {
                particles: [o().child(0)].into_iter().collect(),
                marked: [o().child(0)].into_iter().collect(),
            },
        );
        let state = MarkedHerdsState {
            herds,
            frozen: BTreeSet::new(),
            clock: 0.0,
            next_id: 2,
            frozen_ever: 0,
        };
        state.validate(true).unwrap();
        // marked birth attempt into a position marked in another herd yields
        // a normal particle
        let next = state
            .apply(
                &MarkedJump::BirthAttempt {
                    herd: 0,
                    from: o(),
                    to: o().child(0),
                },
                true,
            )
            .unwrap();
        let h0 = &next.herds[&0];
        assert!(h0.particles.contains(&o().child(0)));
        assert!(!h0.marked.contains(&o().child(0)));
        next.validate(true).unwrap();

        // unmarked-target promotion by a marked parent
        let promoted = next
            .apply(
                &MarkedJump::BirthAttempt {
                    herd: 1,
                    from: o().child(0),
                    to: o(),
                },
                true,
            )
            .unwrap();
        // o holds a marked particle of herd 0, so herd 1 gains a normal one
        assert!(promoted.herds[&1].particles.contains(&o()));
        assert!(!promoted.herds[&1].marked.contains(&o()));
        promoted.validate(true).unwrap();
    }

    #[test]
    fn split_freezes_markless_side() {
        let mut herds = BTreeMap::new();
        herds.insert(
            0,
            MarkedHerd {
                particles: [o(), o().child(0)].into_iter().collect(),
                marked: [o()].into_iter().collect(),
            },
        );
        let state = MarkedHerdsState {
            herds,
            frozen: BTreeSet::new(),
            clock: 0.0,
            next_id: 1,
            frozen_ever: 0,
        };
        let next = state
            .apply(
                &MarkedJump::Split {
                    herd: 0,
                    edge: (o(), o().child(0)),
                },
                true,
            )
            .unwrap();
        assert_eq!(next.herds.len(), 2);
        assert_eq!(next.frozen.len(), 1);
        assert_eq!(next.frozen_ever, 1);
        next.validate(true).unwrap();
        // the frozen herd is the markless singleton at o.0
        let fid = *next.frozen.iter().next().unwrap();
        assert!(next.herds[&fid].particles.contains(&o().child(0)));
    }

    #[test]
    fn engine_snapshots_stay_valid() {
        let p = params(0.7, 1.2);
        for r in 0..20 {
            let mut engine =
                MarkedEngine::new(&p, MarkedHerdsState::default_init(), true, r).unwrap();
            for step in 0..300 {
                if engine.step(p.horizon).is_none() {
                    break;
                }
                if step % 25 == 0 {
                    engine.snapshot().validate(true).unwrap();
                }
            }
            engine.snapshot().validate(true).unwrap();
        }
    }

    #[test]
    fn frozen_herds_never_change() {
        let p = params(0.9, 1.5);
        for r in 0..10 {
            let mut engine =
                MarkedEngine::new(&p, MarkedHerdsState::default_init(), true, r).unwrap();
            let mut seen: BTreeMap<u64, MarkedHerd> = BTreeMap::new();
            for _ in 0..400 {
                if engine.step(p.horizon).is_none() {
                    break;
                }
                let snap = engine.snapshot();
                for &id in &snap.frozen {
                    let herd = snap.herds[&id].clone();
                    if let Some(prev) = seen.get(&id) {
                        assert_eq!(prev, &herd, "frozen herd {id} changed");
                    } else {
                        seen.insert(id, herd);
                    }
                }
            }
        }
    }
}
