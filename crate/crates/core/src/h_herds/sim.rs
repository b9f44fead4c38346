//! Event-driven simulation of the truncated (h-herds) process: births only
//! inside each herd's shape, unit-rate deaths, and h-splittings of active
//! edges through the tree algebra.

use crate::herds_sim::SimParams;
use crate::rng::{exponential, stream, tag};
use crate::tree_algebra::{ball, h_split, FiniteTree, ShapeTable, TreeAddress};
use crate::{CensorReason, Error, Result, RunOutcome};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::BTreeSet;

/// Dense bitset over shape vertices (shapes stay small).
#[derive(Clone, PartialEq)]
struct Bits(Vec<u64>);

impl Bits {
    fn zero(n: usize) -> Self {
        Bits(vec![0; n.div_ceil(64)])
    }

    fn get(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }

    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    fn clear(&mut self, i: usize) {
        self.0[i / 64] &= !(1 << (i % 64));
    }

    fn count(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }

    fn intersects(&self, other: &Bits) -> bool {
        self.0.iter().zip(&other.0).any(|(a, b)| a & b != 0)
    }

    fn minus_intersects(&self, other: &Bits) -> bool {
        // self & !other nonempty
        self.0.iter().zip(&other.0).any(|(a, b)| a & !b != 0)
    }
}

struct RtHHerd {
    tree: FiniteTree,
    /// in-shape adjacency over vertex indices
    adj: Vec<Vec<u16>>,
    /// all edges as (parent-side idx, child idx); the child's vertex set is
    /// `side_mask`
    edges: Vec<(u16, u16)>,
    side_mask: Vec<Bits>,
    leaf_dist: Vec<u16>,
    occ: Bits,
    particles: usize,
    birth_weight: u64,
    active: Vec<u16>,
}

impl RtHHerd {
    fn build(tree: FiniteTree, occ_set: &BTreeSet<TreeAddress>) -> Result<Self> {
        let n = tree.len();
        let mut adj = vec![Vec::new(); n];
        for (i, nbs) in (0..n).map(|i| (i, tree.neighbors_idx(i))) {
            adj[i] = nbs.iter().map(|&j| j as u16).collect();
        }
        let mut edges = Vec::with_capacity(n - 1);
        let mut side_mask = Vec::with_capacity(n - 1);
        for (i, j) in tree.edges_idx() {
            // the deeper endpoint is the child; its side is its descendant set
            let (p, c) = if tree.address(i).depth() < tree.address(j).depth() {
                (i, j)
            } else {
                (j, i)
            };
            let child_addr = tree.address(c).clone();
            let mut mask = Bits::zero(n);
            for (k, a) in tree.vertices().iter().enumerate() {
                if child_addr.is_prefix_of(a) {
                    mask.set(k);
                }
            }
            edges.push((p as u16, c as u16));
            side_mask.push(mask);
        }
        // multi-source BFS from the leaves
        let mut leaf_dist = vec![u16::MAX; n];
        let mut queue = std::collections::VecDeque::new();
        if n == 1 {
            leaf_dist[0] = 0;
        }
        for i in 0..n {
            if adj[i].len() == 1 {
                leaf_dist[i] = 0;
                queue.push_back(i);
            }
        }
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i] {
                if leaf_dist[j as usize] == u16::MAX {
                    leaf_dist[j as usize] = leaf_dist[i] + 1;
                    queue.push_back(j as usize);
                }
            }
        }
        let mut occ = Bits::zero(n);
        for a in occ_set {
            let i = tree
                .index_of(a)
                .ok_or_else(|| Error::InvalidState(format!("{a:?} outside its shape")))?;
            occ.set(i);
        }
        let mut herd = RtHHerd {
            tree,
            adj,
            edges,
            side_mask,
            leaf_dist,
            occ,
            particles: occ_set.len(),
            birth_weight: 0,
            active: Vec::new(),
        };
        herd.refresh();
        Ok(herd)
    }

    fn refresh(&mut self) {
        self.particles = self.occ.count();
        let mut w = 0u64;
        for i in 0..self.adj.len() {
            if self.occ.get(i) {
                continue;
            }
            w += self.adj[i].iter().filter(|&&j| self.occ.get(j as usize)).count() as u64;
        }
        self.birth_weight = w;
        self.active.clear();
        for (e, mask) in self.side_mask.iter().enumerate() {
            if self.occ.intersects(mask) && self.occ.minus_intersects(mask) {
                self.active.push(e as u16);
            }
        }
    }

    fn occupied_addresses(&self) -> BTreeSet<TreeAddress> {
        (0..self.adj.len())
            .filter(|&i| self.occ.get(i))
            .map(|i| self.tree.address(i).clone())
            .collect()
    }

    /// minimum over particles of the in-shape distance to a leaf
    fn leaf_distance(&self) -> u16 {
        (0..self.adj.len())
            .filter(|&i| self.occ.get(i))
            .map(|i| self.leaf_dist[i])
            .min()
            .unwrap_or(u16::MAX)
    }

    fn touches_leaf(&self) -> bool {
        self.leaf_distance() == 0
    }
}

#[derive(Debug, Clone)]
pub struct HRunResult {
    pub outcome: RunOutcome,
    pub events: u64,
    /// first time a particle stood on a leaf of its shape, if ever
    pub tau_leaf: Option<f64>,
    pub final_herds: usize,
    pub final_particles: usize,
}

#[derive(Clone, Copy, Default)]
pub struct HRunChecks {
    /// assert that the shape of every herd stays in the shape table
    pub table_membership: bool,
    /// assert the split monotonicity of the minimum particle-to-leaf distance
    pub split_monotonicity: bool,
}

pub struct HHerdsEngine {
    h: usize,
    lambda: f64,
    v: f64,
    herds: Vec<Option<RtHHerd>>,
    free_slots: Vec<u32>,
    particle_total: usize,
    birth_weight_total: u64,
    active_total: usize,
    pub clock: f64,
    pub events: u64,
    rng: ChaCha8Rng,
    checks: HRunChecks,
    table: Option<ShapeTable>,
}

pub type HHerdsInit = Vec<(FiniteTree, BTreeSet<TreeAddress>)>;

impl HHerdsEngine {
    pub fn new(
        params: &SimParams,
        h: usize,
        init: Option<HHerdsInit>,
        run_id: u64,
        checks: HRunChecks,
        table: Option<ShapeTable>,
    ) -> Result<Self> {
        params.validate()?;
        if h == 0 {
            return Err(Error::InvalidArgument("h must be >= 1".into()));
        }
        let init = init.unwrap_or_else(|| {
            vec![(
                ball(params.d, h),
                [TreeAddress::root()].into_iter().collect(),
            )]
        });
        let mut engine = HHerdsEngine {
            h,
            lambda: params.lambda,
            v: params.v,
            herds: Vec::new(),
            free_slots: Vec::new(),
            particle_total: 0,
            birth_weight_total: 0,
            active_total: 0,
            clock: 0.0,
            events: 0,
            rng: stream(params.seed, tag::H_HERDS, run_id),
            checks,
            table,
        };
        for (tree, occ) in init {
            if occ.is_empty() {
                return Err(Error::InvalidState("initial h-herd is empty".into()));
            }
            let herd = RtHHerd::build(tree, &occ)?;
            engine.verify_shape(&herd)?;
            engine.install(herd);
        }
        Ok(engine)
    }

    fn verify_shape(&self, herd: &RtHHerd) -> Result<()> {
        if self.checks.table_membership {
            if let Some(table) = &self.table {
                if !table.contains_tree(&herd.tree) {
                    return Err(Error::Consistency(
                        "herd shape left the enumerated shape table".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn herd_count(&self) -> usize {
        self.herds.len() - self.free_slots.len()
    }

    pub fn particle_count(&self) -> usize {
        self.particle_total
    }

    pub fn any_leaf_touched(&self) -> bool {
        self.herds.iter().flatten().any(|h| h.touches_leaf())
    }

    /// Does some herd consist of a single particle sitting at distance
    /// `h` from every nearest leaf of a `ball_len`-vertex shape? For the
    /// enumerated shape sets this identifies the ball-with-center class.
    pub fn any_ball_center_herd(&self, ball_len: usize, h: usize) -> bool {
        self.herds.iter().flatten().any(|hd| {
            hd.particles == 1 && hd.adj.len() == ball_len && hd.leaf_distance() as usize == h
        })
    }

    pub fn total_rate(&self) -> f64 {
        self.particle_total as f64
            + self.lambda * self.birth_weight_total as f64
            + self.v * self.active_total as f64
    }

    fn install(&mut self, herd: RtHHerd) -> u32 {
        self.particle_total += herd.particles;
        self.birth_weight_total += herd.birth_weight;
        self.active_total += herd.active.len();
        match self.free_slots.pop() {
            Some(s) => {
                self.herds[s as usize] = Some(herd);
                s
            }
            None => {
                self.herds.push(Some(herd));
                (self.herds.len() - 1) as u32
            }
        }
    }

    fn retire(&mut self, slot: u32) -> RtHHerd {
        let herd = self.herds[slot as usize].take().expect("live herd");
        self.particle_total -= herd.particles;
        self.birth_weight_total -= herd.birth_weight;
        self.active_total -= herd.active.len();
        self.free_slots.push(slot);
        herd
    }

    /// (slot, vertex) of a uniform particle
    fn sample_particle(&mut self) -> (u32, u16) {
        let mut k = self.rng.gen_range(0..self.particle_total);
        for (slot, herd) in self.herds.iter().enumerate() {
            let Some(h) = herd else { continue };
            if k >= h.particles {
                k -= h.particles;
                continue;
            }
            for i in 0..h.adj.len() {
                if h.occ.get(i) {
                    if k == 0 {
                        return (slot as u32, i as u16);
                    }
                    k -= 1;
                }
            }
        }
        unreachable!("particle totals out of sync")
    }

    fn sample_weighted_birth(&mut self) -> (u32, u16) {
        // weight of a target vertex is its occupied-neighbor count
        let mut k = self.rng.gen_range(0..self.birth_weight_total);
        for (slot, herd) in self.herds.iter().enumerate() {
            if let Some(h) = herd {
                if k >= h.birth_weight {
                    k -= h.birth_weight;
                    continue;
                }
                for i in 0..h.adj.len() {
                    if h.occ.get(i) {
                        continue;
                    }
                    let w = h.adj[i].iter().filter(|&&j| h.occ.get(j as usize)).count() as u64;
                    if k < w {
                        return (slot as u32, i as u16);
                    }
                    k -= w;
                }
                unreachable!("herd birth weight out of sync")
            }
        }
        unreachable!("birth weight totals out of sync")
    }

    fn sample_split(&mut self) -> (u32, u16) {
        let mut k = self.rng.gen_range(0..self.active_total);
        for (slot, herd) in self.herds.iter().enumerate() {
            if let Some(h) = herd {
                if k >= h.active.len() {
                    k -= h.active.len();
                    continue;
                }
                return (slot as u32, h.active[k]);
            }
        }
        unreachable!("active edge totals out of sync")
    }

    /// one jump; `None` past the horizon or after extinction
    pub fn step(&mut self, horizon: f64) -> Result<Option<()>> {
        if self.particle_total == 0 {
            return Ok(None);
        }
        let death = self.particle_total as f64;
        let birth = self.lambda * self.birth_weight_total as f64;
        let split = self.v * self.active_total as f64;
        let total = death + birth + split;
        let dt = exponential(&mut self.rng, total);
        if self.clock + dt > horizon {
            self.clock = horizon;
            return Ok(None);
        }
        self.clock += dt;
        self.events += 1;
        let u: f64 = self.rng.gen::<f64>() * total;
        if u < death {
            let (slot, i) = self.sample_particle();
            let herd = self.herds[slot as usize].as_mut().unwrap();
            herd.occ.clear(i as usize);
            if herd.particles == 1 {
                self.retire(slot);
            } else {
                self.particle_total -= herd.particles;
                self.birth_weight_total -= herd.birth_weight;
                self.active_total -= herd.active.len();
                herd.refresh();
                let herd = self.herds[slot as usize].as_ref().unwrap();
                self.particle_total += herd.particles;
                self.birth_weight_total += herd.birth_weight;
                self.active_total += herd.active.len();
            }
        } else if u < death + birth {
            let (slot, i) = self.sample_weighted_birth();
            let herd = self.herds[slot as usize].as_mut().unwrap();
            herd.occ.set(i as usize);
            self.particle_total -= herd.particles;
            self.birth_weight_total -= herd.birth_weight;
            self.active_total -= herd.active.len();
            herd.refresh();
            let herd = self.herds[slot as usize].as_ref().unwrap();
            self.particle_total += herd.particles;
            self.birth_weight_total += herd.birth_weight;
            self.active_total += herd.active.len();
        } else {
            let (slot, e) = self.sample_split();
            let prior_leaf_dist = self.herds[slot as usize].as_ref().unwrap().leaf_distance();
            let herd = self.retire(slot);
            let (pi, ci) = herd.edges[e as usize];
            let parent = herd.tree.address(pi as usize).clone();
            let child = herd.tree.address(ci as usize).clone();
            let occ = herd.occupied_addresses();
            let side_parent = herd.tree.side_of_edge(&parent, &child)?;
            let side_child = herd.tree.side_of_edge(&child, &parent)?;
            let sp = h_split(&herd.tree, &parent, &child, self.h)?;
            let sc = h_split(&herd.tree, &child, &parent, self.h)?;
            let occ_p: BTreeSet<TreeAddress> = occ.intersection(&side_parent).cloned().collect();
            let occ_c: BTreeSet<TreeAddress> = occ.intersection(&side_child).cloned().collect();
            debug_assert!(!occ_p.is_empty() && !occ_c.is_empty());
            let hp = RtHHerd::build(sp.tree, &occ_p)?;
            let hc = RtHHerd::build(sc.tree, &occ_c)?;
            self.verify_shape(&hp)?;
            self.verify_shape(&hc)?;
            if self.checks.split_monotonicity {
                let after = hp.leaf_distance().min(hc.leaf_distance());
                if after < prior_leaf_dist {
                    return Err(Error::Consistency(format!(
                        "split decreased the particle-to-leaf distance: {prior_leaf_dist} -> {after}"
                    )));
                }
            }
            self.install(hp);
            self.install(hc);
        }
        Ok(Some(()))
    }
}

/// Run one h-herds realization.
pub fn run_h_herds(
    params: &SimParams,
    h: usize,
    init: Option<HHerdsInit>,
    run_id: u64,
    checks: HRunChecks,
    table: Option<ShapeTable>,
) -> Result<HRunResult> {
    let mut engine = HHerdsEngine::new(params, h, init, run_id, checks, table)?;
    let mut tau_leaf = if engine.any_leaf_touched() {
        Some(0.0)
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
        match engine.step(params.horizon)? {
            None => {
                if engine.particle_count() == 0 {
                    break RunOutcome::Died { t: engine.clock };
                }
                break RunOutcome::Censored {
                    at: params.horizon,
                    reason: CensorReason::Horizon,
                };
            }
            Some(()) => {
                if tau_leaf.is_none() && engine.any_leaf_touched() {
                    tau_leaf = Some(engine.clock);
                }
            }
        }
    };
    Ok(HRunResult {
        outcome,
        events: engine.events,
        tau_leaf,
        final_herds: engine.herd_count(),
        final_particles: engine.particle_count(),
    })
}

/// Monte Carlo estimate of P(some particle reaches a leaf of its shape by
/// time s), starting from the radius-h ball with one root particle.
pub fn tau_leaf_probability(
    params: &SimParams,
    h: usize,
    s: f64,
    reps: usize,
) -> Result<(f64, f64)> {
    let capped = SimParams {
        horizon: s,
        ..*params
    };
    let hits: usize = (0..reps)
        .into_par_iter()
        .map(|r| {
            run_h_herds(&capped, h, None, r as u64, HRunChecks::default(), None)
                .map(|out| out.tau_leaf.map(|t| t <= s).unwrap_or(false) as usize)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    Ok(crate::stats::proportion_se(hits, reps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree_algebra::DEFAULT_ENUM_BOUND;

    fn params(lambda: f64, v: f64) -> SimParams {
        SimParams {
            d: 3,
            lambda,
            v,
            horizon: 100.0,
            event_cap: 100_000,
            seed: 404,
        }
    }

    #[test]
    fn initial_rate_of_root_particle_h1() {
        let p = params(0.9, 2.0);
        let engine = HHerdsEngine::new(&p, 1, None, 0, HRunChecks::default(), None).unwrap();
        // three birth targets, one death clock, no active edges
        assert!((engine.total_rate() - (3.0 * 0.9 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn zero_split_rate_dies_on_the_finite_ball() {
        let p = SimParams {
            d: 3,
            lambda: 0.5,
            v: 0.0,
            horizon: 400.0,
            event_cap: 1_000_000,
            seed: 8,
        };
        let mut died = 0;
        let reps = 300;
        for r in 0..reps {
            let out = run_h_herds(&p, 2, None, r, HRunChecks::default(), None).unwrap();
            if out.outcome.died().is_some() {
                died += 1;
            }
        }
        assert!(died as f64 >= 0.99 * reps as f64, "died {died}/{reps}");
    }

    #[test]
    fn zero_birth_rate_particle_count_decays_exponentially() {
        // E[N_t] = e^{-t}: estimate survival of the single particle at t=1
        let p = SimParams {
            d: 3,
            lambda: 0.0,
            v: 1.0,
            horizon: 1.0,
            event_cap: 10_000,
            seed: 12,
        };
        let reps = 20_000;
        let alive: usize = (0..reps)
            .map(|r| {
                let out = run_h_herds(&p, 2, None, r, HRunChecks::default(), None).unwrap();
                out.final_particles
            })
            .sum();
        let mean = alive as f64 / reps as f64;
        let expect = (-1.0f64).exp();
        let se = (expect * (1.0 - expect) / reps as f64).sqrt();
        assert!(
            (mean - expect).abs() < 4.0 * se,
            "mean particles {mean} vs e^-1 {expect}"
        );
    }

    #[test]
    fn shapes_stay_in_table_and_leaf_distance_is_monotone_at_splits() {
        let table = ShapeTable::enumerate(3, 2, DEFAULT_ENUM_BOUND).unwrap();
        let p = SimParams {
            d: 3,
            lambda: 1.0,
            v: 1.0,
            horizon: 12.0,
            event_cap: 20_000,
            seed: 5150,
        };
        let checks = HRunChecks {
            table_membership: true,
            split_monotonicity: true,
        };
        for r in 0..25 {
            run_h_herds(&p, 2, None, r, checks, Some(table.clone())).unwrap();
        }
    }

    #[test]
    fn tau_leaf_zero_without_births_and_small_s() {
        let p = params(0.0, 1.0);
        let (prob, _) = tau_leaf_probability(&p, 2, 5.0, 500).unwrap();
        assert_eq!(prob, 0.0);
        // with births, at least h birth events are needed, so tiny s gives
        // a vanishing probability
        let p = params(1.0, 1.0);
        let (prob, _) = tau_leaf_probability(&p, 2, 0.01, 2_000).unwrap();
        assert!(prob <= 0.005, "tau_leaf too fast: {prob}");
    }

    #[test]
    fn tau_leaf_nonincreasing_in_h() {
        let p = params(1.0, 1.0);
        let (p2, se2) = tau_leaf_probability(&p, 2, 2.0, 1_500).unwrap();
        let (p4, se4) = tau_leaf_probability(&p, 4, 2.0, 1_500).unwrap();
        let (p6, se6) = tau_leaf_probability(&p, 6, 2.0, 1_500).unwrap();
        assert!(p2 >= p4 - 3.0 * (se2 + se4), "p2={p2} p4={p4}");
        assert!(p4 >= p6 - 3.0 * (se4 + se6), "p4={p4} p6={p6}");
    }
}
