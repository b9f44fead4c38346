//! Disjoint embedded h-herds inside the switching multigraph: switch
//! classification, splitting/relocation surgery, and the scalar functional
//! X with its drift monitors.

use crate::det_hash::{DetHashMap, DetHashSet};
use crate::h_herds::PfResult;
use crate::herds_sim::SimParams;
use crate::rng::{exponential, stream, tag};
use crate::switch_graph::{ball_tree_avoiding, local_ball, loops_up_to, EdgeKey, HalfEdge, Matching};
use crate::tree_algebra::{
    ball_size, canonical_code, h_split, CanonicalCode, FiniteTree, TreeAddress, TypeTable,
};
use crate::{CensorReason, Error, Result};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::{BTreeSet, VecDeque};

/// Eigenfunction values keyed by canonical class code, as exported by the
/// h-herds analysis.
#[derive(Clone)]
pub struct FTable {
    pub d: usize,
    pub h: usize,
    pub mu: f64,
    pub f_min: f64,
    pub f_max: f64,
    map: DetHashMap<CanonicalCode, f64>,
}

impl FTable {
    pub fn from_pf(types: &TypeTable, pf: &PfResult) -> Self {
        let mut map = DetHashMap::default();
        for (class, &value) in types.classes.iter().zip(pf.f.iter()) {
            map.insert(class.code.clone(), value);
        }
        FTable {
            d: types.d,
            h: types.h,
            mu: pf.mu,
            f_min: pf.f_min,
            f_max: pf.f_max,
            map,
        }
    }

    pub fn value(&self, code: &CanonicalCode) -> Result<f64> {
        self.map.get(code).copied().ok_or_else(|| {
            Error::Consistency("class code missing from the eigenfunction table".into())
        })
    }

    /// |ball of radius 2h|, the crowding constant of the embedded analysis.
    pub fn crowding(&self) -> f64 {
        ball_size(self.d, 2 * self.h) as f64
    }
}

/// One embedded h-herd: a tree subgraph of the current multigraph plus its
/// occupied vertex set.
#[derive(Clone)]
pub struct EmbeddedHerd {
    pub id: u64,
    verts: Vec<u32>,
    adj: DetHashMap<u32, Vec<(u32, EdgeKey)>>,
    pub beta: DetHashSet<u32>,
    pub class_code: CanonicalCode,
    pub f_value: f64,
    birth_weight: u64,
}

impl EmbeddedHerd {
    fn build(
        id: u64,
        verts: Vec<u32>,
        edges: Vec<EdgeKey>,
        beta: DetHashSet<u32>,
        d: usize,
        ftable: &FTable,
    ) -> Result<Self> {
        let mut adj: DetHashMap<u32, Vec<(u32, EdgeKey)>> = DetHashMap::default();
        for &v in &verts {
            adj.insert(v, Vec::new());
        }
        for e in &edges {
            let a = e.lo.vertex(d) as u32;
            let b = e.hi.vertex(d) as u32;
            if a == b {
                return Err(Error::InvalidState("self-loop inside an embedded herd".into()));
            }
            adj.get_mut(&a)
                .ok_or_else(|| Error::InvalidState("edge endpoint outside herd".into()))?
                .push((b, *e));
            adj.get_mut(&b)
                .ok_or_else(|| Error::InvalidState("edge endpoint outside herd".into()))?
                .push((a, *e));
        }
        if edges.len() + 1 != verts.len() {
            return Err(Error::InvalidState("embedded herd is not a tree".into()));
        }
        let mut herd = EmbeddedHerd {
            id,
            verts,
            adj,
            beta,
            class_code: CanonicalCode(Vec::new()),
            f_value: 0.0,
            birth_weight: 0,
        };
        herd.reclassify(d, ftable)?;
        Ok(herd)
    }

    fn reclassify(&mut self, d: usize, ftable: &FTable) -> Result<()> {
        let (tree, occ, _) = self.to_abstract(d)?;
        self.class_code = canonical_code(&tree, &occ);
        self.f_value = ftable.value(&self.class_code)?;
        self.refresh_birth_weight();
        Ok(())
    }

    fn refresh_birth_weight(&mut self) {
        let mut w = 0u64;
        for &v in &self.verts {
            if self.beta.contains(&v) {
                continue;
            }
            w += self.adj[&v]
                .iter()
                .filter(|(u, _)| self.beta.contains(u))
                .count() as u64;
        }
        self.birth_weight = w;
    }

    pub fn particles(&self) -> usize {
        self.beta.len()
    }

    pub fn vertices(&self) -> &[u32] {
        &self.verts
    }

    pub fn edge_keys(&self) -> Vec<EdgeKey> {
        let mut out = Vec::with_capacity(self.verts.len().saturating_sub(1));
        for (&v, nbs) in &self.adj {
            for (u, e) in nbs {
                if v < *u {
                    out.push(*e);
                }
            }
        }
        out
    }

    /// Map the embedded tree onto the address space: breadth-first from the
    /// smallest vertex, children in increasing vertex order. Returns the
    /// abstract pair and the vertex-to-address map.
    pub fn to_abstract(
        &self,
        d: usize,
    ) -> Result<(FiniteTree, BTreeSet<TreeAddress>, DetHashMap<u32, TreeAddress>)> {
        let root = *self.verts.iter().min().expect("herd nonempty");
        let mut map: DetHashMap<u32, TreeAddress> = DetHashMap::default();
        map.insert(root, TreeAddress::root());
        let mut queue = VecDeque::from([root]);
        let mut verts: BTreeSet<TreeAddress> = [TreeAddress::root()].into_iter().collect();
        while let Some(v) = queue.pop_front() {
            let base = map[&v].clone();
            let mut children: Vec<u32> = self.adj[&v]
                .iter()
                .map(|(u, _)| *u)
                .filter(|u| !map.contains_key(u))
                .collect();
            children.sort_unstable();
            for (slot, u) in children.into_iter().enumerate() {
                let addr = base.child(slot as u8);
                verts.insert(addr.clone());
                map.insert(u, addr);
                queue.push_back(u);
            }
        }
        let tree = FiniteTree::from_addresses(d, verts)?;
        let occ = self.beta.iter().map(|v| map[v].clone()).collect::<BTreeSet<_>>();
        Ok((tree, occ, map))
    }

    /// Vertex sets of the two components of the herd minus `edge`, the
    /// `edge.lo` side first.
    fn split_components(&self, edge: &EdgeKey, d: usize) -> (Vec<u32>, Vec<u32>) {
        let side = |start: u32| {
            let mut seen: DetHashSet<u32> = DetHashSet::default();
            seen.insert(start);
            let mut queue = vec![start];
            let mut out = vec![start];
            while let Some(v) = queue.pop() {
                for (u, e) in &self.adj[&v] {
                    if e == edge {
                        continue;
                    }
                    if seen.insert(*u) {
                        out.push(*u);
                        queue.push(*u);
                    }
                }
            }
            out
        };
        (
            side(edge.lo.vertex(d) as u32),
            side(edge.hi.vertex(d) as u32),
        )
    }

    fn is_active(&self, edge: &EdgeKey, d: usize) -> bool {
        let (sa, _) = self.split_components(edge, d);
        let occ_a = sa.iter().filter(|v| self.beta.contains(v)).count();
        occ_a > 0 && occ_a < self.beta.len()
    }
}

/// Monitor thresholds. Defaults follow the paper's formulas where they are
/// given; they are reported alongside every run, never hidden.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MonitorConfig {
    pub eps0: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub delta: f64,
    pub mu_bar: f64,
    pub grid_dt: f64,
}

impl MonitorConfig {
    pub fn defaults(ftable: &FTable, lambda: f64, v: f64) -> Self {
        let ch = ftable.crowding();
        let dl = ftable.d as f64 * lambda;
        let (eps0, eps1, delta) = if v > 0.0 && ftable.mu > 0.0 {
            (
                ftable.mu * ftable.f_min / (6.0 * v * ch * ftable.f_max),
                ftable.mu * ftable.f_min / (32.0 * ftable.f_max * v * ch),
                // from |E(z)| <= z^2/2 on the exponential drift bound
                ftable.mu * ftable.f_min
                    / (128.0 * ftable.f_max * ftable.f_max * ch * (dl + 1.0 + v / 2.0)),
            )
        } else {
            (1.0, 1.0, 1.0)
        };
        // upper growth-rate bound by rate counting
        let mu_bar = ((4.0 * ftable.f_max).exp() + 1.0) * 2.0 * ch * (dl + 1.0 + v / 2.0)
            / ftable.f_min.max(1e-12);
        MonitorConfig {
            eps0,
            eps1,
            eps2: 0.01,
            delta,
            mu_bar,
            grid_dt: 0.25,
        }
    }
}

/// JSON-shaped monitor report of one embedded run.
#[derive(Debug, Clone, Serialize)]
pub struct MonitorReport {
    #[serde(rename = "X0")]
    pub x0: f64,
    pub mu: f64,
    pub delta: f64,
    pub t_low: Option<f64>,
    pub t_high: Option<f64>,
    pub t_lambda: Option<f64>,
    pub t_loop: Option<f64>,
    pub bad_switch_count: u64,
    pub horizon: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EmbeddedRunReport {
    pub monitor: MonitorReport,
    pub x_final: f64,
    pub herds_final: usize,
    pub events: u64,
    pub neutral_switches: u64,
    pub good_active_switches: u64,
    pub good_inactive_switches: u64,
    /// violations of the incremental-vs-recomputed X agreement at grid points
    pub x_bookkeeping_violations: u64,
    /// violations of herd disjointness at grid points
    pub disjointness_violations: u64,
    pub censored: Option<CensorReason>,
    /// time-averaged |safe edge set| over grid points
    pub mean_lambda_fraction: f64,
    /// time-averaged herd count over grid points
    pub mean_herds: f64,
}

enum SwitchClass {
    Neutral,
    Good { slot: u32, herd_edge: EdgeKey },
    Bad { slots: Vec<u32> },
}

pub struct EmbeddedEngine {
    d: usize,
    h: usize,
    lambda: f64,
    v: f64,
    pub g: Matching,
    ftable: FTable,
    herds: Vec<Option<EmbeddedHerd>>,
    free_slots: Vec<u32>,
    vertex_owner: Vec<u32>,
    edge_owner: DetHashMap<EdgeKey, u32>,
    particle_total: usize,
    birth_weight_total: u64,
    pub x_value: f64,
    pub clock: f64,
    pub events: u64,
    pub neutral_switches: u64,
    pub good_active_switches: u64,
    pub good_inactive_switches: u64,
    pub bad_switches: u64,
    next_id: u64,
    rng: ChaCha8Rng,
    /// verify the split-surgery identity against the abstract tree algebra
    /// on every good switch
    pub check_surgery: bool,
}

impl EmbeddedEngine {
    pub fn new(
        params: &SimParams,
        h: usize,
        g: Matching,
        initial: Vec<(Vec<u32>, Vec<EdgeKey>, DetHashSet<u32>)>,
        ftable: FTable,
        run_id: u64,
    ) -> Result<Self> {
        params.validate()?;
        let n = g.n();
        let mut engine = EmbeddedEngine {
            d: params.d,
            h,
            lambda: params.lambda,
            v: params.v,
            g,
            ftable,
            herds: Vec::new(),
            free_slots: Vec::new(),
            vertex_owner: vec![u32::MAX; n],
            edge_owner: DetHashMap::default(),
            particle_total: 0,
            birth_weight_total: 0,
            x_value: 0.0,
            clock: 0.0,
            events: 0,
            neutral_switches: 0,
            good_active_switches: 0,
            good_inactive_switches: 0,
            bad_switches: 0,
            next_id: 0,
            rng: stream(params.seed, tag::EMBEDDED, run_id),
            check_surgery: false,
        };
        for (verts, edges, beta) in initial {
            let id = engine.fresh_id();
            let herd = EmbeddedHerd::build(id, verts, edges, beta, params.d, &engine.ftable)?;
            engine.install(herd)?;
        }
        Ok(engine)
    }

    fn fresh_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    pub fn herd_count(&self) -> usize {
        self.herds.len() - self.free_slots.len()
    }

    pub fn herds(&self) -> impl Iterator<Item = &EmbeddedHerd> {
        self.herds.iter().flatten()
    }

    fn install(&mut self, herd: EmbeddedHerd) -> Result<u32> {
        let slot = match self.free_slots.pop() {
            Some(s) => s,
            None => {
                self.herds.push(None);
                (self.herds.len() - 1) as u32
            }
        };
        for &v in &herd.verts {
            if self.vertex_owner[v as usize] != u32::MAX {
                return Err(Error::InvalidState(format!(
                    "herd vertex {v} already owned: disjointness violated"
                )));
            }
            self.vertex_owner[v as usize] = slot;
        }
        for e in herd.edge_keys() {
            self.edge_owner.insert(e, slot);
        }
        self.particle_total += herd.particles();
        self.birth_weight_total += herd.birth_weight;
        self.x_value += herd.f_value;
        self.herds[slot as usize] = Some(herd);
        Ok(slot)
    }

    fn retire(&mut self, slot: u32) -> EmbeddedHerd {
        let herd = self.herds[slot as usize].take().expect("live herd");
        for &v in &herd.verts {
            self.vertex_owner[v as usize] = u32::MAX;
        }
        for e in herd.edge_keys() {
            self.edge_owner.remove(&e);
        }
        self.particle_total -= herd.particles();
        self.birth_weight_total -= herd.birth_weight;
        self.x_value -= herd.f_value;
        self.free_slots.push(slot);
        herd
    }

    /// Is this edge in the safe set: outside every herd, with both endpoint
    /// 2h-balls trees and disjoint from every herd?
    pub fn edge_in_safe_set(&self, e: &EdgeKey) -> bool {
        if self.edge_owner.contains_key(e) {
            return false;
        }
        let z1 = e.lo.vertex(self.d);
        let z2 = e.hi.vertex(self.d);
        let blocked = |w: usize| self.vertex_owner[w] != u32::MAX;
        ball_tree_avoiding(&self.g, z1, 2 * self.h, blocked)
            && ball_tree_avoiding(&self.g, z2, 2 * self.h, blocked)
    }

    /// Count the safe edges (the regrowth-capacity monitor).
    pub fn safe_edge_count(&self) -> usize {
        (0..self.g.edge_count())
            .filter(|&i| self.edge_in_safe_set(&self.g.edge_at(i)))
            .count()
    }

    fn classify(&self, mark: &crate::switch_graph::SwitchMark) -> SwitchClass {
        let (e, f) = mark.edges;
        let o1 = self.edge_owner.get(&e).copied();
        let o2 = self.edge_owner.get(&f).copied();
        match (o1, o2) {
            (None, None) => SwitchClass::Neutral,
            (Some(i), None) => {
                if self.edge_in_safe_set(&f) {
                    SwitchClass::Good { slot: i, herd_edge: e }
                } else {
                    SwitchClass::Bad { slots: vec![i] }
                }
            }
            (None, Some(j)) => {
                if self.edge_in_safe_set(&e) {
                    SwitchClass::Good { slot: j, herd_edge: f }
                } else {
                    SwitchClass::Bad { slots: vec![j] }
                }
            }
            (Some(i), Some(j)) => {
                let mut slots = vec![i];
                if j != i {
                    slots.push(j);
                }
                SwitchClass::Bad { slots }
            }
        }
    }

    /// Grow a fresh one-sided region from `anchor` in the post-switch graph,
    /// never using `entry` (the new edge back into the herd), by `depth`
    /// layers. Returns (vertices with their BFS parents, edges).
    fn fresh_layers(
        &self,
        anchor: u32,
        entry: HalfEdge,
        depth: usize,
        forbidden: &DetHashSet<u32>,
    ) -> Result<(Vec<Vec<u32>>, Vec<EdgeKey>)> {
        let d = self.d;
        let mut layers: Vec<Vec<u32>> = vec![vec![anchor]];
        let mut edges = Vec::new();
        let mut seen: DetHashSet<u32> = DetHashSet::default();
        seen.insert(anchor);
        for _ in 0..depth {
            let mut next = Vec::new();
            for &v in layers.last().unwrap() {
                for a in 0..d {
                    let hx = HalfEdge::new(v as usize, a, d);
                    if v == anchor && hx == entry {
                        continue;
                    }
                    let p = self.g.matched(hx);
                    let w = p.vertex(d) as u32;
                    if seen.contains(&w) {
                        continue;
                    }
                    if self.vertex_owner[w as usize] != u32::MAX || forbidden.contains(&w) {
                        return Err(Error::InvalidState(
                            "regrowth region touched an occupied vertex".into(),
                        ));
                    }
                    seen.insert(w);
                    next.push(w);
                    edges.push(EdgeKey::new(hx, p));
                }
            }
            layers.push(next);
        }
        Ok((layers, edges))
    }

    /// Diameter of a tree given by an edge list (vertices implied).
    fn tree_diameter(verts: &[u32], edges: &[(u32, u32)]) -> usize {
        if verts.len() <= 1 {
            return 0;
        }
        let mut adj: DetHashMap<u32, Vec<u32>> = DetHashMap::default();
        for &v in verts {
            adj.insert(v, Vec::new());
        }
        for &(a, b) in edges {
            adj.get_mut(&a).unwrap().push(b);
            adj.get_mut(&b).unwrap().push(a);
        }
        let bfs = |start: u32| -> (u32, usize) {
            let mut dist: DetHashMap<u32, usize> = DetHashMap::default();
            dist.insert(start, 0);
            let mut queue = VecDeque::from([start]);
            let mut far = (start, 0);
            while let Some(v) = queue.pop_front() {
                let dv = dist[&v];
                if dv > far.1 {
                    far = (v, dv);
                }
                for &u in &adj[&v] {
                    if !dist.contains_key(&u) {
                        dist.insert(u, dv + 1);
                        queue.push_back(u);
                    }
                }
            }
            far
        };
        let (a, _) = bfs(verts[0]);
        bfs(a).1
    }

    /// The active-split surgery: each side keeps its component, gains the
    /// new edge, and regrows into its partner's former region up to the
    /// largest depth keeping the diameter at most 2h.
    fn surgery_active(&mut self, slot: u32, herd_edge: EdgeKey) -> Result<()> {
        let herd = self.retire(slot);
        let d = self.d;
        let (side_lo, side_hi) = herd.split_components(&herd_edge, d);
        // abstract reference for the surgery identity check
        let reference = if self.check_surgery {
            let (tree, occ, map) = herd.to_abstract(d)?;
            let a1 = map[&(herd_edge.lo.vertex(d) as u32)].clone();
            let a2 = map[&(herd_edge.hi.vertex(d) as u32)].clone();
            Some((tree, occ, a1, a2))
        } else {
            None
        };
        let mut forbidden: DetHashSet<u32> = side_lo.iter().chain(side_hi.iter()).copied().collect();
        for (x_half, side) in [(herd_edge.lo, side_lo), (herd_edge.hi, side_hi)] {
            let y_half = self.g.matched(x_half);
            let y = y_half.vertex(d) as u32;
            let new_edge = EdgeKey::new(x_half, y_half);
            // side edges survive the switch untouched
            let side_set: DetHashSet<u32> = side.iter().copied().collect();
            let side_edges: Vec<EdgeKey> = herd
                .edge_keys()
                .into_iter()
                .filter(|e| {
                    *e != herd_edge
                        && side_set.contains(&(e.lo.vertex(d) as u32))
                        && side_set.contains(&(e.hi.vertex(d) as u32))
                })
                .collect();
            let (layers, fresh_edges) =
                self.fresh_layers(y, y_half, self.h.saturating_sub(1), &forbidden)?;
            // largest regrow radius keeping diameter <= 2h
            let mut best: Option<(usize, Vec<u32>, Vec<EdgeKey>)> = None;
            let mut cand_verts: Vec<u32> = side.clone();
            let mut cand_edges: Vec<(u32, u32)> =
                side_edges.iter().map(|e| (e.lo.vertex(d) as u32, e.hi.vertex(d) as u32)).collect();
            let mut kept_fresh: Vec<EdgeKey> = Vec::new();
            let mut fresh_iter = fresh_edges.iter();
            let x_vertex = x_half.vertex(d) as u32;
            cand_verts.push(y);
            cand_edges.push((x_vertex, y));
            let mut fresh_count = 0usize;
            for k in 1..=self.h {
                if k > 1 {
                    let layer = &layers[k - 1];
                    for &w in layer {
                        cand_verts.push(w);
                    }
                    for _ in 0..layer.len() {
                        let e = fresh_iter.next().expect("one discovery edge per vertex");
                        kept_fresh.push(*e);
                        cand_edges.push((e.lo.vertex(d) as u32, e.hi.vertex(d) as u32));
                        fresh_count += 1;
                    }
                }
                if Self::tree_diameter(&cand_verts, &cand_edges) <= 2 * self.h {
                    best = Some((k, cand_verts.clone(), kept_fresh.clone()));
                }
            }
            let (_, verts, fresh) = best.expect("radius 1 always fits");
            let _ = fresh_count;
            let mut edges = side_edges;
            edges.push(new_edge);
            edges.extend(fresh);
            let beta: DetHashSet<u32> = herd
                .beta
                .iter()
                .filter(|b| side_set.contains(b))
                .copied()
                .collect();
            debug_assert!(!beta.is_empty(), "active edge had occupied sides");
            for &v in &verts {
                forbidden.insert(v);
            }
            let id = self.fresh_id();
            let newborn = EmbeddedHerd::build(id, verts, edges, beta, d, &self.ftable)?;
            if let Some((tree, occ, a1, a2)) = &reference {
                let (side_addr, far) = if x_half == herd_edge.lo {
                    (a1.clone(), a2.clone())
                } else {
                    (a2.clone(), a1.clone())
                };
                let split = h_split(tree, &side_addr, &far, self.h)?;
                let kept = tree.side_of_edge(&side_addr, &far)?;
                let occ_side: BTreeSet<TreeAddress> = occ.intersection(&kept).cloned().collect();
                let expect = canonical_code(&split.tree, &occ_side);
                if expect != newborn.class_code {
                    return Err(Error::Consistency(
                        "embedded active split disagrees with the abstract splitting".into(),
                    ));
                }
            }
            self.install(newborn)?;
        }
        self.good_active_switches += 1;
        Ok(())
    }

    /// The inactive-split surgery: keep the occupied side and the new edge,
    /// and re-embed the discarded side into the fresh region breadth-first,
    /// targets chosen by smallest available half-edge slot. The result is
    /// isomorphic to the original herd.
    fn surgery_inactive(&mut self, slot: u32, herd_edge: EdgeKey) -> Result<()> {
        let herd = self.retire(slot);
        let d = self.d;
        let (side_lo, side_hi) = herd.split_components(&herd_edge, d);
        let lo_occupied = side_lo.iter().any(|v| herd.beta.contains(v));
        let (keep, discard, x_half, x2_half) = if lo_occupied {
            (side_lo, side_hi, herd_edge.lo, herd_edge.hi)
        } else {
            (side_hi, side_lo, herd_edge.hi, herd_edge.lo)
        };
        let y_half = self.g.matched(x_half);
        let y = y_half.vertex(d) as u32;
        let new_edge = EdgeKey::new(x_half, y_half);
        let keep_set: DetHashSet<u32> = keep.iter().copied().collect();
        let mut edges: Vec<EdgeKey> = herd
            .edge_keys()
            .into_iter()
            .filter(|e| {
                *e != herd_edge
                    && keep_set.contains(&(e.lo.vertex(d) as u32))
                    && keep_set.contains(&(e.hi.vertex(d) as u32))
            })
            .collect();
        edges.push(new_edge);
        let mut verts = keep.clone();
        verts.push(y);
        // breadth-first re-embedding of the discarded side rooted at its cut
        // vertex, imaged at y
        let x2 = x2_half.vertex(d) as u32;
        let discard_set: DetHashSet<u32> = discard.iter().copied().collect();
        let mut image: DetHashMap<u32, u32> = DetHashMap::default();
        image.insert(x2, y);
        let mut entry_half: DetHashMap<u32, HalfEdge> = DetHashMap::default();
        entry_half.insert(y, y_half);
        let mut used: DetHashSet<u32> = verts.iter().copied().collect();
        let mut queue = VecDeque::from([x2]);
        while let Some(p) = queue.pop_front() {
            let q = image[&p];
            let enter = entry_half[&q];
            let mut children: Vec<u32> = herd.adj[&p]
                .iter()
                .filter(|(u, e)| *e != herd_edge && discard_set.contains(u) && !image.contains_key(u))
                .map(|(u, _)| *u)
                .collect();
            children.sort_unstable();
            let mut slots = (0..d).map(|a| HalfEdge::new(q as usize, a, d));
            for child in children {
                let target = loop {
                    let hq = slots
                        .next()
                        .ok_or_else(|| Error::InvalidState("re-embedding ran out of slots".into()))?;
                    if hq == enter {
                        continue;
                    }
                    let p2 = self.g.matched(hq);
                    let w = p2.vertex(d) as u32;
                    if used.contains(&w) || self.vertex_owner[w as usize] != u32::MAX {
                        return Err(Error::InvalidState(
                            "re-embedding target already occupied".into(),
                        ));
                    }
                    break (w, EdgeKey::new(hq, p2), p2);
                };
                let (w, ek, p2) = target;
                image.insert(child, w);
                entry_half.insert(w, p2);
                used.insert(w);
                verts.push(w);
                edges.push(ek);
                queue.push_back(child);
            }
        }
        let beta = herd.beta.clone();
        let id = herd.id; // relocation keeps the herd's identity
        let newborn = EmbeddedHerd::build(id, verts, edges, beta, d, &self.ftable)?;
        if newborn.class_code != herd.class_code {
            return Err(Error::Consistency(
                "inactive relocation changed the herd's class".into(),
            ));
        }
        self.install(newborn)?;
        self.good_inactive_switches += 1;
        Ok(())
    }

    fn apply_switch_event(&mut self) -> Result<()> {
        let mark = self.g.sample_mark(&mut self.rng);
        let class = self.classify(&mark);
        self.g.apply_switch(&mark)?;
        match class {
            SwitchClass::Neutral => {
                self.neutral_switches += 1;
            }
            SwitchClass::Good { slot, herd_edge } => {
                let active = self.herds[slot as usize]
                    .as_ref()
                    .expect("live herd")
                    .is_active(&herd_edge, self.d);
                if active {
                    self.surgery_active(slot, herd_edge)?;
                } else {
                    self.surgery_inactive(slot, herd_edge)?;
                }
            }
            SwitchClass::Bad { slots } => {
                for slot in slots {
                    self.retire(slot);
                }
                self.bad_switches += 1;
            }
        }
        Ok(())
    }

    fn apply_birth(&mut self) -> Result<()> {
        use rand::Rng;
        let mut k = self.rng.gen_range(0..self.birth_weight_total);
        let mut chosen: Option<(u32, u32)> = None;
        'outer: for (slot, herd) in self.herds.iter().enumerate() {
            let Some(hd) = herd else { continue };
            if k >= hd.birth_weight {
                k -= hd.birth_weight;
                continue;
            }
            for &v in &hd.verts {
                if hd.beta.contains(&v) {
                    continue;
                }
                let w = hd.adj[&v].iter().filter(|(u, _)| hd.beta.contains(u)).count() as u64;
                if k < w {
                    chosen = Some((slot as u32, v));
                    break 'outer;
                }
                k -= w;
            }
            unreachable!("herd birth weight out of sync");
        }
        let (slot, v) = chosen.expect("weights in sync");
        let herd = self.herds[slot as usize].as_mut().unwrap();
        self.particle_total += 1;
        self.birth_weight_total -= herd.birth_weight;
        self.x_value -= herd.f_value;
        herd.beta.insert(v);
        herd.reclassify(self.d, &self.ftable)?;
        let herd = self.herds[slot as usize].as_ref().unwrap();
        self.birth_weight_total += herd.birth_weight;
        self.x_value += herd.f_value;
        Ok(())
    }

    fn apply_death(&mut self) -> Result<()> {
        use rand::Rng;
        let mut k = self.rng.gen_range(0..self.particle_total);
        let mut chosen: Option<(u32, u32)> = None;
        'outer: for (slot, herd) in self.herds.iter().enumerate() {
            let Some(hd) = herd else { continue };
            if k >= hd.beta.len() {
                k -= hd.beta.len();
                continue;
            }
            for &v in &hd.verts {
                if hd.beta.contains(&v) {
                    if k == 0 {
                        chosen = Some((slot as u32, v));
                        break 'outer;
                    }
                    k -= 1;
                }
            }
            unreachable!("particle counts out of sync");
        }
        let (slot, v) = chosen.expect("counts in sync");
        let herd = self.herds[slot as usize].as_mut().unwrap();
        if herd.beta.len() == 1 {
            self.retire(slot);
        } else {
            self.particle_total -= 1;
            self.birth_weight_total -= herd.birth_weight;
            self.x_value -= herd.f_value;
            herd.beta.remove(&v);
            herd.reclassify(self.d, &self.ftable)?;
            let herd = self.herds[slot as usize].as_ref().unwrap();
            self.birth_weight_total += herd.birth_weight;
            self.x_value += herd.f_value;
        }
        Ok(())
    }

    /// one jump; `None` past the horizon
    pub fn step(&mut self, horizon: f64) -> Result<Option<()>> {
        use rand::Rng;
        let death = self.particle_total as f64;
        let birth = self.lambda * self.birth_weight_total as f64;
        let switch = self.g.total_switch_rate(self.v);
        let total = death + birth + switch;
        if total <= 0.0 {
            self.clock = horizon;
            return Ok(None);
        }
        let dt = exponential(&mut self.rng, total);
        if self.clock + dt > horizon {
            self.clock = horizon;
            return Ok(None);
        }
        self.clock += dt;
        self.events += 1;
        let u: f64 = self.rng.gen::<f64>() * total;
        if u < death {
            self.apply_death()?;
        } else if u < death + birth {
            self.apply_birth()?;
        } else {
            self.apply_switch_event()?;
        }
        Ok(Some(()))
    }

    /// Recompute X from scratch.
    pub fn x_recomputed(&self) -> f64 {
        self.herds().map(|h| h.f_value).sum()
    }

    /// Full disjointness re-verification.
    pub fn disjointness_ok(&self) -> bool {
        let mut owned: DetHashSet<u32> = DetHashSet::default();
        for herd in self.herds() {
            for &v in &herd.verts {
                if !owned.insert(v) {
                    return false;
                }
            }
        }
        for herd in self.herds() {
            for e in herd.edge_keys() {
                if !self.g.contains_edge(&e) {
                    return false;
                }
            }
        }
        true
    }
}

/// Greedy initial family: vertices with tree h-balls, mutually disjoint,
/// one singleton-occupied ball herd per selected vertex.
pub fn build_initial(
    g: &Matching,
    h: usize,
    target_count: usize,
) -> Vec<(Vec<u32>, Vec<EdgeKey>, DetHashSet<u32>)> {
    let n = g.n();
    let mut used = vec![false; n];
    let mut out = Vec::new();
    for x in 0..n {
        if out.len() >= target_count {
            break;
        }
        if !ball_tree_avoiding(g, x, h, |w| used[w]) {
            continue;
        }
        let ball = local_ball(g, x, h);
        debug_assert!(ball.is_tree);
        for &v in &ball.vertices {
            used[v] = true;
        }
        let verts: Vec<u32> = ball.vertices.iter().map(|&v| v as u32).collect();
        let beta: DetHashSet<u32> = [x as u32].into_iter().collect();
        out.push((verts, ball.induced_edges, beta));
    }
    out
}

pub struct EmbeddedRunConfig {
    pub n: usize,
    pub h: usize,
    pub target_herds: usize,
    pub monitors: Option<MonitorConfig>,
    pub check_surgery: bool,
    pub event_cap: u64,
}

/// Full joint run of (graph, embedded herds) with drift monitors evaluated
/// on the configured time grid.
pub fn run_embedded(
    params: &SimParams,
    cfg: &EmbeddedRunConfig,
    types: &TypeTable,
    pf: &PfResult,
    run_id: u64,
) -> Result<EmbeddedRunReport> {
    let ftable = FTable::from_pf(types, pf);
    let mut seed_rng = stream(params.seed, tag::MATCHING, run_id);
    let g = Matching::sample(cfg.n, params.d, &mut seed_rng)?;
    let initial = build_initial(&g, cfg.h, cfg.target_herds);
    let monitors = cfg
        .monitors
        .unwrap_or_else(|| MonitorConfig::defaults(&ftable, params.lambda, params.v));
    let mut engine = EmbeddedEngine::new(params, cfg.h, g, initial, ftable, run_id)?;
    engine.check_surgery = cfg.check_surgery;
    let x0 = engine.x_value;
    let mu = engine.ftable.mu;
    let n = cfg.n as f64;
    let d = params.d as f64;

    let mut t_low = None;
    let mut t_high = None;
    let mut t_lambda = None;
    let mut t_loop = None;
    let mut x_violations = 0u64;
    let mut disjoint_violations = 0u64;
    let mut lambda_fraction_sum = 0.0;
    let mut herd_count_sum = 0.0;
    let mut grid_points = 0u64;
    let mut next_grid = 0.0f64;
    let mut censored = None;

    loop {
        while next_grid <= engine.clock {
            grid_points += 1;
            let x = engine.x_value;
            let recomputed = engine.x_recomputed();
            if (x - recomputed).abs() > 1e-9 * recomputed.abs().max(1.0) {
                x_violations += 1;
            }
            if !engine.disjointness_ok() {
                disjoint_violations += 1;
            }
            let safe = engine.safe_edge_count() as f64;
            lambda_fraction_sum += safe / (d * n / 2.0);
            herd_count_sum += engine.herd_count() as f64;
            if t_low.is_none() && x <= x0 / 2.0 * (mu / 4.0 * next_grid).exp() {
                t_low = Some(next_grid);
            }
            if t_high.is_none() && x >= 2.0 * x0 * (monitors.mu_bar * next_grid).exp() {
                t_high = Some(next_grid);
            }
            if t_lambda.is_none() && safe < (1.0 - monitors.eps1) * d * n / 2.0 {
                t_lambda = Some(next_grid);
            }
            if t_loop.is_none() && loops_up_to(&engine.g, cfg.h) as f64 >= monitors.eps2 * n {
                t_loop = Some(next_grid);
            }
            next_grid += monitors.grid_dt;
        }
        if engine.events >= cfg.event_cap {
            censored = Some(CensorReason::EventCap);
            break;
        }
        if engine.step(params.horizon)?.is_none() {
            break;
        }
    }

    Ok(EmbeddedRunReport {
        monitor: MonitorReport {
            x0,
            mu,
            delta: monitors.delta,
            t_low,
            t_high,
            t_lambda,
            t_loop,
            bad_switch_count: engine.bad_switches,
            horizon: params.horizon,
        },
        x_final: engine.x_value,
        herds_final: engine.herd_count(),
        events: engine.events,
        neutral_switches: engine.neutral_switches,
        good_active_switches: engine.good_active_switches,
        good_inactive_switches: engine.good_inactive_switches,
        x_bookkeeping_violations: x_violations,
        disjointness_violations: disjoint_violations,
        censored,
        mean_lambda_fraction: lambda_fraction_sum / grid_points.max(1) as f64,
        mean_herds: herd_count_sum / grid_points.max(1) as f64,
    })
}

/// Per-herd jump sums of the abstract class behind an embedded herd,
/// enumerated directly from the representative.
pub struct HerdJumpSums {
    pub s_death: f64,
    pub s_birth: f64,
    pub s_split: f64,
    pub f: f64,
}

pub fn herd_jump_sums(
    herd: &EmbeddedHerd,
    d: usize,
    h: usize,
    lambda: f64,
    v: f64,
    ftable: &FTable,
) -> Result<HerdJumpSums> {
    let (tree, occ, _) = herd.to_abstract(d)?;
    let f = ftable.value(&canonical_code(&tree, &occ))?;
    let mut s_death = 0.0;
    for u in &occ {
        let mut rest = occ.clone();
        rest.remove(u);
        let fy = if rest.is_empty() {
            0.0
        } else {
            ftable.value(&canonical_code(&tree, &rest))?
        };
        s_death += fy - f;
    }
    let mut s_birth = 0.0;
    for (i, w) in tree.vertices().iter().enumerate() {
        if occ.contains(w) {
            continue;
        }
        let mult = tree
            .neighbors_idx(i)
            .iter()
            .filter(|&&j| occ.contains(tree.address(j as usize)))
            .count() as f64;
        if mult == 0.0 {
            continue;
        }
        let mut grown = occ.clone();
        grown.insert(w.clone());
        s_birth += lambda * mult * (ftable.value(&canonical_code(&tree, &grown))? - f);
    }
    let mut s_split = 0.0;
    for (a, b) in active_edges_of(&tree, &occ) {
        let sa = h_split(&tree, &a, &b, h)?;
        let sb = h_split(&tree, &b, &a, h)?;
        let occ_a: BTreeSet<TreeAddress> = occ
            .intersection(&tree.side_of_edge(&a, &b)?)
            .cloned()
            .collect();
        let occ_b: BTreeSet<TreeAddress> = occ
            .intersection(&tree.side_of_edge(&b, &a)?)
            .cloned()
            .collect();
        let fa = ftable.value(&canonical_code(&sa.tree, &occ_a))?;
        let fb = ftable.value(&canonical_code(&sb.tree, &occ_b))?;
        s_split += v * (fa + fb - f);
    }
    Ok(HerdJumpSums {
        s_death,
        s_birth,
        s_split,
        f,
    })
}

fn active_edges_of(
    tree: &FiniteTree,
    occ: &BTreeSet<TreeAddress>,
) -> Vec<(TreeAddress, TreeAddress)> {
    crate::tree_algebra::active_edges(crate::tree_algebra::Ambient::Finite(tree), occ)
}

/// The single-herd drift inequality at the safe-edge threshold: with
/// rho = |safe set| / (dn/2) in [1 - eps0, 1], the jump sum
/// S_death + S_birth + rho * S_split must stay at least (mu/2) f. The sum is
/// linear in rho, so checking both endpoints covers the whole range.
pub fn lemma_single_herd_ok(sums: &HerdJumpSums, mu: f64, eps0: f64) -> bool {
    let lhs_low = sums.s_death + sums.s_birth + (1.0 - eps0) * sums.s_split;
    let lhs_high = sums.s_death + sums.s_birth + sums.s_split;
    let rhs = mu / 2.0 * sums.f;
    lhs_low >= rhs - 1e-12 && lhs_high >= rhs - 1e-12
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::h_herds::pf_for;
    use crate::tree_algebra::DEFAULT_ENUM_BOUND;

    fn setup(lambda: f64, v: f64, h: usize) -> (TypeTable, PfResult) {
        let types = TypeTable::enumerate(3, h, DEFAULT_ENUM_BOUND).unwrap();
        let pf = pf_for(&types, lambda, v, 1e-10).unwrap();
        (types, pf)
    }

    #[test]
    fn initial_family_on_a_sample_is_ball_classes() {
        let mut rng = crate::rng::stream(2, tag::MATCHING, 9);
        let g = Matching::sample(2_000, 3, &mut rng).unwrap();
        let herds = build_initial(&g, 2, 30);
        assert!(herds.len() >= 20, "found only {}", herds.len());
        let (types, pf) = setup(1.0, 1.0, 2);
        let ftable = FTable::from_pf(&types, &pf);
        let start_code = types.classes[types.start].code.clone();
        for (i, (verts, edges, beta)) in herds.into_iter().enumerate() {
            let herd = EmbeddedHerd::build(i as u64, verts, edges, beta, 3, &ftable).unwrap();
            assert_eq!(herd.class_code, start_code);
        }
    }

    #[test]
    fn embedded_run_with_surgery_checks() {
        let (types, pf) = setup(0.9, 1.0, 2);
        assert!(pf.mu > 0.0);
        let params = SimParams {
            d: 3,
            lambda: 0.9,
            v: 1.0,
            horizon: 1.5,
            event_cap: 100_000,
            seed: 97,
        };
        let cfg = EmbeddedRunConfig {
            n: 600,
            h: 2,
            target_herds: 12,
            monitors: None,
            check_surgery: true,
            event_cap: 100_000,
        };
        let report = run_embedded(&params, &cfg, &types, &pf, 0).unwrap();
        assert_eq!(report.x_bookkeeping_violations, 0);
        assert_eq!(report.disjointness_violations, 0);
        assert!(report.good_active_switches + report.good_inactive_switches + report.neutral_switches > 0);
    }

    #[test]
    fn v_zero_is_decoupled_finite_contact_processes() {
        let (types, pf) = setup(0.5, 1.0, 1);
        let params = SimParams {
            d: 3,
            lambda: 0.5,
            v: 0.0,
            horizon: 200.0,
            event_cap: 300_000,
            seed: 3,
        };
        let cfg = EmbeddedRunConfig {
            n: 200,
            h: 1,
            target_herds: 8,
            monitors: None,
            check_surgery: false,
            event_cap: 300_000,
        };
        let report = run_embedded(&params, &cfg, &types, &pf, 1).unwrap();
        // no switches at v = 0: every herd is an isolated finite contact
        // process and dies
        assert_eq!(report.herds_final, 0);
        assert!((report.x_final).abs() < 1e-12);
        assert_eq!(report.monitor.bad_switch_count, 0);
    }

    #[test]
    fn single_herd_inequality_on_the_start_class() {
        let (types, pf) = setup(0.9, 1.0, 2);
        let ftable = FTable::from_pf(&types, &pf);
        let mut rng = crate::rng::stream(6, tag::MATCHING, 1);
        let g = Matching::sample(500, 3, &mut rng).unwrap();
        let herds = build_initial(&g, 2, 5);
        let eps0 = MonitorConfig::defaults(&ftable, 0.9, 1.0).eps0;
        for (i, (verts, edges, beta)) in herds.into_iter().enumerate() {
            let herd = EmbeddedHerd::build(i as u64, verts, edges, beta, 3, &ftable).unwrap();
            let sums = herd_jump_sums(&herd, 3, 2, 0.9, 1.0, &ftable).unwrap();
            assert!(lemma_single_herd_ok(&sums, ftable.mu, eps0));
        }
    }
}
