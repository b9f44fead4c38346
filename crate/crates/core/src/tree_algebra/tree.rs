//! Explicit finite subtrees of the infinite d-regular tree and the splitting
//! operations on them.

use super::address::TreeAddress;
use crate::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap, VecDeque};

/// A connected finite subtree of the infinite d-regular tree, stored as a
/// sorted vertex list with precomputed adjacency. Immutable after
/// construction.
#[derive(Clone, Serialize, Deserialize)]
#[serde(try_from = "RawTree", into = "RawTree")]
pub struct FiniteTree {
    d: usize,
    verts: Vec<TreeAddress>,
    adj: Vec<Vec<u32>>,
}

#[derive(Serialize, Deserialize)]
struct RawTree {
    d: usize,
    verts: Vec<TreeAddress>,
}

impl From<FiniteTree> for RawTree {
    fn from(t: FiniteTree) -> Self {
        RawTree { d: t.d, verts: t.verts }
    }
}

impl TryFrom<RawTree> for FiniteTree {
    type Error = Error;
    fn try_from(raw: RawTree) -> Result<Self> {
        FiniteTree::from_addresses(raw.d, raw.verts.into_iter().collect())
    }
}

impl std::fmt::Debug for FiniteTree {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FiniteTree")
            .field("d", &self.d)
            .field("verts", &self.verts)
            .finish()
    }
}

impl FiniteTree {
    /// Build from a vertex set; the set must be nonempty and connected under
    /// tree adjacency.
    pub fn from_addresses(d: usize, verts: BTreeSet<TreeAddress>) -> Result<Self> {
        if d < 3 {
            return Err(Error::InvalidArgument(format!("degree d={d} must be >= 3")));
        }
        if verts.is_empty() {
            return Err(Error::InvalidArgument("empty vertex set".into()));
        }
        let verts: Vec<TreeAddress> = verts.into_iter().collect();
        let index: HashMap<&TreeAddress, u32> =
            verts.iter().enumerate().map(|(i, a)| (a, i as u32)).collect();
        let mut adj = vec![Vec::new(); verts.len()];
        for (i, a) in verts.iter().enumerate() {
            for nb in a.neighbors(d) {
                if let Some(&j) = index.get(&nb) {
                    adj[i].push(j);
                }
            }
        }
        let tree = FiniteTree { d, verts, adj };
        // connectivity check
        let mut seen = vec![false; tree.len()];
        let mut queue = VecDeque::from([0u32]);
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for &j in &tree.adj[i as usize] {
                if !seen[j as usize] {
                    seen[j as usize] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        if count != tree.len() {
            return Err(Error::InvalidArgument("vertex set is not connected".into()));
        }
        Ok(tree)
    }

    pub fn degree_param(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.verts.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn vertices(&self) -> &[TreeAddress] {
        &self.verts
    }

    pub fn index_of(&self, a: &TreeAddress) -> Option<usize> {
        self.verts.binary_search(a).ok()
    }

    pub fn contains(&self, a: &TreeAddress) -> bool {
        self.index_of(a).is_some()
    }

    pub fn address(&self, i: usize) -> &TreeAddress {
        &self.verts[i]
    }

    pub fn neighbors_idx(&self, i: usize) -> &[u32] {
        &self.adj[i]
    }

    pub fn degree(&self, a: &TreeAddress) -> usize {
        self.index_of(a).map(|i| self.adj[i].len()).unwrap_or(0)
    }

    pub fn contains_edge(&self, a: &TreeAddress, b: &TreeAddress) -> bool {
        a.is_adjacent(b) && self.contains(a) && self.contains(b)
    }

    /// Edges as (index, index) pairs with i < j.
    pub fn edges_idx(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.len().saturating_sub(1));
        for (i, nbs) in self.adj.iter().enumerate() {
            for &j in nbs {
                if i < j as usize {
                    out.push((i, j as usize));
                }
            }
        }
        out
    }

    /// Edges as address pairs.
    pub fn edges(&self) -> Vec<(TreeAddress, TreeAddress)> {
        self.edges_idx()
            .into_iter()
            .map(|(i, j)| (self.verts[i].clone(), self.verts[j].clone()))
            .collect()
    }

    pub fn leaves(&self) -> Vec<TreeAddress> {
        if self.len() == 1 {
            return vec![self.verts[0].clone()];
        }
        self.adj
            .iter()
            .enumerate()
            .filter(|(_, nbs)| nbs.len() == 1)
            .map(|(i, _)| self.verts[i].clone())
            .collect()
    }

    /// Distance within the tree (equals the ambient tree distance, since the
    /// subtree is convex in the infinite tree).
    pub fn dist(&self, a: &TreeAddress, b: &TreeAddress) -> usize {
        a.dist(b)
    }

    fn bfs_farthest(&self, start: usize) -> (usize, usize, Vec<u32>) {
        let mut dist = vec![u32::MAX; self.len()];
        dist[start] = 0;
        let mut queue = VecDeque::from([start]);
        let mut far = start;
        while let Some(i) = queue.pop_front() {
            if dist[i] > dist[far] {
                far = i;
            }
            for &j in &self.adj[i] {
                if dist[j as usize] == u32::MAX {
                    dist[j as usize] = dist[i] + 1;
                    queue.push_back(j as usize);
                }
            }
        }
        (far, dist[far] as usize, dist)
    }

    pub fn diameter(&self) -> usize {
        let (a, _, _) = self.bfs_farthest(0);
        let (_, diam, _) = self.bfs_farthest(a);
        diam
    }

    /// Minimum distance from `w` to a leaf; 0 for a single-vertex tree.
    pub fn dist_to_leaves(&self, w: &TreeAddress) -> Result<usize> {
        let wi = self
            .index_of(w)
            .ok_or_else(|| Error::InvalidArgument(format!("{w:?} not in tree")))?;
        if self.len() == 1 {
            return Ok(0);
        }
        let (_, _, dist) = self.bfs_farthest(wi);
        Ok(self
            .adj
            .iter()
            .enumerate()
            .filter(|(_, nbs)| nbs.len() == 1)
            .map(|(i, _)| dist[i] as usize)
            .min()
            .unwrap())
    }

    /// Vertices of the component of `self` minus the edge `{keep, drop}`
    /// containing `keep`.
    pub fn side_of_edge(&self, keep: &TreeAddress, drop: &TreeAddress) -> Result<BTreeSet<TreeAddress>> {
        let ki = self
            .index_of(keep)
            .ok_or_else(|| Error::EdgeNotFound(format!("{keep:?}-{drop:?}")))?;
        let di = self
            .index_of(drop)
            .ok_or_else(|| Error::EdgeNotFound(format!("{keep:?}-{drop:?}")))?;
        if !keep.is_adjacent(drop) {
            return Err(Error::EdgeNotFound(format!("{keep:?}-{drop:?}")));
        }
        let mut seen = vec![false; self.len()];
        seen[di] = true; // block the far endpoint
        seen[ki] = true;
        let mut queue = VecDeque::from([ki]);
        let mut out = BTreeSet::new();
        out.insert(keep.clone());
        while let Some(i) = queue.pop_front() {
            for &j in &self.adj[i] {
                if !seen[j as usize] {
                    seen[j as usize] = true;
                    out.insert(self.verts[j as usize].clone());
                    queue.push_back(j as usize);
                }
            }
        }
        Ok(out)
    }
}

/// Closed ball of radius `h` around the root of the infinite d-regular tree.
pub fn ball(d: usize, h: usize) -> FiniteTree {
    ball_around(d, &TreeAddress::root(), h, None)
}

/// Closed ball of radius `r` around `center`, optionally excluding the
/// component reached through the neighbor `avoid` (the "one-sided" ball used
/// when regrowing a split side).
pub fn ball_around(
    d: usize,
    center: &TreeAddress,
    r: usize,
    avoid: Option<&TreeAddress>,
) -> FiniteTree {
    let mut verts = BTreeSet::new();
    verts.insert(center.clone());
    let mut frontier = vec![center.clone()];
    for _ in 0..r {
        let mut next = Vec::new();
        for v in &frontier {
            for nb in v.neighbors(d) {
                if let Some(a) = avoid {
                    if nb == *a && v == center {
                        continue;
                    }
                }
                if verts.insert(nb.clone()) {
                    next.push(nb);
                }
            }
        }
        frontier = next;
    }
    FiniteTree::from_addresses(d, verts).expect("ball is connected")
}

/// Result of one h-splitting: the retained-and-regrown side together with the
/// regrow radius actually achieved.
#[derive(Debug, Clone)]
pub struct SplitSide {
    pub tree: FiniteTree,
    pub regrow_radius: usize,
}

/// The h-splitting of `tree` through the edge `{side, far}`, keeping the
/// component of `side`. The far side is regrown as a fresh one-sided ball
/// around `far` of the largest radius `r - 1`, `r <= h`, that keeps the
/// diameter at most `2h`.
pub fn h_split(
    tree: &FiniteTree,
    side: &TreeAddress,
    far: &TreeAddress,
    h: usize,
) -> Result<SplitSide> {
    if h == 0 {
        return Err(Error::InvalidArgument("h must be >= 1".into()));
    }
    if !tree.contains_edge(side, far) {
        return Err(Error::EdgeNotFound(format!("{side:?}-{far:?}")));
    }
    debug_assert!(tree.diameter() <= 2 * h, "precondition: diameter <= 2h");
    let d = tree.degree_param();
    let kept = tree.side_of_edge(side, far)?;

    // Fresh layers around `far` away from `side`: layer 0 is {far} itself.
    let mut best: Option<(BTreeSet<TreeAddress>, usize)> = None;
    let mut grown: BTreeSet<TreeAddress> = kept.clone();
    grown.insert(far.clone());
    let mut frontier = vec![far.clone()];
    for r in 1..=h {
        if r > 1 {
            let mut next = Vec::new();
            for v in &frontier {
                for nb in v.neighbors(d) {
                    if v == far && nb == *side {
                        continue;
                    }
                    if grown.insert(nb.clone()) {
                        next.push(nb);
                    }
                }
            }
            frontier = next;
        }
        let candidate = FiniteTree::from_addresses(d, grown.clone())?;
        if candidate.diameter() <= 2 * h {
            best = Some((grown.clone(), r));
        }
    }
    let (verts, regrow_radius) = best.expect("r = 1 always keeps the diameter at most 2h");
    Ok(SplitSide {
        tree: FiniteTree::from_addresses(d, verts)?,
        regrow_radius,
    })
}

/// Ambient space for occupied sets: the infinite tree or a finite subtree.
#[derive(Clone, Copy)]
pub enum Ambient<'a> {
    Infinite { d: usize },
    Finite(&'a FiniteTree),
}

/// The edges of the minimal subtree spanning `occupied` within the ambient
/// tree; equivalently all edges whose removal separates the occupied set into
/// two nonempty parts. Empty input yields an empty result.
pub fn active_edges(
    ambient: Ambient<'_>,
    occupied: &BTreeSet<TreeAddress>,
) -> Vec<(TreeAddress, TreeAddress)> {
    if occupied.len() <= 1 {
        return Vec::new();
    }
    if let Ambient::Finite(tree) = ambient {
        debug_assert!(occupied.iter().all(|a| tree.contains(a)));
    }
    // Union of the paths from every occupied vertex to a fixed one; paths in
    // a finite subtree agree with paths in the infinite tree.
    let mut iter = occupied.iter();
    let anchor = iter.next().unwrap();
    let mut span: BTreeSet<TreeAddress> = BTreeSet::new();
    span.insert(anchor.clone());
    for s in iter {
        for v in s.path_to(anchor) {
            if !span.insert(v.clone()) {
                break;
            }
        }
    }
    let mut out = Vec::with_capacity(span.len() - 1);
    for v in &span {
        if let Some(p) = v.parent() {
            if span.contains(&p) {
                out.push((p, v.clone()));
            }
        }
    }
    debug_assert_eq!(out.len(), span.len() - 1);
    out
}

/// Apply the d successive h-splittings at an interior vertex `u` (neighbors
/// taken in non-increasing order of depth, ties by address order). For a
/// shape reachable from the radius-h ball this regrows the full ball around
/// `u`.
pub fn regrow_scheme(tree: &FiniteTree, u: &TreeAddress, h: usize) -> Result<FiniteTree> {
    let d = tree.degree_param();
    if tree.degree(u) != d {
        return Err(Error::InvalidArgument(format!(
            "{u:?} has degree {} != d = {d}; regrow scheme needs an interior vertex",
            tree.degree(u)
        )));
    }
    let ui = tree.index_of(u).unwrap();
    let mut nbrs: Vec<TreeAddress> = tree.neighbors_idx(ui)
        .iter()
        .map(|&j| tree.address(j as usize).clone())
        .collect();
    let depth = |t: &FiniteTree, v: &TreeAddress| -> usize {
        t.side_of_edge(v, u)
            .unwrap()
            .iter()
            .map(|w| u.dist(w))
            .max()
            .unwrap()
    };
    let mut keyed: Vec<(usize, TreeAddress)> =
        nbrs.drain(..).map(|v| (depth(tree, &v), v)).collect();
    keyed.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut current = tree.clone();
    for (_, v) in keyed {
        current = h_split(&current, u, &v, h)?.tree;
    }
    Ok(current)
}

/// Vertex count of the radius-h ball: `1 + d((d-1)^h - 1)/(d-2)`.
pub fn ball_size(d: usize, h: usize) -> usize {
    let mut total = 1usize;
    let mut layer = d;
    for _ in 0..h {
        total += layer;
        layer *= d - 1;
    }
    total
}

/// Re-embed a (tree, occupied) pair at a fresh random location of the
/// address space with randomly permuted slots. The result is isomorphic to
/// the input with occupied set carried along; used both for fuzzing the
/// canonical code and for placing initial configurations.
pub fn random_reembedding<R: Rng>(
    tree: &FiniteTree,
    occupied: &BTreeSet<TreeAddress>,
    rng: &mut R,
) -> (FiniteTree, BTreeSet<TreeAddress>) {
    let d = tree.degree_param();
    // random anchor address of depth <= 2
    let mut anchor = TreeAddress::root();
    for _ in 0..rng.gen_range(0..3usize) {
        let slots = anchor.child_slots(d);
        anchor = anchor.child(rng.gen_range(0..slots) as u8);
    }
    let start = rng.gen_range(0..tree.len());
    let mut map: HashMap<usize, TreeAddress> = HashMap::new();
    map.insert(start, anchor.clone());
    let mut queue = VecDeque::from([start]);
    let mut new_verts = BTreeSet::new();
    new_verts.insert(anchor);
    while let Some(i) = queue.pop_front() {
        let image = map[&i].clone();
        // free slots of the image: all its tree neighbors not already used
        let mut free: Vec<TreeAddress> = image
            .neighbors(d)
            .into_iter()
            .filter(|nb| !new_verts.contains(nb))
            .collect();
        for &j in tree.neighbors_idx(i) {
            let j = j as usize;
            if map.contains_key(&j) {
                continue;
            }
            let k = rng.gen_range(0..free.len());
            let target = free.swap_remove(k);
            new_verts.insert(target.clone());
            map.insert(j, target);
            queue.push_back(j);
        }
    }
    let new_occ = occupied
        .iter()
        .map(|a| map[&tree.index_of(a).expect("occupied in tree")].clone())
        .collect();
    (
        FiniteTree::from_addresses(d, new_verts).expect("isomorphic image is connected"),
        new_occ,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn o() -> TreeAddress {
        TreeAddress::root()
    }

    #[test]
    fn ball_sizes_match_closed_form() {
        assert_eq!(ball(3, 0).len(), 1);
        assert_eq!(ball(3, 1).len(), 4);
        let b2 = ball(3, 2);
        assert_eq!(b2.len(), 10);
        assert_eq!(b2.leaves().len(), 6);
        assert_eq!(ball_size(3, 2), 10);
        assert_eq!(ball_size(4, 3), 1 + 4 * (27 - 1) / 2);
    }

    #[test]
    fn split_of_unit_ball_both_sides() {
        let b1 = ball(3, 1);
        let leaf = o().child(0);
        // keep the center side: regrow the leaf, recovering a 4-vertex star
        let s = h_split(&b1, &o(), &leaf, 1).unwrap();
        assert_eq!(s.tree.len(), 4);
        assert_eq!(s.regrow_radius, 1);
        assert_eq!(s.tree.degree(&o()), 3);
        // keep the leaf side: two-vertex path
        let s = h_split(&b1, &leaf, &o(), 1).unwrap();
        assert_eq!(s.tree.len(), 2);
        assert_eq!(s.regrow_radius, 1);
        assert_eq!(s.tree.diameter(), 1);
    }

    #[test]
    fn split_of_two_ball_child_side() {
        let b2 = ball(3, 2);
        let child = o().child(1);
        let s = h_split(&b2, &child, &o(), 2).unwrap();
        assert!(s.tree.diameter() <= 4);
        assert_eq!(s.regrow_radius, 2);
        // kept the child subtree (3 vertices) + o + o's two other children
        assert_eq!(s.tree.len(), 6);
    }

    #[test]
    fn split_rejects_non_edges() {
        let b1 = ball(3, 1);
        let err = h_split(&b1, &o(), &o().child(0).child(1), 1);
        assert!(matches!(err, Err(Error::EdgeNotFound(_))));
    }

    #[test]
    fn active_edges_small_cases() {
        let d = 3;
        // singleton: no separating edge
        let occ: BTreeSet<_> = [o()].into_iter().collect();
        assert!(active_edges(Ambient::Infinite { d }, &occ).is_empty());
        // adjacent pair: exactly the connecting edge
        let occ: BTreeSet<_> = [o(), o().child(1)].into_iter().collect();
        let e = active_edges(Ambient::Infinite { d }, &occ);
        assert_eq!(e.len(), 1);
        // distance-3 pair: the three path edges
        let far = o().child(0).child(1).child(0);
        let occ: BTreeSet<_> = [o(), far].into_iter().collect();
        let e = active_edges(Ambient::Infinite { d }, &occ);
        assert_eq!(e.len(), 3);
    }

    #[test]
    fn dist_to_leaves_on_balls() {
        let b2 = ball(3, 2);
        assert_eq!(b2.dist_to_leaves(&o()).unwrap(), 2);
        let leaf = o().child(0).child(0);
        assert_eq!(b2.dist_to_leaves(&leaf).unwrap(), 0);
        let single = FiniteTree::from_addresses(3, [o()].into_iter().collect()).unwrap();
        assert_eq!(single.dist_to_leaves(&o()).unwrap(), 0);
    }

    #[test]
    fn regrow_scheme_fixes_balls() {
        let b1 = ball(3, 1);
        let out = regrow_scheme(&b1, &o(), 1).unwrap();
        assert_eq!(out.len(), 4);
        assert_eq!(out.degree(&o()), 3);
        let b2 = ball(3, 2);
        let out = regrow_scheme(&b2, &o(), 2).unwrap();
        assert_eq!(out.len(), 10);
        // non-interior vertex is rejected
        assert!(regrow_scheme(&b1, &o().child(0), 1).is_err());
    }
}
