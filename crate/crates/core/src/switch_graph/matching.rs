//! The random d-regular multigraph as a fixed-point-free involution on
//! half-edges, and the switching Markov chain on it.

use crate::{Error, Result};
use rand::Rng;

/// Half-edge (vertex, slot), packed as `vertex * d + slot`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HalfEdge(pub u32);

impl HalfEdge {
    pub fn new(vertex: usize, slot: usize, d: usize) -> Self {
        HalfEdge((vertex * d + slot) as u32)
    }

    pub fn vertex(self, d: usize) -> usize {
        self.0 as usize / d
    }

    pub fn slot(self, d: usize) -> usize {
        self.0 as usize % d
    }
}

/// An edge named by its two half-edges, smaller first. Lexicographic order
/// on (vertex, slot) is exactly numeric order on the packed ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeKey {
    pub lo: HalfEdge,
    pub hi: HalfEdge,
}

impl EdgeKey {
    pub fn new(a: HalfEdge, b: HalfEdge) -> Self {
        if a.0 <= b.0 {
            EdgeKey { lo: a, hi: b }
        } else {
            EdgeKey { lo: b, hi: a }
        }
    }
}

/// A switch mark: an unordered pair of distinct edges plus a sign. The
/// positive switch rewires smaller-with-smaller half-edges, the negative one
/// crosses them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SwitchMark {
    pub edges: (EdgeKey, EdgeKey),
    pub positive: bool,
}

/// Perfect matching of the nd half-edges; the multigraph it induces.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Matching {
    n: usize,
    d: usize,
    pair: Vec<u32>,
    /// edge list: the lex-smaller half-edge of every edge
    edges: Vec<u32>,
    /// position of each half-edge's edge in `edges` (u32::MAX for the larger
    /// endpoint)
    edge_pos: Vec<u32>,
}

impl std::fmt::Debug for Matching {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Matching(n={}, d={}, pair={:?})", self.n, self.d, self.pair)
    }
}

impl Matching {
    /// Build from an explicit pairing array (pair[h] = matched half-edge).
    pub fn from_pairing(n: usize, d: usize, pair: Vec<u32>) -> Result<Self> {
        if n * d != pair.len() {
            return Err(Error::InvalidArgument(format!(
                "pairing length {} != n*d = {}",
                pair.len(),
                n * d
            )));
        }
        if (n * d) % 2 != 0 {
            return Err(Error::InvalidArgument("nd must be even".into()));
        }
        for (h, &p) in pair.iter().enumerate() {
            if p as usize >= n * d || p as usize == h || pair[p as usize] as usize != h {
                return Err(Error::InvalidArgument(
                    "pairing is not a fixed-point-free involution".into(),
                ));
            }
        }
        let mut m = Matching {
            n,
            d,
            pair,
            edges: Vec::with_capacity(n * d / 2),
            edge_pos: vec![u32::MAX; n * d],
        };
        m.rebuild_edges();
        Ok(m)
    }

    fn rebuild_edges(&mut self) {
        self.edges.clear();
        self.edge_pos.iter_mut().for_each(|p| *p = u32::MAX);
        for h in 0..self.pair.len() as u32 {
            if h < self.pair[h as usize] {
                self.edge_pos[h as usize] = self.edges.len() as u32;
                self.edges.push(h);
            }
        }
    }

    /// Uniform random matching via sequential pairing of a shuffled
    /// half-edge list.
    pub fn sample<R: Rng>(n: usize, d: usize, rng: &mut R) -> Result<Self> {
        if (n * d) % 2 != 0 {
            return Err(Error::InvalidArgument("nd must be even".into()));
        }
        let mut halves: Vec<u32> = (0..(n * d) as u32).collect();
        // Fisher-Yates; pairing consecutive entries of a uniform shuffle is a
        // uniform perfect matching
        for i in (1..halves.len()).rev() {
            let j = rng.gen_range(0..=i);
            halves.swap(i, j);
        }
        let mut pair = vec![0u32; n * d];
        for c in halves.chunks_exact(2) {
            pair[c[0] as usize] = c[1];
            pair[c[1] as usize] = c[0];
        }
        Matching::from_pairing(n, d, pair)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn half_edge_count(&self) -> usize {
        self.pair.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn pairing(&self) -> &[u32] {
        &self.pair
    }

    pub fn matched(&self, h: HalfEdge) -> HalfEdge {
        HalfEdge(self.pair[h.0 as usize])
    }

    /// The vertex at the other end of half-edge `h`'s edge.
    pub fn other_endpoint(&self, h: HalfEdge) -> usize {
        self.matched(h).vertex(self.d)
    }

    pub fn edge_at(&self, idx: usize) -> EdgeKey {
        let lo = HalfEdge(self.edges[idx]);
        EdgeKey::new(lo, self.matched(lo))
    }

    pub fn contains_edge(&self, e: &EdgeKey) -> bool {
        self.pair[e.lo.0 as usize] == e.hi.0
    }

    /// All current edges.
    pub fn edges(&self) -> Vec<EdgeKey> {
        (0..self.edge_count()).map(|i| self.edge_at(i)).collect()
    }

    /// Neighbors of `x` via each of its half-edges (with multiplicity;
    /// includes `x` itself for self-loops).
    pub fn neighbors(&self, x: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.d).map(move |a| self.other_endpoint(HalfEdge::new(x, a, self.d)))
    }

    /// Uniform pair of distinct edges plus a uniform sign.
    pub fn sample_mark<R: Rng>(&self, rng: &mut R) -> SwitchMark {
        let m = self.edge_count();
        debug_assert!(m >= 2);
        let i = rng.gen_range(0..m);
        let j = loop {
            let j = rng.gen_range(0..m);
            if j != i {
                break j;
            }
        };
        SwitchMark {
            edges: (self.edge_at(i), self.edge_at(j)),
            positive: rng.gen_bool(0.5),
        }
    }

    fn set_pair(&mut self, a: HalfEdge, b: HalfEdge) {
        self.pair[a.0 as usize] = b.0;
        self.pair[b.0 as usize] = a.0;
    }

    fn remove_edge_entry(&mut self, e: &EdgeKey) {
        let pos = self.edge_pos[e.lo.0 as usize];
        debug_assert_ne!(pos, u32::MAX);
        let last = *self.edges.last().unwrap();
        self.edges.swap_remove(pos as usize);
        if (pos as usize) < self.edges.len() {
            self.edge_pos[last as usize] = pos;
        }
        self.edge_pos[e.lo.0 as usize] = u32::MAX;
    }

    fn add_edge_entry(&mut self, a: HalfEdge, b: HalfEdge) {
        let lo = if a.0 <= b.0 { a } else { b };
        self.edge_pos[lo.0 as usize] = self.edges.len() as u32;
        self.edges.push(lo.0);
    }

    /// Apply a switch in place. With e = {(x,a),(y,b)} and
    /// e' = {(x',a'),(y',b')}, both lex-ordered, the positive sign pairs
    /// (x,a) with (x',a') and (y,b) with (y',b'); the negative sign pairs
    /// (x,a) with (y',b') and (y,b) with (x',a'). Returns the two new edges.
    pub fn apply_switch(&mut self, mark: &SwitchMark) -> Result<(EdgeKey, EdgeKey)> {
        let (e, f) = mark.edges;
        if e == f {
            return Err(Error::InvalidArgument("switch needs two distinct edges".into()));
        }
        if !self.contains_edge(&e) || !self.contains_edge(&f) {
            return Err(Error::EdgeNotFound(format!("{e:?} / {f:?}")));
        }
        self.remove_edge_entry(&e);
        self.remove_edge_entry(&f);
        let (n1, n2) = if mark.positive {
            ((e.lo, f.lo), (e.hi, f.hi))
        } else {
            ((e.lo, f.hi), (e.hi, f.lo))
        };
        self.set_pair(n1.0, n1.1);
        self.set_pair(n2.0, n2.1);
        self.add_edge_entry(n1.0, n1.1);
        self.add_edge_entry(n2.0, n2.1);
        debug_assert!(self.debug_involution_ok());
        Ok((EdgeKey::new(n1.0, n1.1), EdgeKey::new(n2.0, n2.1)))
    }

    fn debug_involution_ok(&self) -> bool {
        self.pair
            .iter()
            .enumerate()
            .all(|(h, &p)| p as usize != h && self.pair[p as usize] as usize == h)
    }

    /// Total switching rate (v/2)((nd/2) - 1) of the chain with per-mark
    /// rate v/(nd).
    pub fn total_switch_rate(&self, v: f64) -> f64 {
        v / 2.0 * (self.edge_count() as f64 - 1.0)
    }

    /// Waiting time to the next switch and the mark performing it;
    /// `(INFINITY, None)` when v = 0.
    pub fn draw_switch_event<R: Rng>(&self, v: f64, rng: &mut R) -> (f64, Option<SwitchMark>) {
        let rate = self.total_switch_rate(v);
        if rate <= 0.0 {
            return (f64::INFINITY, None);
        }
        let dt = crate::rng::exponential(rng, rate);
        (dt, Some(self.sample_mark(rng)))
    }

    /// Text serialization: "n d" header then the nd pairing indices.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.n, self.d);
        let body: Vec<String> = self.pair.iter().map(|p| p.to_string()).collect();
        s.push_str(&body.join(" "));
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut tokens = text.split_whitespace();
        let n: usize = tokens
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::InvalidArgument("missing n".into()))?;
        let d: usize = tokens
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::InvalidArgument("missing d".into()))?;
        let pair: Vec<u32> = tokens
            .map(|t| t.parse::<u32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidArgument(format!("bad pairing entry: {e}")))?;
        Matching::from_pairing(n, d, pair)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, tag};

    #[test]
    fn sample_is_involution_without_fixed_points() {
        let mut rng = stream(3, tag::MATCHING, 0);
        for _ in 0..50 {
            let m = Matching::sample(6, 3, &mut rng).unwrap();
            for h in 0..m.half_edge_count() as u32 {
                let p = m.matched(HalfEdge(h));
                assert_ne!(p.0, h);
                assert_eq!(m.matched(p).0, h);
            }
            assert_eq!(m.edge_count(), 9);
        }
        assert!(Matching::sample(3, 3, &mut rng).is_err());
    }

    #[test]
    fn spec_positive_switch_makes_two_self_loops() {
        // vertices 1,2 (0-indexed 0,1), slots 1,2 (0-indexed 0,1) of d=3:
        // e = {(0,0),(1,0)}, e' = {(0,1),(1,1)}; + switch yields
        // {(0,0),(0,1)} and {(1,0),(1,1)}.
        let d = 3;
        let pair = vec![3, 4, 5, 0, 1, 2]; // (0,s) matched to (1,s)
        let mut m = Matching::from_pairing(2, d, pair).unwrap();
        let e = EdgeKey::new(HalfEdge::new(0, 0, d), HalfEdge::new(1, 0, d));
        let f = EdgeKey::new(HalfEdge::new(0, 1, d), HalfEdge::new(1, 1, d));
        let (a, b) = m
            .apply_switch(&SwitchMark { edges: (e, f), positive: true })
            .unwrap();
        assert_eq!(a, EdgeKey::new(HalfEdge::new(0, 0, d), HalfEdge::new(0, 1, d)));
        assert_eq!(b, EdgeKey::new(HalfEdge::new(1, 0, d), HalfEdge::new(1, 1, d)));
        // both new edges are self-loops
        assert_eq!(a.lo.vertex(d), a.hi.vertex(d));
        assert_eq!(b.lo.vertex(d), b.hi.vertex(d));
    }

    #[test]
    fn switch_is_reversible_by_a_content_equivalent_mark() {
        let mut rng = stream(5, tag::SWITCH, 0);
        for _ in 0..200 {
            let mut m = Matching::sample(8, 3, &mut rng).unwrap();
            let orig = m.clone();
            let mark = m.sample_mark(&mut rng);
            let (a, b) = m.apply_switch(&mark).unwrap();
            assert_ne!(m.pairing(), orig.pairing());
            // one of the two signs on the new pair restores the original
            let restored = [true, false].iter().any(|&positive| {
                let mut probe = m.clone();
                probe
                    .apply_switch(&SwitchMark { edges: (a, b), positive })
                    .map(|_| probe.pairing() == orig.pairing())
                    .unwrap_or(false)
            });
            assert!(restored);
        }
    }

    #[test]
    fn degrees_are_preserved() {
        let mut rng = stream(6, tag::SWITCH, 0);
        let mut m = Matching::sample(10, 3, &mut rng).unwrap();
        for _ in 0..500 {
            let mark = m.sample_mark(&mut rng);
            m.apply_switch(&mark).unwrap();
        }
        for x in 0..10 {
            assert_eq!(m.neighbors(x).count(), 3);
        }
        assert_eq!(m.edge_count(), 15);
    }

    #[test]
    fn stale_marks_are_rejected() {
        let mut rng = stream(7, tag::SWITCH, 0);
        let mut m = Matching::sample(8, 3, &mut rng).unwrap();
        let mark = m.sample_mark(&mut rng);
        m.apply_switch(&mark).unwrap();
        // reusing the same mark now refers to removed edges almost surely
        if !m.contains_edge(&mark.edges.0) || !m.contains_edge(&mark.edges.1) {
            assert!(m.apply_switch(&mark).is_err());
        }
    }

    #[test]
    fn text_roundtrip_is_exact() {
        let mut rng = stream(8, tag::MATCHING, 1);
        let m = Matching::sample(6, 3, &mut rng).unwrap();
        let text = m.to_text();
        let back = Matching::from_text(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn total_rate_formula() {
        let mut rng = stream(9, tag::MATCHING, 2);
        let m = Matching::sample(100, 3, &mut rng).unwrap();
        assert!((m.total_switch_rate(1.0) - 74.5).abs() < 1e-12);
        let (dt, mark) = m.draw_switch_event(0.0, &mut rng);
        assert!(dt.is_infinite() && mark.is_none());
    }
}
