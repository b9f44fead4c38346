//! Loop counting and local-ball extraction on the half-edge multigraph.

use super::matching::{EdgeKey, HalfEdge, Matching};
use std::collections::HashMap;

/// Number of loops of length exactly `m`: self-loops (m = 1), unordered
/// pairs of parallel edges (m = 2), and cycles on m distinct vertices
/// counted as edge sets (m >= 3).
pub fn count_loops(g: &Matching, m: usize) -> usize {
    assert!(m >= 1);
    let d = g.d();
    match m {
        1 => g
            .edges()
            .iter()
            .filter(|e| e.lo.vertex(d) == e.hi.vertex(d))
            .count(),
        2 => {
            let mut pairs: HashMap<(usize, usize), usize> = HashMap::new();
            for e in g.edges() {
                let (x, y) = (e.lo.vertex(d), e.hi.vertex(d));
                if x != y {
                    *pairs.entry((x.min(y), x.max(y)), ).or_insert(0) += 1;
                }
            }
            pairs.values().map(|&k| k * (k - 1) / 2).sum()
        }
        _ => {
            let mut total = 0usize;
            let mut path = Vec::with_capacity(m);
            for s in 0..g.n() {
                path.clear();
                path.push(s);
                total += cycles_from(g, s, s, &mut path, m);
            }
            total
        }
    }
}

fn cycles_from(g: &Matching, start: usize, at: usize, path: &mut Vec<usize>, m: usize) -> usize {
    let d = g.d();
    let mut count = 0;
    if path.len() == m {
        // close back to start; each undirected cycle is traversed twice, so
        // only count paths whose second vertex is smaller than the last
        if path[1] < path[m - 1] {
            for a in 0..d {
                if g.other_endpoint(HalfEdge::new(at, a, d)) == start {
                    count += 1;
                }
            }
        }
        return count;
    }
    for a in 0..d {
        let y = g.other_endpoint(HalfEdge::new(at, a, d));
        if y <= start || path.contains(&y) {
            continue;
        }
        path.push(y);
        count += cycles_from(g, start, y, path, m);
        path.pop();
    }
    count
}

/// Number of loops of length at most `m` (the quantity monitored along
/// switching runs).
pub fn loops_up_to(g: &Matching, m: usize) -> usize {
    (1..=m).map(|k| count_loops(g, k)).sum()
}

/// Induced multigraph on the vertices within graph distance `r` of `x`.
pub struct LocalBall {
    pub center: usize,
    pub radius: usize,
    pub vertices: Vec<usize>,
    pub induced_edges: Vec<EdgeKey>,
    pub is_tree: bool,
}

pub fn local_ball(g: &Matching, x: usize, r: usize) -> LocalBall {
    let d = g.d();
    let mut dist: HashMap<usize, usize> = HashMap::new();
    dist.insert(x, 0);
    let mut order = vec![x];
    let mut head = 0;
    while head < order.len() {
        let v = order[head];
        head += 1;
        let dv = dist[&v];
        if dv == r {
            continue;
        }
        for a in 0..d {
            let w = g.other_endpoint(HalfEdge::new(v, a, d));
            if !dist.contains_key(&w) {
                dist.insert(w, dv + 1);
                order.push(w);
            }
        }
    }
    let mut induced_edges = Vec::new();
    for &v in &order {
        for a in 0..d {
            let h = HalfEdge::new(v, a, d);
            let p = g.matched(h);
            if h.0 < p.0 && dist.contains_key(&p.vertex(d)) {
                induced_edges.push(EdgeKey::new(h, p));
            }
        }
    }
    let is_tree = induced_edges.len() == order.len() - 1;
    LocalBall {
        center: x,
        radius: r,
        vertices: order,
        induced_edges,
        is_tree,
    }
}

/// Is the radius-r ball around `x` a tree avoiding all `blocked` vertices?
/// Early-exits on the first loop or blocked vertex. This is the membership
/// test behind the safe-edge set of the embedded process.
pub fn ball_tree_avoiding<F: Fn(usize) -> bool>(
    g: &Matching,
    x: usize,
    r: usize,
    blocked: F,
) -> bool {
    let d = g.d();
    if blocked(x) {
        return false;
    }
    let mut dist: HashMap<usize, usize> = HashMap::new();
    dist.insert(x, 0);
    let mut order = vec![x];
    let mut head = 0;
    while head < order.len() {
        let v = order[head];
        head += 1;
        let dv = dist[&v];
        if dv == r {
            continue;
        }
        for a in 0..d {
            let w = g.other_endpoint(HalfEdge::new(v, a, d));
            if !dist.contains_key(&w) {
                if blocked(w) {
                    return false;
                }
                dist.insert(w, dv + 1);
                order.push(w);
            }
        }
    }
    let mut edge_count = 0usize;
    for &v in &order {
        for a in 0..d {
            let h = HalfEdge::new(v, a, d);
            let p = g.matched(h);
            if h.0 < p.0 && dist.contains_key(&p.vertex(d)) {
                edge_count += 1;
                if edge_count >= order.len() {
                    return false;
                }
            }
        }
    }
    edge_count == order.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, tag};

    /// K4 as a 3-regular matching: vertex x's slots point at the other three
    /// vertices in increasing order.
    fn k4() -> Matching {
        let d = 3;
        let mut pair = vec![0u32; 12];
        let mut slot = vec![0usize; 4];
        for x in 0..4usize {
            for y in (x + 1)..4usize {
                let hx = (x * d + slot[x]) as u32;
                let hy = (y * d + slot[y]) as u32;
                slot[x] += 1;
                slot[y] += 1;
                pair[hx as usize] = hy;
                pair[hy as usize] = hx;
            }
        }
        Matching::from_pairing(4, 3, pair).unwrap()
    }

    /// Two vertices joined by three parallel edges.
    fn theta() -> Matching {
        Matching::from_pairing(2, 3, vec![3, 4, 5, 0, 1, 2]).unwrap()
    }

    #[test]
    fn theta_has_three_parallel_pairs() {
        let g = theta();
        assert_eq!(count_loops(&g, 1), 0);
        assert_eq!(count_loops(&g, 2), 3);
    }

    #[test]
    fn k4_has_four_triangles_and_nothing_shorter() {
        let g = k4();
        assert_eq!(count_loops(&g, 1), 0);
        assert_eq!(count_loops(&g, 2), 0);
        assert_eq!(count_loops(&g, 3), 4);
        assert_eq!(loops_up_to(&g, 3), 4);
    }

    #[test]
    fn self_loop_breaks_treeness_at_any_radius() {
        // self-loops at both vertices, two parallel edges across
        let pair = vec![1, 0, 4, 5, 2, 3, 7, 6];
        let g = Matching::from_pairing(2, 4, pair).unwrap();
        assert_eq!(count_loops(&g, 1), 2);
        for r in 0..3 {
            assert!(!local_ball(&g, 0, r).is_tree);
        }
    }

    #[test]
    fn tree_ball_size_bound_with_equality() {
        let mut rng = stream(12, tag::MATCHING, 0);
        let g = Matching::sample(2000, 3, &mut rng).unwrap();
        let bound = crate::tree_algebra::ball_size(3, 2);
        let mut saw_tree = false;
        for x in (0..2000).step_by(97) {
            let ball = local_ball(&g, x, 2);
            assert!(ball.vertices.len() <= bound);
            if ball.is_tree {
                saw_tree = true;
                assert_eq!(ball.vertices.len(), bound);
            } else {
                assert!(ball.vertices.len() < bound);
            }
            assert_eq!(
                ball.is_tree,
                ball_tree_avoiding(&g, x, 2, |_| false),
                "fast check disagrees at {x}"
            );
        }
        assert!(saw_tree);
    }

    #[test]
    fn triangle_count_matches_exhaustive_enumeration_n4() {
        // mean over all 11!! = 10395 matchings, computed by brute force,
        // compared against the sampler
        let (exact_self, exact_tri) = enumerate_n4_means();
        let mut rng = stream(13, tag::MATCHING, 0);
        let reps = 20000;
        let mut s1 = 0.0;
        let mut s3 = 0.0;
        for _ in 0..reps {
            let g = Matching::sample(4, 3, &mut rng).unwrap();
            s1 += count_loops(&g, 1) as f64;
            s3 += count_loops(&g, 3) as f64;
        }
        let m1 = s1 / reps as f64;
        let m3 = s3 / reps as f64;
        assert!((m1 - exact_self).abs() < 0.03, "self-loops {m1} vs {exact_self}");
        assert!((m3 - exact_tri).abs() < 0.03, "triangles {m3} vs {exact_tri}");
    }

    fn enumerate_n4_means() -> (f64, f64) {
        let nd = 12usize;
        let mut pair = vec![u32::MAX; nd];
        let mut count = 0u64;
        let mut sum_self = 0u64;
        let mut sum_tri = 0u64;
        fn rec(
            pair: &mut Vec<u32>,
            count: &mut u64,
            sum_self: &mut u64,
            sum_tri: &mut u64,
        ) {
            let first = match pair.iter().position(|&p| p == u32::MAX) {
                None => {
                    let g = Matching::from_pairing(4, 3, pair.clone()).unwrap();
                    *count += 1;
                    *sum_self += count_loops(&g, 1) as u64;
                    *sum_tri += count_loops(&g, 3) as u64;
                    return;
                }
                Some(i) => i,
            };
            for j in (first + 1)..pair.len() {
                if pair[j] != u32::MAX {
                    continue;
                }
                pair[first] = j as u32;
                pair[j] = first as u32;
                rec(pair, count, sum_self, sum_tri);
                pair[first] = u32::MAX;
                pair[j] = u32::MAX;
            }
        }
        rec(&mut pair, &mut count, &mut sum_self, &mut sum_tri);
        assert_eq!(count, 10395);
        (sum_self as f64 / count as f64, sum_tri as f64 / count as f64)
    }
}
