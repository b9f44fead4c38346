//! Boundary functionals of the freezing process and their exact generator
//! sums.
//!
//! For a vertex set T of the infinite tree, the star boundary is the set of
//! ordered pairs (u, v) with u in T, v ~ u, such that every other element of
//! T reaches v only through u. The five functionals count marked particles,
//! marked-marked and marked-normal boundary adjacencies, cross-herd marked
//! adjacencies, and frozen herds.

use super::marked::{MarkedHerdsState, MarkedJump};
use crate::tree_algebra::TreeAddress;
use crate::{Error, Result};
use std::collections::BTreeSet;

/// All ordered pairs (u, v) of the star boundary of `t_set`.
pub fn boundary_pairs(t_set: &BTreeSet<TreeAddress>, d: usize) -> Vec<(TreeAddress, TreeAddress)> {
    let mut out = Vec::new();
    for u in t_set {
        'nbr: for v in u.neighbors(d) {
            for w in t_set {
                if w == u || *w == v {
                    continue;
                }
                // the path from w to v must pass through u
                if w.dist(&v) != w.dist(u) + 1 {
                    continue 'nbr;
                }
            }
            out.push((u.clone(), v));
        }
    }
    out
}

/// F1..F5 of a configuration.
pub fn functionals(state: &MarkedHerdsState, d: usize) -> Result<[f64; 5]> {
    let marked_union = state.marked_union();
    let excl = state.exclusion_index()?;
    let pairs = boundary_pairs(&marked_union, d);
    let f1 = state.marked_count() as f64;
    let mut f2 = 0usize;
    let mut f3 = 0usize;
    let mut f4 = 0usize;
    for (u, v) in &pairs {
        let i = excl[u];
        let herd_i = &state.herds[&i];
        if herd_i.marked.contains(v) {
            f2 += 1;
        }
        if let Some(&j) = excl.get(v) {
            if j != i && !herd_i.particles.contains(v) {
                f3 += 1;
            }
        }
        if herd_i.particles.contains(v) && !herd_i.marked.contains(v) {
            f4 += 1;
        }
    }
    let f5 = state.frozen.len() as f64;
    Ok([f1, f2 as f64, f3 as f64, f4 as f64, f5])
}

/// One functional by index (1-based).
pub fn evaluate_functional(state: &MarkedHerdsState, k: usize, d: usize) -> Result<f64> {
    if !(1..=5).contains(&k) {
        return Err(Error::InvalidArgument(format!(
            "functional index {k} out of range 1..=5"
        )));
    }
    Ok(functionals(state, d)?[k - 1])
}

/// Exact generator application: the sum over every enabled jump (deaths,
/// all birth attempts including no-effect rows, splits) of rate times the
/// functional difference.
pub fn generator_apply(
    state: &MarkedHerdsState,
    k: usize,
    d: usize,
    lambda: f64,
    v: f64,
    freezing: bool,
) -> Result<f64> {
    if !(1..=5).contains(&k) {
        return Err(Error::InvalidArgument(format!(
            "functional index {k} out of range 1..=5"
        )));
    }
    let base = functionals(state, d)?[k - 1];
    let mut total = 0.0;
    for (jump, rate) in state.enabled_jumps(d, lambda, v) {
        let next = state.apply(&jump, freezing)?;
        total += rate * (functionals(&next, d)?[k - 1] - base);
    }
    Ok(total)
}

/// All five generator applications in one sweep over the enabled jumps.
pub fn generator_apply_all(
    state: &MarkedHerdsState,
    d: usize,
    lambda: f64,
    v: f64,
    freezing: bool,
) -> Result<[f64; 5]> {
    let base = functionals(state, d)?;
    let mut total = [0.0; 5];
    for (jump, rate) in state.enabled_jumps(d, lambda, v) {
        let next = state.apply(&jump, freezing)?;
        let fs = functionals(&next, d)?;
        for (acc, (after, before)) in total.iter_mut().zip(fs.iter().zip(base.iter())) {
            *acc += rate * (after - before);
        }
    }
    Ok(total)
}

/// A scripted jump application, exposed for tests that drive the reference
/// state directly.
pub fn apply_jump(
    state: &MarkedHerdsState,
    jump: &MarkedJump,
    freezing: bool,
) -> Result<MarkedHerdsState> {
    state.apply(jump, freezing)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree_algebra::TreeAddress;

    fn o() -> TreeAddress {
        TreeAddress::root()
    }

    #[test]
    fn singleton_boundary_has_d_pairs() {
        let t: BTreeSet<_> = [o()].into_iter().collect();
        let pairs = boundary_pairs(&t, 3);
        assert_eq!(pairs.len(), 3);
        for (u, v) in &pairs {
            assert_eq!(*u, o());
            assert!(!t.contains(v));
        }
    }

    #[test]
    fn initial_state_functionals() {
        let state = MarkedHerdsState::default_init();
        let fs = functionals(&state, 3).unwrap();
        assert_eq!(fs, [1.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(evaluate_functional(&state, 6, 3).is_err());
    }

    #[test]
    fn lambda_zero_generator_of_f1_is_minus_one() {
        let state = MarkedHerdsState::default_init();
        let lf1 = generator_apply(&state, 1, 3, 0.0, 1.0, true).unwrap();
        assert!((lf1 + 1.0).abs() < 1e-12);
    }

    #[test]
    fn pemantle_boundary_bound_on_random_sets() {
        // |{(u,v) boundary pairs with v outside T}| >= (1 - 1/(d-1)) |T|
        let d = 3;
        let mut rng = crate::rng::stream(17, crate::rng::tag::FUZZ, 0);
        use rand::Rng;
        for _ in 0..300 {
            let mut t: BTreeSet<TreeAddress> = [o()].into_iter().collect();
            let size = rng.gen_range(1..25usize);
            while t.len() < size {
                // random walk growth gives connected and straggly sets alike
                let base: Vec<_> = t.iter().cloned().collect();
                let x = &base[rng.gen_range(0..base.len())];
                let w = x.neighbor(d, rng.gen_range(0..d));
                t.insert(w);
            }
            let outside = boundary_pairs(&t, d)
                .into_iter()
                .filter(|(_, v)| !t.contains(v))
                .count() as f64;
            let bound = (1.0 - 1.0 / (d as f64 - 1.0)) * t.len() as f64;
            assert!(
                outside >= bound - 1e-9,
                "boundary bound violated: {outside} < {bound} for |T|={}",
                t.len()
            );
        }
    }

    #[test]
    fn adjacent_marked_pair_counts_twice_in_f2() {
        use super::super::marked::MarkedHerd;
        use std::collections::BTreeMap;
        let mut herds = BTreeMap::new();
        herds.insert(
            0,
            MarkedHerd {
                particles: [o(), o().child(1)].into_iter().collect(),
                marked: [o(), o().child(1)].into_iter().collect(),
            },
        );
        let state = MarkedHerdsState {
            herds,
            frozen: BTreeSet::new(),
            clock: 0.0,
            next_id: 1,
            frozen_ever: 0,
        };
        let fs = functionals(&state, 3).unwrap();
        assert_eq!(fs[0], 2.0);
        assert_eq!(fs[1], 2.0, "both orientations qualify");
    }
}
