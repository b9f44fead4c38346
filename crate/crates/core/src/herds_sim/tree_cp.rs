//! Plain contact process on the infinite d-regular tree, used as an
//! independent oracle against the marked-herd marginal and the v = 0 herds
//! process.

use crate::rng::{exponential, stream, tag};
use crate::tree_algebra::TreeAddress;
use rand::Rng;
use rayon::prelude::*;
use crate::det_hash::DetHashMap;

/// Has the contact process started from a single infection at the root died
/// by `horizon`? Returns (died, time-of-death-or-horizon, events).
pub fn tree_cp_extinct_by(
    d: usize,
    lambda: f64,
    horizon: f64,
    event_cap: u64,
    seed: u64,
    run_id: u64,
) -> (bool, f64, u64) {
    let mut rng = stream(seed, tag::TREE_CP, run_id);
    let mut infected: Vec<TreeAddress> = vec![TreeAddress::root()];
    let mut pos: DetHashMap<TreeAddress, u32> = DetHashMap::default();
    pos.insert(TreeAddress::root(), 0);
    // unoccupied neighbor -> number of infected neighbors
    let mut frontier: DetHashMap<TreeAddress, u8> = DetHashMap::default();
    for w in TreeAddress::root().neighbors(d) {
        frontier.insert(w, 1);
    }
    let mut weight: u64 = d as u64;
    let mut t = 0.0;
    let mut events = 0u64;
    loop {
        if infected.is_empty() {
            return (true, t, events);
        }
        let death = infected.len() as f64;
        let birth = lambda * weight as f64;
        let total = death + birth;
        let dt = exponential(&mut rng, total);
        if t + dt > horizon {
            return (false, horizon, events);
        }
        t += dt;
        events += 1;
        if events > event_cap {
            return (false, t, events);
        }
        let u: f64 = rng.gen::<f64>() * total;
        if u < death {
            let k = rng.gen_range(0..infected.len());
            let x = infected.swap_remove(k);
            pos.remove(&x);
            if (k) < infected.len() {
                pos.insert(infected[k].clone(), k as u32);
            }
            for w in x.neighbors(d) {
                if pos.contains_key(&w) {
                    continue;
                }
                if let Some(c) = frontier.get_mut(&w) {
                    *c -= 1;
                    weight -= 1;
                    if *c == 0 {
                        frontier.remove(&w);
                    }
                }
            }
            let occ = x.neighbors(d).into_iter().filter(|w| pos.contains_key(w)).count() as u8;
            if occ > 0 {
                frontier.insert(x, occ);
                weight += occ as u64;
            }
        } else {
            // uniform (infected, slot) rejected on occupied targets hits
            // empty sites proportionally to their infected-neighbor count
            let target = loop {
                let x = &infected[rng.gen_range(0..infected.len())];
                let s = rng.gen_range(0..d);
                let y = x.neighbor(d, s);
                if !pos.contains_key(&y) {
                    break y;
                }
            };
            let c = frontier.remove(&target).expect("target on the frontier");
            weight -= c as u64;
            pos.insert(target.clone(), infected.len() as u32);
            infected.push(target.clone());
            for w in target.neighbors(d) {
                if pos.contains_key(&w) {
                    continue;
                }
                *frontier.entry(w).or_insert(0) += 1;
                weight += 1;
            }
        }
    }
}

/// Monte Carlo estimate of P(extinct by horizon) from a single root
/// infection, with binomial standard error.
pub fn tree_cp_survival(
    d: usize,
    lambda: f64,
    horizon: f64,
    event_cap: u64,
    reps: usize,
    seed: u64,
) -> (f64, f64) {
    let extinct: usize = (0..reps)
        .into_par_iter()
        .map(|r| tree_cp_extinct_by(d, lambda, horizon, event_cap, seed, r as u64).0 as usize)
        .sum();
    crate::stats::proportion_se(extinct, reps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_lambda_dies_at_unit_rate() {
        let mut times = Vec::new();
        for r in 0..3_000 {
            let (died, t, _) = tree_cp_extinct_by(3, 0.0, 1e9, u64::MAX, 21, r);
            assert!(died);
            times.push(t);
        }
        let (mean, se) = crate::stats::mean_se(&times);
        assert!((mean - 1.0).abs() < 3.0 * se);
    }

    #[test]
    fn survival_increases_with_lambda() {
        let (p_low, _) = tree_cp_survival(3, 0.2, 12.0, 30_000, 600, 3);
        let (p_high, _) = tree_cp_survival(3, 1.0, 12.0, 30_000, 600, 3);
        // p is the probability of being extinct by the horizon
        assert!(p_low > p_high);
        assert!(p_low > 0.9, "subcritical should be extinct: {p_low}");
        assert!(p_high < 0.6, "supercritical should often survive: {p_high}");
    }

}
