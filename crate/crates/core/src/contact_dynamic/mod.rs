//! The joint chain (switching multigraph, contact process): extinction
//! times, the monotone coupling through a shared graphical construction, and
//! parameter scans.

use crate::rng::{exponential, stream, tag};
use crate::switch_graph::{HalfEdge, Matching};
use crate::{CensorReason, Result};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum CpOutcome {
    Died { tau: f64 },
    Censored { at: f64, reason: CensorReason },
}

impl CpOutcome {
    pub fn tau(&self) -> Option<f64> {
        match self {
            CpOutcome::Died { tau } => Some(*tau),
            CpOutcome::Censored { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExtinctionRecord {
    pub outcome: CpOutcome,
    pub n: usize,
    pub d: usize,
    pub lambda: f64,
    pub v: f64,
    pub seed: u64,
    pub events: u64,
    pub wall_ms: u64,
}

/// Infected-set bookkeeping with O(1) insert/remove/uniform-sample.
struct IndexedSet {
    items: Vec<u32>,
    pos: Vec<u32>,
}

impl IndexedSet {
    fn new(n: usize) -> Self {
        IndexedSet {
            items: Vec::with_capacity(n),
            pos: vec![u32::MAX; n],
        }
    }

    fn from_members(n: usize, members: &[usize]) -> Self {
        let mut s = IndexedSet::new(n);
        for &x in members {
            s.insert(x as u32);
        }
        s
    }

    fn len(&self) -> usize {
        self.items.len()
    }

    fn contains(&self, x: u32) -> bool {
        self.pos[x as usize] != u32::MAX
    }

    fn insert(&mut self, x: u32) -> bool {
        if self.contains(x) {
            return false;
        }
        self.pos[x as usize] = self.items.len() as u32;
        self.items.push(x);
        true
    }

    fn remove(&mut self, x: u32) -> bool {
        let p = self.pos[x as usize];
        if p == u32::MAX {
            return false;
        }
        let last = *self.items.last().unwrap();
        self.items.swap_remove(p as usize);
        if (p as usize) < self.items.len() {
            self.pos[last as usize] = p;
        }
        self.pos[x as usize] = u32::MAX;
        true
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> u32 {
        self.items[rng.gen_range(0..self.items.len())]
    }
}

/// Observer invoked on a fixed time grid with (time, infected count,
/// current graph).
pub type CpObserver<'a> = &'a mut dyn FnMut(f64, usize, &Matching);

pub struct JointRun<'a> {
    pub n: usize,
    pub d: usize,
    pub lambda: f64,
    pub v: f64,
    /// `None` starts from full occupancy.
    pub initial: Option<&'a [usize]>,
    pub horizon: f64,
    pub event_cap: u64,
    pub seed: u64,
    pub run_id: u64,
}

/// Exponential race over recovery (rate 1 per infected vertex), transmission
/// (rate lambda per half-edge of an infected vertex, resolved through the
/// matching at event time) and graph switches. Switches never change the
/// infected set; self-loop transmissions are no-ops; parallel edges act as
/// independent channels through their half-edges.
pub fn run_joint(cfg: &JointRun, observer: Option<(f64, CpObserver)>) -> Result<ExtinctionRecord> {
    let start = std::time::Instant::now();
    let mut rng = stream(cfg.seed, tag::CONTACT, cfg.run_id);
    let mut g = Matching::sample(cfg.n, cfg.d, &mut rng)?;
    let all: Vec<usize>;
    let initial: &[usize] = match cfg.initial {
        None => {
            all = (0..cfg.n).collect();
            &all
        }
        Some(xs) => xs,
    };
    let mut infected = IndexedSet::from_members(cfg.n, initial);
    let switch_rate = g.total_switch_rate(cfg.v);
    let d = cfg.d;
    let mut t = 0.0f64;
    let mut events = 0u64;
    let (grid_dt, mut obs) = match observer {
        Some((dt, f)) => (dt, Some(f)),
        None => (f64::INFINITY, None),
    };
    let mut next_obs = 0.0f64;

    let outcome = loop {
        if infected.len() == 0 {
            break CpOutcome::Died { tau: t };
        }
        let k = infected.len() as f64;
        let recovery = k;
        let transmission = cfg.lambda * d as f64 * k;
        let total = recovery + transmission + switch_rate;
        let dt = exponential(&mut rng, total);
        if t + dt > cfg.horizon {
            break CpOutcome::Censored {
                at: cfg.horizon,
                reason: CensorReason::Horizon,
            };
        }
        t += dt;
        if let Some(f) = obs.as_mut() {
            while next_obs <= t {
                f(next_obs, infected.len(), &g);
                next_obs += grid_dt;
            }
        }
        events += 1;
        if events > cfg.event_cap {
            break CpOutcome::Censored {
                at: t,
                reason: CensorReason::EventCap,
            };
        }
        let u: f64 = rng.gen::<f64>() * total;
        if u < recovery {
            let x = infected.sample(&mut rng);
            infected.remove(x);
        } else if u < recovery + transmission {
            let x = infected.sample(&mut rng);
            let slot = rng.gen_range(0..d);
            let y = g.other_endpoint(HalfEdge::new(x as usize, slot, d));
            infected.insert(y as u32);
        } else {
            let mark = g.sample_mark(&mut rng);
            g.apply_switch(&mark)?;
        }
    };
    Ok(ExtinctionRecord {
        outcome,
        n: cfg.n,
        d,
        lambda: cfg.lambda,
        v: cfg.v,
        seed: cfg.seed,
        events,
        wall_ms: start.elapsed().as_millis() as u64,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CoupledRecord {
    /// first time the lower process escaped the upper one (must stay None)
    pub violation_at: Option<f64>,
    pub outcome_lower: CpOutcome,
    pub outcome_upper: CpOutcome,
}

/// Monotone coupling: both processes are driven by the identical switching
/// graph, per-vertex recovery streams and per-half-edge transmission
/// streams, materialized as a single exponential race over state-independent
/// rates. Containment of the lower process in the upper one is checked after
/// every event.
#[allow(clippy::too_many_arguments)]
pub fn coupled_run(
    n: usize,
    d: usize,
    lambda: f64,
    v: f64,
    xi_lower: &[usize],
    xi_upper: &[usize],
    horizon: f64,
    seed: u64,
    run_id: u64,
) -> Result<CoupledRecord> {
    let mut rng = stream(seed, tag::CONTACT, run_id);
    let mut g = Matching::sample(n, d, &mut rng)?;
    let mut lower = IndexedSet::from_members(n, xi_lower);
    let mut upper = IndexedSet::from_members(n, xi_upper);
    for &x in xi_lower {
        assert!(upper.contains(x as u32), "initial sets must be nested");
    }
    let recovery_rate = n as f64;
    let transmission_rate = lambda * (n * d) as f64;
    let switch_rate = g.total_switch_rate(v);
    let total = recovery_rate + transmission_rate + switch_rate;

    let mut t = 0.0;
    let mut violation_at = None;
    let mut tau_lower = None;
    let mut tau_upper = None;
    while (lower.len() > 0 || upper.len() > 0) && violation_at.is_none() {
        let dt = exponential(&mut rng, total);
        if t + dt > horizon {
            break;
        }
        t += dt;
        let u: f64 = rng.gen::<f64>() * total;
        if u < recovery_rate {
            let x = rng.gen_range(0..n) as u32;
            lower.remove(x);
            upper.remove(x);
            if lower.len() == 0 && tau_lower.is_none() {
                tau_lower = Some(t);
            }
            if upper.len() == 0 && tau_upper.is_none() {
                tau_upper = Some(t);
            }
        } else if u < recovery_rate + transmission_rate {
            let h = HalfEdge(rng.gen_range(0..(n * d)) as u32);
            let x = h.vertex(d) as u32;
            let y = g.other_endpoint(h) as u32;
            if lower.contains(x) {
                lower.insert(y);
            }
            if upper.contains(x) {
                upper.insert(y);
            }
            if lower.contains(y) && !upper.contains(y) {
                violation_at = Some(t);
            }
        } else {
            let mark = g.sample_mark(&mut rng);
            g.apply_switch(&mark)?;
        }
    }
    let close = |tau: Option<f64>| match tau {
        Some(tau) => CpOutcome::Died { tau },
        None => CpOutcome::Censored {
            at: horizon,
            reason: CensorReason::Horizon,
        },
    };
    Ok(CoupledRecord {
        violation_at,
        outcome_lower: close(tau_lower),
        outcome_upper: close(tau_upper),
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScanCell {
    pub n: usize,
    pub lambda: f64,
    pub v: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanRow {
    pub n: usize,
    pub lambda: f64,
    pub v: f64,
    pub reps: usize,
    /// quartiles of tau with censored runs counted as +infinity; NaN when a
    /// quartile itself is censored
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub censored_fraction: f64,
    pub mean_events: f64,
}

/// Replicated extinction runs over a parameter grid. Replications use
/// independent substreams keyed by (seed, cell index, rep), so parallel and
/// serial execution aggregate identically.
pub fn extinction_scan(
    cells: &[ScanCell],
    d: usize,
    reps: usize,
    horizon: f64,
    event_cap: u64,
    seed: u64,
) -> Result<Vec<ScanRow>> {
    cells
        .iter()
        .enumerate()
        .map(|(ci, cell)| {
            let records: Vec<ExtinctionRecord> = (0..reps)
                .into_par_iter()
                .map(|rep| {
                    run_joint(
                        &JointRun {
                            n: cell.n,
                            d,
                            lambda: cell.lambda,
                            v: cell.v,
                            initial: None,
                            horizon,
                            event_cap,
                            seed,
                            run_id: (ci * reps + rep) as u64,
                        },
                        None,
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(summarize_cell(cell, &records))
        })
        .collect()
}

pub fn summarize_cell(cell: &ScanCell, records: &[ExtinctionRecord]) -> ScanRow {
    let mut taus: Vec<f64> = records
        .iter()
        .map(|r| r.outcome.tau().unwrap_or(f64::INFINITY))
        .collect();
    taus.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let censored = taus.iter().filter(|t| t.is_infinite()).count();
    let q = |p: f64| {
        let v = crate::stats::quantile(&taus, p);
        if v.is_finite() {
            v
        } else {
            f64::NAN
        }
    };
    ScanRow {
        n: cell.n,
        lambda: cell.lambda,
        v: cell.v,
        reps: records.len(),
        q1: q(0.25),
        median: q(0.5),
        q3: q(0.75),
        censored_fraction: censored as f64 / records.len() as f64,
        mean_events: records.iter().map(|r| r.events as f64).sum::<f64>() / records.len() as f64,
    }
}

/// Single extinction run, deterministic in (seed, run_id).
pub fn extinction_time(
    n: usize,
    d: usize,
    lambda: f64,
    v: f64,
    horizon: f64,
    event_cap: u64,
    seed: u64,
    run_id: u64,
) -> Result<ExtinctionRecord> {
    run_joint(
        &JointRun {
            n,
            d,
            lambda,
            v,
            initial: None,
            horizon,
            event_cap,
            seed,
            run_id,
        },
        None,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::mean_se;

    #[test]
    fn zero_lambda_full_start_is_max_of_exponentials() {
        // harmonic-number mean of the max of n unit exponentials
        let n = 50;
        let hn: f64 = (1..=n).map(|k| 1.0 / k as f64).sum();
        let taus: Vec<f64> = (0..1000)
            .map(|r| {
                extinction_time(n, 3, 0.0, 1.0, 1e9, u64::MAX, 42, r)
                    .unwrap()
                    .outcome
                    .tau()
                    .unwrap()
            })
            .collect();
        let (mean, se) = mean_se(&taus);
        assert!(
            (mean - hn).abs() <= 3.0 * se,
            "mean {mean} vs harmonic {hn} (se {se})"
        );
    }

    #[test]
    fn self_loop_transmission_is_noop() {
        // a graph of pure self-loops: transmissions always target the source
        let pair = vec![1, 0, 3, 2, 5, 4, 7, 6];
        let g = Matching::from_pairing(2, 4, pair).unwrap();
        for a in 0..4 {
            assert_eq!(g.other_endpoint(HalfEdge::new(0, a, 4)), 0);
        }
    }

    #[test]
    fn coupled_runs_are_ordered() {
        for r in 0..50 {
            let rec = coupled_run(
                60,
                3,
                0.5,
                1.0,
                &[1],
                &(0..60).collect::<Vec<_>>(),
                40.0,
                9,
                r,
            )
            .unwrap();
            assert!(rec.violation_at.is_none());
            if let (Some(tl), Some(tu)) = (rec.outcome_lower.tau(), rec.outcome_upper.tau()) {
                assert!(tl <= tu, "lower outlived upper: {tl} > {tu}");
            }
        }
    }

    #[test]
    fn identical_initial_sets_stay_identical() {
        let all: Vec<usize> = (0..40).collect();
        for r in 0..20 {
            let rec = coupled_run(40, 3, 0.4, 1.0, &all, &all, 30.0, 11, r).unwrap();
            assert!(rec.violation_at.is_none());
            assert_eq!(rec.outcome_lower, rec.outcome_upper);
        }
    }
}
