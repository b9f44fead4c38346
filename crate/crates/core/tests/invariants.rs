//! Module-level invariants and cross-process couplings that are too heavy
//! for unit tests but cheaper than the acceptance criteria.

use herdsim_core::contact_dynamic::extinction_time;
use herdsim_core::embedded_herds::{EmbeddedRunConfig, FTable, MonitorConfig};
use herdsim_core::h_herds::{lambda_bar, pf_for};
use herdsim_core::herds_sim::{
    estimate_survival, run_herds, run_marked, tree_cp_extinct_by, HerdsSnapshot, SimParams,
};
use herdsim_core::rng::{stream, tag};
use herdsim_core::stats;
use herdsim_core::switch_graph::{count_loops, local_ball, loops_up_to, Matching};
use herdsim_core::tree_algebra::{ball_size, TypeTable, DEFAULT_ENUM_BOUND};
use rayon::prelude::*;

const SEED: u64 = 0xACCE_55ED;

/// With v = 0 the herds process is a contact process on the tree: the
/// extinct-by-t probabilities must agree with the direct simulator.
#[test]
fn herds_without_splits_match_direct_tree_cp() {
    let horizon = 8.0;
    let lambda = 0.5;
    let reps = 4000;
    let params = SimParams {
        d: 3,
        lambda,
        v: 0.0,
        horizon,
        event_cap: 100_000,
        seed: SEED,
    };
    let dead: usize = (0..reps)
        .into_par_iter()
        .map(|r| {
            run_herds(&params, None, r as u64, None, None)
                .unwrap()
                .outcome
                .died()
                .is_some() as usize
        })
        .sum();
    let (p1, se1) = stats::proportion_se(dead, reps);
    let (p2, se2) =
        herdsim_core::herds_sim::tree_cp_survival(3, lambda, horizon, 100_000, reps, SEED ^ 1);
    let z = stats::z_two_sample(p1, se1, p2, se2);
    assert!(z.abs() <= 3.0, "herds(v=0) {p1:.4} vs direct CP {p2:.4}, z = {z:.2}");
}

/// Dropping marks from a marked run yields a statistically valid herds
/// process: survival at the horizon agrees within Monte Carlo error.
#[test]
fn marked_eta_marginal_is_a_herds_process() {
    let horizon = 8.0;
    let reps = 4000;
    let params = SimParams {
        d: 3,
        lambda: 0.6,
        v: 1.0,
        horizon,
        event_cap: 100_000,
        seed: SEED ^ 2,
    };
    let alive_marked: usize = (0..reps)
        .into_par_iter()
        .map(|r| {
            run_marked(&params, None, false, false, r as u64)
                .unwrap()
                .outcome
                .alive() as usize
        })
        .sum();
    let alive_plain: usize = (0..reps)
        .into_par_iter()
        .map(|r| {
            run_herds(&params, None, r as u64, None, None)
                .unwrap()
                .outcome
                .alive() as usize
        })
        .sum();
    let (p1, se1) = stats::proportion_se(alive_marked, reps);
    let (p2, se2) = stats::proportion_se(alive_plain, reps);
    let z = stats::z_two_sample(p1, se1, p2, se2);
    assert!(z.abs() <= 3.0, "marked eta-marginal {p1:.4} vs herds {p2:.4}, z = {z:.2}");
}

/// Conditional on survival, the median herd count does not decrease along
/// supercritical runs.
#[test]
fn surviving_herd_count_median_is_nondecreasing() {
    let params = SimParams {
        d: 3,
        lambda: 0.6,
        v: 1.0,
        horizon: 20.0,
        event_cap: 60_000,
        seed: SEED ^ 3,
    };
    let grid = [5.0, 10.0, 15.0, 20.0];
    let reps = 1500usize;
    let per_run: Vec<Option<Vec<usize>>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut counts = vec![0usize; grid.len()];
            {
                let mut obs = |snap: &HerdsSnapshot| {
                    for (k, &g) in grid.iter().enumerate() {
                        if (snap.clock - g).abs() < 1e-9 {
                            counts[k] = snap.herd_count;
                        }
                    }
                };
                let out = run_herds(&params, None, r as u64, Some((5.0, &mut obs)), None).unwrap();
                if !out.outcome.alive() {
                    return None;
                }
            }
            Some(counts)
        })
        .collect();
    let survivors: Vec<&Vec<usize>> = per_run.iter().flatten().collect();
    assert!(survivors.len() > 100, "too few survivors: {}", survivors.len());
    let mut medians = Vec::new();
    for k in 0..grid.len() {
        let mut col: Vec<f64> = survivors.iter().map(|c| c[k] as f64).collect();
        col.sort_by(|a, b| a.partial_cmp(b).unwrap());
        medians.push(stats::quantile(&col, 0.5));
    }
    for w in medians.windows(2) {
        assert!(
            w[1] >= w[0],
            "median herd count decreased along the grid: {medians:?}"
        );
    }
}

/// The uniform-matching sampler hits all 15 states of (n=2, d=3) uniformly.
#[test]
fn matching_sampler_is_uniform_on_the_smallest_case() {
    let mut counts: std::collections::BTreeMap<Vec<u32>, u64> = Default::default();
    for r in 0..100_000u64 {
        let mut rng = stream(SEED ^ 4, tag::MATCHING, r);
        let g = Matching::sample(2, 3, &mut rng).unwrap();
        *counts.entry(g.pairing().to_vec()).or_insert(0) += 1;
    }
    assert_eq!(counts.len(), 15);
    let p = stats::chi2_uniform_pvalue(&counts.values().copied().collect::<Vec<_>>());
    assert!(p > 0.01, "chi2 p = {p}");
}

/// Reversibility: the empirical flux between any ordered pair of states is
/// symmetric along a long stationary run.
#[test]
fn switch_chain_flux_is_symmetric() {
    let mut rng = stream(SEED ^ 5, tag::SWITCH, 0);
    let mut g = Matching::sample(2, 3, &mut rng).unwrap();
    let mut flux: std::collections::BTreeMap<(Vec<u32>, Vec<u32>), u64> = Default::default();
    let mut prev = g.pairing().to_vec();
    for _ in 0..200_000 {
        let mark = g.sample_mark(&mut rng);
        g.apply_switch(&mark).unwrap();
        let cur = g.pairing().to_vec();
        *flux.entry((prev.clone(), cur.clone())).or_insert(0) += 1;
        prev = cur;
    }
    let mut checked = 0;
    for ((a, b), &c_ab) in &flux {
        if a >= b {
            continue;
        }
        let c_ba = flux.get(&(b.clone(), a.clone())).copied().unwrap_or(0);
        let total = c_ab + c_ba;
        if total < 100 {
            continue;
        }
        checked += 1;
        let z = (c_ab as f64 - c_ba as f64).abs() / (total as f64).sqrt();
        assert!(z <= 4.5, "asymmetric flux: {c_ab} vs {c_ba} (z = {z:.2})");
    }
    assert!(checked > 10, "too few state pairs observed");
}

/// Stationary-run loop counts stay far below the monitor threshold.
#[test]
fn loop_count_stays_small_along_a_stationary_run() {
    let mut rng = stream(SEED ^ 6, tag::SWITCH, 1);
    let mut g = Matching::sample(2000, 3, &mut rng).unwrap();
    let kappa = 0.01;
    for _ in 0..1000 {
        let mark = g.sample_mark(&mut rng);
        g.apply_switch(&mark).unwrap();
        let loops = loops_up_to(&g, 3);
        assert!(
            (loops as f64) < kappa * 2000.0,
            "loops-of-length-<=3 hit {loops}"
        );
    }
}

/// Radius-2 balls of a large sampled graph are trees at high frequency.
#[test]
fn tree_ball_frequency_is_high() {
    let mut rng = stream(SEED ^ 7, tag::MATCHING, 2);
    let g = Matching::sample(10_000, 3, &mut rng).unwrap();
    let tree_balls = (0..1000).filter(|&x| local_ball(&g, x * 7, 2).is_tree).count();
    assert!(tree_balls >= 990, "only {tree_balls}/1000 tree balls");
}

/// On a simple triangle-free sample the greedy initial family reaches the
/// guaranteed density n / (2 |ball(2h)|).
#[test]
fn initial_family_density_on_a_high_girth_sample() {
    let n = 200;
    let h = 1;
    let mut g = None;
    for r in 0..500u64 {
        let mut rng = stream(SEED ^ 8, tag::MATCHING, r);
        let cand = Matching::sample(n, 3, &mut rng).unwrap();
        if count_loops(&cand, 1) == 0 && count_loops(&cand, 2) == 0 && count_loops(&cand, 3) == 0 {
            g = Some(cand);
            break;
        }
    }
    let g = g.expect("a triangle-free simple sample exists within 500 draws");
    let herds = herdsim_core::embedded_herds::build_initial(&g, h, usize::MAX);
    let bound = n / (2 * ball_size(3, 2 * h));
    assert!(
        herds.len() >= bound,
        "greedy family {} below the guaranteed {bound}",
        herds.len()
    );
}

/// Deep supercritical herds survive often (the spec's sanity example).
#[test]
fn strongly_supercritical_herds_survival_exceeds_half() {
    let params = SimParams {
        d: 3,
        lambda: 2.0,
        v: 1.0,
        horizon: 50.0,
        event_cap: 3_000,
        seed: SEED ^ 9,
    };
    let est = estimate_survival(&params, 2_000).unwrap();
    assert!(est.p > 0.5, "p = {}", est.p);
}

/// The truncated critical value decreases from h=1 to h=2 toward the herds
/// threshold.
#[test]
fn truncated_critical_value_decreases_in_h() {
    let t1 = TypeTable::enumerate(3, 1, DEFAULT_ENUM_BOUND).unwrap();
    let t2 = TypeTable::enumerate(3, 2, DEFAULT_ENUM_BOUND).unwrap();
    let l1 = lambda_bar(&t1, 1.0, 1e-3, 1e-10).unwrap().lambda_hat;
    let l2 = lambda_bar(&t2, 1.0, 1e-3, 1e-10).unwrap().lambda_hat;
    assert!(l1 > l2, "lambda_bar(h=1) = {l1} vs lambda_bar(h=2) = {l2}");
    assert!(l2 >= 1.0 / 3.0);
}

/// Slow: extends the trend to h=3 (about five minutes of enumeration plus
/// eigen iterations). Run explicitly with `--ignored`.
#[test]
#[ignore]
fn truncated_critical_value_decreases_to_h3() {
    let t2 = TypeTable::enumerate(3, 2, DEFAULT_ENUM_BOUND).unwrap();
    let t3 = TypeTable::enumerate(3, 3, DEFAULT_ENUM_BOUND).unwrap();
    let l2 = lambda_bar(&t2, 1.0, 1e-3, 1e-9).unwrap().lambda_hat;
    let l3 = lambda_bar(&t3, 1.0, 1e-3, 1e-9).unwrap().lambda_hat;
    assert!(l3 < l2, "lambda_bar(h=3) = {l3} vs lambda_bar(h=2) = {l2}");
}

/// Extinction-run events write the optional CSV event log.
#[test]
fn herds_event_log_has_the_documented_shape() {
    let params = SimParams {
        d: 3,
        lambda: 0.8,
        v: 1.0,
        horizon: 5.0,
        event_cap: 2_000,
        seed: SEED ^ 10,
    };
    let mut log = Vec::new();
    run_herds(&params, None, 0, None, Some(&mut log)).unwrap();
    let text = String::from_utf8(log).unwrap();
    let mut lines = 0;
    for line in text.lines() {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 4, "line: {line}");
        cols[0].parse::<f64>().unwrap();
        assert!(["birth", "death", "split"].contains(&cols[1]));
        cols[2].parse::<u64>().unwrap();
        cols[3].parse::<u64>().unwrap();
        lines += 1;
    }
    assert!(lines > 0);
}

/// Empirical bad-switch frequency stays inside the counting band derived
/// from the crowding constant.
#[test]
fn bad_switch_frequency_band() {
    let types = TypeTable::enumerate(3, 2, DEFAULT_ENUM_BOUND).unwrap();
    let pf = pf_for(&types, 0.9, 1.0, 1e-10).unwrap();
    let params = SimParams {
        d: 3,
        lambda: 0.9,
        v: 1.0,
        horizon: 2.0,
        event_cap: 100_000,
        seed: SEED ^ 11,
    };
    let cfg = EmbeddedRunConfig {
        n: 1000,
        h: 2,
        target_herds: 20,
        monitors: None,
        check_surgery: false,
        event_cap: 100_000,
    };
    let report = herdsim_core::embedded_herds::run_embedded(&params, &cfg, &types, &pf, 0).unwrap();
    let switches = report.neutral_switches
        + report.good_active_switches
        + report.good_inactive_switches
        + report.monitor.bad_switch_count;
    let bad_fraction = report.monitor.bad_switch_count as f64 / switches.max(1) as f64;
    let ch = ball_size(3, 4) as f64;
    let half_edges = (1000.0 * 3.0) / 2.0;
    let band =
        2.0 * ch * report.mean_herds * (1.0 - report.mean_lambda_fraction) / (half_edges - 1.0);
    assert!(
        bad_fraction <= band + 0.02,
        "bad fraction {bad_fraction:.4} above the counting band {band:.4}"
    );
}

/// Monitor defaults are reported, never hidden, and scale with the spectral
/// data.
#[test]
fn monitor_defaults_follow_the_formulas() {
    let types = TypeTable::enumerate(3, 2, DEFAULT_ENUM_BOUND).unwrap();
    let pf = pf_for(&types, 0.9, 1.0, 1e-10).unwrap();
    let ftable = FTable::from_pf(&types, &pf);
    let m = MonitorConfig::defaults(&ftable, 0.9, 1.0);
    let ch = ball_size(3, 4) as f64;
    let expect_eps0 = pf.mu * pf.f_min / (6.0 * 1.0 * ch * 1.0);
    assert!((m.eps0 - expect_eps0).abs() < 1e-15);
    assert!(m.eps1 < m.eps0);
    assert!(m.delta > 0.0 && m.mu_bar > pf.mu);
}

/// Throwaway determinism check at the driver level: repeated extinction runs
/// under one (seed, run id) agree exactly.
#[test]
fn joint_runs_are_reproducible() {
    let a = extinction_time(300, 3, 0.4, 1.0, 40.0, 1_000_000, SEED ^ 12, 5).unwrap();
    let b = extinction_time(300, 3, 0.4, 1.0, 40.0, 1_000_000, SEED ^ 12, 5).unwrap();
    assert_eq!(a.outcome, b.outcome);
    assert_eq!(a.events, b.events);
    let (died, t1, _) = tree_cp_extinct_by(3, 0.7, 10.0, 100_000, SEED ^ 13, 3);
    let (died2, t2, _) = tree_cp_extinct_by(3, 0.7, 10.0, 100_000, SEED ^ 13, 3);
    assert_eq!((died, t1), (died2, t2));
}

/// Uniform irreducibility in practice: runs started from a sample of type
/// representatives regenerate a ball-with-center herd with frequency
/// bounded away from zero.
#[test]
fn dichotomy_every_start_type_regenerates_the_ball() {
    use herdsim_core::h_herds::HHerdsEngine;
    let types = TypeTable::enumerate(3, 2, DEFAULT_ENUM_BOUND).unwrap();
    let params = SimParams {
        d: 3,
        lambda: 1.0,
        v: 1.0,
        horizon: 8.0,
        event_cap: 30_000,
        seed: SEED ^ 14,
    };
    let ball_len = ball_size(3, 2);
    let stride = (types.len() / 15).max(1);
    for (ti, class) in types.classes.iter().enumerate().step_by(stride) {
        let reps = 150;
        let hits: usize = (0..reps)
            .into_par_iter()
            .map(|r| {
                let init = vec![(class.tree.clone(), class.occupied.clone())];
                let mut engine = HHerdsEngine::new(
                    &params,
                    2,
                    Some(init),
                    (ti * 1000 + r) as u64,
                    Default::default(),
                    None,
                )
                .unwrap();
                loop {
                    if engine.any_ball_center_herd(ball_len, 2) {
                        return 1usize;
                    }
                    match engine.step(params.horizon).unwrap() {
                        Some(()) if engine.events < params.event_cap => {}
                        _ => return 0usize,
                    }
                }
            })
            .sum();
        let freq = hits as f64 / reps as f64;
        assert!(
            freq >= 0.1,
            "start type {ti} regenerated the ball in only {freq:.3} of runs"
        );
    }
}
