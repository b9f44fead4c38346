//! Python bindings for the main herdsim types and operations.

use herdsim_core::contact_dynamic::extinction_time;
use herdsim_core::h_herds::{self, pf_for, tau_leaf_probability};
use herdsim_core::herds_sim::{estimate_survival, run_frozen_stats, tree_cp_survival, SimParams};
use herdsim_core::switch_graph::{count_loops, Matching};
use herdsim_core::tree_algebra::{ball, ball_size, TypeTable, DEFAULT_ENUM_BOUND};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: herdsim_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Vertex count of the radius-h ball of the infinite d-regular tree.
#[pyfunction]
fn ball_vertex_count(d: usize, h: usize) -> PyResult<usize> {
    if d < 3 {
        return Err(PyValueError::new_err("d must be >= 3"));
    }
    Ok(ball(d, h).len())
}

/// (shape count, nonempty type-class count, strongly connected) for (d, h).
#[pyfunction]
fn type_space(d: usize, h: usize) -> PyResult<(usize, usize, bool)> {
    let types = TypeTable::enumerate(d, h, DEFAULT_ENUM_BOUND).map_err(err)?;
    Ok((types.shapes.len(), types.len(), types.strongly_connected()))
}

/// Dominant eigenpair of the h-herds mean matrix as a dict.
#[pyfunction]
#[pyo3(signature = (d, h, lam, v, tol=1e-10))]
fn pf<'py>(py: Python<'py>, d: usize, h: usize, lam: f64, v: f64, tol: f64) -> PyResult<Bound<'py, PyDict>> {
    let types = TypeTable::enumerate(d, h, DEFAULT_ENUM_BOUND).map_err(err)?;
    let pf = pf_for(&types, lam, v, tol).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("d", d)?;
    out.set_item("h", h)?;
    out.set_item("lambda", lam)?;
    out.set_item("v", v)?;
    out.set_item("mu", pf.mu)?;
    out.set_item("f_min", pf.f_min)?;
    out.set_item("f_max", pf.f_max)?;
    out.set_item("dim", types.len())?;
    out.set_item("residual", pf.residual)?;
    out.set_item("strongly_connected", pf.strongly_connected)?;
    Ok(out)
}

/// Truncated critical birth rate by bisection on the eigenvalue sign.
#[pyfunction]
#[pyo3(signature = (d, h, v, tol=1e-3))]
fn lambda_bar(d: usize, h: usize, v: f64, tol: f64) -> PyResult<f64> {
    let types = TypeTable::enumerate(d, h, DEFAULT_ENUM_BOUND).map_err(err)?;
    Ok(h_herds::lambda_bar(&types, v, tol, 1e-10).map_err(err)?.lambda_hat)
}

/// Herds-process survival probability at the horizon: (p, se).
#[pyfunction]
#[pyo3(signature = (d, lam, v, horizon, reps, seed=12345, event_cap=1_000_000))]
fn herds_survival(
    d: usize,
    lam: f64,
    v: f64,
    horizon: f64,
    reps: usize,
    seed: u64,
    event_cap: u64,
) -> PyResult<(f64, f64)> {
    let params = SimParams {
        d,
        lambda: lam,
        v,
        horizon,
        event_cap,
        seed,
    };
    let est = estimate_survival(&params, reps).map_err(err)?;
    Ok((est.p, est.se))
}

/// Expected frozen-herd statistics from one marked root particle.
#[pyfunction]
#[pyo3(signature = (d, lam, v, horizon, reps, seed=12345, event_cap=100_000))]
fn frozen_stats<'py>(
    py: Python<'py>,
    d: usize,
    lam: f64,
    v: f64,
    horizon: f64,
    reps: usize,
    seed: u64,
    event_cap: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let params = SimParams {
        d,
        lambda: lam,
        v,
        horizon,
        event_cap,
        seed,
    };
    let fs = run_frozen_stats(&params, reps).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("k_mean", fs.k_mean)?;
    out.set_item("k_se", fs.k_se)?;
    out.set_item("k_lower_mean", fs.k_lower_mean)?;
    out.set_item("k_lower_se", fs.k_lower_se)?;
    out.set_item("completed", fs.completed)?;
    out.set_item("censored", fs.censored)?;
    Ok(out)
}

/// P(extinct by horizon) of the contact process on the infinite tree.
#[pyfunction]
#[pyo3(signature = (d, lam, horizon, reps, seed=12345, event_cap=400_000))]
fn tree_cp_extinction(
    d: usize,
    lam: f64,
    horizon: f64,
    reps: usize,
    seed: u64,
    event_cap: u64,
) -> PyResult<(f64, f64)> {
    Ok(tree_cp_survival(d, lam, horizon, event_cap, reps, seed))
}

/// P(some truncated herd touches a leaf of its shape by time s).
#[pyfunction]
#[pyo3(signature = (d, h, lam, v, s, reps, seed=12345))]
fn leaf_touch_probability(
    d: usize,
    h: usize,
    lam: f64,
    v: f64,
    s: f64,
    reps: usize,
    seed: u64,
) -> PyResult<(f64, f64)> {
    let params = SimParams {
        d,
        lambda: lam,
        v,
        horizon: s,
        event_cap: 10_000_000,
        seed,
    };
    tau_leaf_probability(&params, h, s, reps).map_err(err)
}

/// One extinction run of the contact process on the switching multigraph:
/// dict with outcome, tau-or-censor-time and the event count.
#[pyfunction]
#[pyo3(signature = (n, d, lam, v, horizon, seed=12345, run_id=0, event_cap=100_000_000))]
#[allow(clippy::too_many_arguments)]
fn cp_extinction_run<'py>(
    py: Python<'py>,
    n: usize,
    d: usize,
    lam: f64,
    v: f64,
    horizon: f64,
    seed: u64,
    run_id: u64,
    event_cap: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let rec = extinction_time(n, d, lam, v, horizon, event_cap, seed, run_id).map_err(err)?;
    let out = PyDict::new(py);
    match rec.outcome {
        herdsim_core::contact_dynamic::CpOutcome::Died { tau } => {
            out.set_item("outcome", "died")?;
            out.set_item("tau", tau)?;
        }
        herdsim_core::contact_dynamic::CpOutcome::Censored { at, .. } => {
            out.set_item("outcome", "censored")?;
            out.set_item("tau", at)?;
        }
    }
    out.set_item("events", rec.events)?;
    Ok(out)
}

/// Mean count of length-m loops over sampled random d-regular multigraphs.
#[pyfunction]
#[pyo3(signature = (n, d, m, samples, seed=12345))]
fn mean_loop_count(n: usize, d: usize, m: usize, samples: usize, seed: u64) -> PyResult<f64> {
    let mut total = 0usize;
    for r in 0..samples {
        let mut rng = herdsim_core::rng::stream(seed, herdsim_core::rng::tag::MATCHING, r as u64);
        let g = Matching::sample(n, d, &mut rng).map_err(err)?;
        total += count_loops(&g, m);
    }
    Ok(total as f64 / samples as f64)
}

/// Closed-form ball size helper mirrored from the tree algebra.
#[pyfunction]
fn ball_size_formula(d: usize, h: usize) -> usize {
    ball_size(d, h)
}

#[pymodule]
fn herdsim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(ball_vertex_count, m)?)?;
    m.add_function(wrap_pyfunction!(ball_size_formula, m)?)?;
    m.add_function(wrap_pyfunction!(type_space, m)?)?;
    m.add_function(wrap_pyfunction!(pf, m)?)?;
    m.add_function(wrap_pyfunction!(lambda_bar, m)?)?;
    m.add_function(wrap_pyfunction!(herds_survival, m)?)?;
    m.add_function(wrap_pyfunction!(frozen_stats, m)?)?;
    m.add_function(wrap_pyfunction!(tree_cp_extinction, m)?)?;
    m.add_function(wrap_pyfunction!(leaf_touch_probability, m)?)?;
    m.add_function(wrap_pyfunction!(cp_extinction_run, m)?)?;
    m.add_function(wrap_pyfunction!(mean_loop_count, m)?)?;
    Ok(())
}
