//! First-moment analysis of the h-herds process: the mean matrix over
//! nonempty type classes, its dominant eigenpair, and the truncated critical
//! birth rate.

use crate::tree_algebra::{active_edges, canonical_code, h_split, Ambient, TypeTable};
use crate::{Error, Result};
use serde::Serialize;
use std::collections::BTreeSet;

/// Sparse generator of the first-moment semigroup over nonempty type
/// classes: entry (t, t') is the rate-weighted offspring count of class t'
/// from class t, with the negative total outflow on the diagonal.
pub struct MeanMatrix {
    pub lambda: f64,
    pub v: f64,
    rows: Vec<Vec<(u32, f64)>>,
    max_outflow: f64,
}

impl MeanMatrix {
    pub fn assemble(types: &TypeTable, lambda: f64, v: f64) -> Self {
        let dim = types.len();
        let mut rows = Vec::with_capacity(dim);
        let mut max_outflow = 0.0f64;
        for class in &types.classes {
            let j = &class.jumps;
            let mut row: Vec<(u32, f64)> = Vec::new();
            let mut outflow = 0.0;
            for target in &j.deaths {
                outflow += 1.0;
                if let Some(t) = target {
                    row.push((*t as u32, 1.0));
                }
            }
            for &(t, mult) in &j.births {
                outflow += lambda * mult as f64;
                row.push((t as u32, lambda * mult as f64));
            }
            for &(a, b) in &j.splits {
                outflow += v;
                row.push((a as u32, v));
                row.push((b as u32, v));
            }
            // merge duplicate columns
            row.sort_unstable_by_key(|&(c, _)| c);
            let mut merged: Vec<(u32, f64)> = Vec::with_capacity(row.len());
            for (c, w) in row {
                match merged.last_mut() {
                    Some((lc, lw)) if *lc == c => *lw += w,
                    _ => merged.push((c, w)),
                }
            }
            rows.push((merged, outflow));
            max_outflow = max_outflow.max(outflow);
        }
        // fold the diagonal in
        let rows = rows
            .into_iter()
            .enumerate()
            .map(|(i, (mut row, outflow))| {
                match row.binary_search_by_key(&(i as u32), |&(c, _)| c) {
                    Ok(k) => row[k].1 -= outflow,
                    Err(k) => row.insert(k, (i as u32, -outflow)),
                }
                row
            })
            .collect();
        MeanMatrix {
            lambda,
            v,
            rows,
            max_outflow,
        }
    }

    /// Bare matrix for tests.
    pub fn from_rows(rows: Vec<Vec<(u32, f64)>>, lambda: f64, v: f64) -> Self {
        let max_outflow = rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r.iter()
                    .find(|&&(c, _)| c as usize == i)
                    .map(|&(_, w)| -w)
                    .unwrap_or(0.0)
            })
            .fold(0.0f64, f64::max);
        MeanMatrix {
            lambda,
            v,
            rows,
            max_outflow,
        }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    /// y = M x.
    pub fn mul(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim());
        for (i, row) in self.rows.iter().enumerate() {
            let mut acc = 0.0;
            for &(c, w) in row {
                acc += w * x[c as usize];
            }
            y[i] = acc;
        }
    }

    /// Contract one row against a vector: (M g)(t).
    pub fn row_dot(&self, t: usize, g: &[f64]) -> f64 {
        self.rows[t].iter().map(|&(c, w)| w * g[c as usize]).sum()
    }

    pub fn max_outflow(&self) -> f64 {
        self.max_outflow
    }
}

/// Dominant eigenpair of the mean matrix.
#[derive(Debug, Clone, Serialize)]
pub struct PfResult {
    pub mu: f64,
    pub f: Vec<f64>,
    pub f_min: f64,
    pub f_max: f64,
    pub iterations: usize,
    pub residual: f64,
    pub strongly_connected: bool,
}

/// Power iteration on M + cI with shift c = 1 + max total outflow, making
/// the iteration matrix nonnegative with a strictly positive diagonal.
/// Deterministic given the tolerance; the eigenvector is max-normalized.
pub fn pf_eigen(m: &MeanMatrix, types_strongly_connected: bool, tol: f64) -> Result<PfResult> {
    let n = m.dim();
    if n == 0 {
        return Err(Error::InvalidArgument("empty mean matrix".into()));
    }
    let shift = 1.0 + m.max_outflow();
    let max_iter = 2_000_000usize.min(200 * n + 200_000);
    let mut x = vec![1.0f64; n];
    let mut y = vec![0.0f64; n];
    let mut rho;
    let mut residual;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        m.mul(&x, &mut y);
        for i in 0..n {
            y[i] += shift * x[i];
        }
        // Rayleigh quotient is a better eigenvalue estimate than the norm ratio
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n {
            num += x[i] * y[i];
            den += x[i] * x[i];
        }
        rho = num / den;
        let norm = y.iter().cloned().fold(0.0f64, f64::max);
        if norm <= 0.0 {
            return Err(Error::NonConvergence {
                residual: f64::NAN,
                iterations,
            });
        }
        // x is max-normalized, so this residual is already relative to
        // the eigenvector scale
        residual = 0.0f64;
        for i in 0..n {
            residual = residual.max((y[i] - rho * x[i]).abs());
            x[i] = y[i] / norm;
        }
        if residual <= 0.5 * tol && iterations > 1 {
            break;
        }
    }
    // final polish: recompute residual against the normalized vector
    m.mul(&x, &mut y);
    for i in 0..n {
        y[i] += shift * x[i];
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n {
        num += x[i] * y[i];
        den += x[i] * x[i];
    }
    rho = num / den;
    let mut res = 0.0f64;
    for i in 0..n {
        res = res.max((y[i] - rho * x[i]).abs());
    }
    residual = res;
    if !(residual <= tol) {
        return Err(Error::NonConvergence {
            residual,
            iterations,
        });
    }
    let f_max = x.iter().cloned().fold(f64::MIN, f64::max);
    let f: Vec<f64> = x.iter().map(|&v| v / f_max).collect();
    let f_min = f.iter().cloned().fold(f64::MAX, f64::min);
    Ok(PfResult {
        mu: rho - shift,
        f,
        f_min,
        f_max: 1.0,
        iterations,
        residual,
        strongly_connected: types_strongly_connected,
    })
}

/// Convenience: assemble the matrix and compute the eigenpair.
pub fn pf_for(types: &TypeTable, lambda: f64, v: f64, tol: f64) -> Result<PfResult> {
    let m = MeanMatrix::assemble(types, lambda, v);
    pf_eigen(&m, types.strongly_connected(), tol)
}

/// Independent check of the semigroup identity: for every class, the jump
/// sums S_death + S_birth + S_split recomputed directly from the class
/// representative (fresh splitting, fresh canonicalization) must equal
/// mu * f. Returns the maximum absolute discrepancy.
pub fn semigroup_residual(types: &TypeTable, lambda: f64, v: f64, pf: &PfResult) -> Result<f64> {
    let mut worst = 0.0f64;
    let h = types.h;
    for class in &types.classes {
        let tree = &class.tree;
        let occ = &class.occupied;
        let fx = pf.f[types.lookup(&class.code).unwrap()];
        let mut total = 0.0;

        for u in occ {
            let mut rest = occ.clone();
            rest.remove(u);
            let fy = if rest.is_empty() {
                0.0
            } else {
                pf.f[types.class_of(tree, &rest)?]
            };
            total += fy - fx;
        }
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
            let fy = pf.f[types.class_of(tree, &grown)?];
            total += lambda * mult * (fy - fx);
        }
        for (a, b) in active_edges(Ambient::Finite(tree), occ) {
            let sa = h_split(tree, &a, &b, h)?;
            let sb = h_split(tree, &b, &a, h)?;
            let occ_a: BTreeSet<_> = occ
                .intersection(&tree.side_of_edge(&a, &b)?)
                .cloned()
                .collect();
            let occ_b: BTreeSet<_> = occ
                .intersection(&tree.side_of_edge(&b, &a)?)
                .cloned()
                .collect();
            let fa = pf.f[types
                .lookup(&canonical_code(&sa.tree, &occ_a))
                .ok_or_else(|| Error::Consistency("split class missing".into()))?];
            let fb = pf.f[types
                .lookup(&canonical_code(&sb.tree, &occ_b))
                .ok_or_else(|| Error::Consistency("split class missing".into()))?];
            total += v * (fa + fb - fx);
        }
        worst = worst.max((total - pf.mu * fx).abs());
    }
    Ok(worst)
}

/// Outcome of the critical-value bisection.
#[derive(Debug, Clone, Serialize)]
pub struct LambdaBar {
    pub lambda_hat: f64,
    pub lo: f64,
    pub hi: f64,
    pub mu_lo: f64,
    pub mu_hi: f64,
    pub pf_evaluations: usize,
}

/// Bisection on the sign of mu(lambda) at fixed (v, h). The lower bracket
/// 1/d is provably subcritical (total birth rate below the death rate); the
/// upper bracket doubles from 1 until mu > 0, capped at 32.
pub fn lambda_bar(types: &TypeTable, v: f64, tol: f64, pf_tol: f64) -> Result<LambdaBar> {
    let d = types.d as f64;
    let mut evals = 0;
    let mut mu_at = |lambda: f64| -> Result<f64> {
        evals += 1;
        Ok(pf_for(types, lambda, v, pf_tol)?.mu)
    };
    let mut lo = 1.0 / d;
    let mu_lo_init = mu_at(lo)?;
    if mu_lo_init >= 0.0 {
        return Err(Error::Bracket {
            lo,
            hi: lo,
            mu_lo: mu_lo_init,
            mu_hi: mu_lo_init,
        });
    }
    let mut hi = 1.0;
    let mut mu_hi = mu_at(hi)?;
    while mu_hi <= 0.0 {
        hi *= 2.0;
        if hi > 32.0 {
            return Err(Error::Bracket {
                lo,
                hi,
                mu_lo: mu_lo_init,
                mu_hi,
            });
        }
        mu_hi = mu_at(hi)?;
    }
    let mut mu_lo = mu_lo_init;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let mu_mid = mu_at(mid)?;
        if mu_mid > 0.0 {
            hi = mid;
            mu_hi = mu_mid;
        } else {
            lo = mid;
            mu_lo = mu_mid;
        }
    }
    Ok(LambdaBar {
        lambda_hat: 0.5 * (lo + hi),
        lo,
        hi,
        mu_lo,
        mu_hi,
        pf_evaluations: evals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree_algebra::DEFAULT_ENUM_BOUND;

    #[test]
    fn one_by_one_matrix() {
        let m = MeanMatrix::from_rows(vec![vec![(0, -1.0)]], 0.0, 0.0);
        let pf = pf_eigen(&m, true, 1e-10).unwrap();
        assert!((pf.mu + 1.0).abs() < 1e-9);
        assert_eq!(pf.f, vec![1.0]);
    }

    #[test]
    fn zero_birth_rate_has_particle_count_eigenvector() {
        for (h, v) in [(1usize, 0.7), (2usize, 1.5)] {
            let types = TypeTable::enumerate(3, h, DEFAULT_ENUM_BOUND).unwrap();
            let m = MeanMatrix::assemble(&types, 0.0, v);
            // exact eigenpair: g = particle count, M g = -g
            let g: Vec<f64> = types.classes.iter().map(|c| c.particles() as f64).collect();
            for t in 0..types.len() {
                let got = m.row_dot(t, &g);
                assert!(
                    (got + g[t]).abs() < 1e-12,
                    "h={h} class {t}: Mg = {got}, want {}",
                    -g[t]
                );
            }
            let pf = pf_eigen(&m, types.strongly_connected(), 1e-10).unwrap();
            assert!((pf.mu + 1.0).abs() < 1e-8, "mu = {}", pf.mu);
        }
    }

    #[test]
    fn h1_dimension_and_residual() {
        let types = TypeTable::enumerate(3, 1, DEFAULT_ENUM_BOUND).unwrap();
        let m = MeanMatrix::assemble(&types, 1.0, 1.0);
        assert_eq!(m.dim(), 9);
        let pf = pf_eigen(&m, types.strongly_connected(), 1e-10).unwrap();
        assert!(pf.residual <= 1e-10);
        let worst = semigroup_residual(&types, 1.0, 1.0, &pf).unwrap();
        assert!(worst <= 1e-8, "worst semigroup residual {worst}");
    }

    #[test]
    fn h2_eigenvector_strictly_positive() {
        let types = TypeTable::enumerate(3, 2, DEFAULT_ENUM_BOUND).unwrap();
        assert!(types.strongly_connected());
        let pf = pf_for(&types, 0.8, 1.0, 1e-10).unwrap();
        assert!(pf.f_min > 0.0);
        assert!(pf.f.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn lambda_bar_bracket_contract() {
        let types = TypeTable::enumerate(3, 1, DEFAULT_ENUM_BOUND).unwrap();
        let out = lambda_bar(&types, 1.0, 1e-3, 1e-10).unwrap();
        assert!(out.lambda_hat >= 1.0 / 3.0);
        assert!(out.mu_lo < 0.0 && out.mu_hi > 0.0);
        assert!(out.hi - out.lo <= 1e-3);
        // bisection contract at the returned width
        let mu_minus = pf_for(&types, out.lo, 1.0, 1e-10).unwrap().mu;
        let mu_plus = pf_for(&types, out.hi, 1.0, 1e-10).unwrap().mu;
        assert!(mu_minus < 0.0 && mu_plus > 0.0);
    }
}
