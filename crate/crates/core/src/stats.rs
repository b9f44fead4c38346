//! Small statistical helpers shared by the simulation drivers and the
//! validation suite.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Binomial proportion with its standard error.
pub fn proportion_se(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (f64::NAN, f64::NAN);
    }
    let p = successes as f64 / trials as f64;
    (p, (p * (1.0 - p) / trials as f64).sqrt())
}

/// Interpolation-free quantile (lower midpoint convention): the element at
/// rank `ceil(q*n) - 1` of the sorted sample, averaged with the next element
/// when `q*n` is integral. Deterministic and simple to reason about.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    assert!((0.0..=1.0).contains(&q));
    let n = sorted.len();
    let pos = q * n as f64;
    let k = pos.ceil() as usize;
    if (pos - pos.floor()).abs() < 1e-12 && k >= 1 && k < n {
        0.5 * (sorted[k - 1] + sorted[k])
    } else {
        sorted[k.max(1).min(n) - 1]
    }
}

/// Pearson chi-squared goodness-of-fit p-value against equal cell
/// probabilities.
pub fn chi2_uniform_pvalue(counts: &[u64]) -> f64 {
    let k = counts.len();
    assert!(k >= 2);
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / k as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum();
    let dist = ChiSquared::new((k - 1) as f64).expect("df > 0");
    1.0 - dist.cdf(stat)
}

/// Two-sample z statistic for proportions `(p1, se1)` vs `(p2, se2)`.
pub fn z_two_sample(p1: f64, se1: f64, p2: f64, se2: f64) -> f64 {
    let se = (se1 * se1 + se2 * se2).sqrt();
    if se == 0.0 {
        if (p1 - p2).abs() < 1e-300 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (p1 - p2) / se
    }
}

/// Spearman rank correlation with an exact permutation p-value (one-sided,
/// positive association). Only sensible for small samples; panics above 8
/// points.
pub fn spearman_exact(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    assert!((2..=8).contains(&n), "exact permutation test limited to n <= 8");
    let rx = ranks(xs);
    let ry = ranks(ys);
    let rho = rank_corr(&rx, &ry);

    let mut perm: Vec<usize> = (0..n).collect();
    let mut count_ge = 0usize;
    let mut total = 0usize;
    permute(&mut perm, 0, &mut |p| {
        let ryp: Vec<f64> = p.iter().map(|&i| ry[i]).collect();
        if rank_corr(&rx, &ryp) >= rho - 1e-12 {
            count_ge += 1;
        }
        total += 1;
    });
    (rho, count_ge as f64 / total as f64)
}

fn permute<F: FnMut(&[usize])>(perm: &mut Vec<usize>, k: usize, visit: &mut F) {
    if k == perm.len() {
        visit(perm);
        return;
    }
    for i in k..perm.len() {
        perm.swap(k, i);
        permute(perm, k + 1, visit);
        perm.swap(k, i);
    }
}

/// Mid-ranks (ties averaged).
fn ranks(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap());
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && (xs[idx[j + 1]] - xs[idx[i]]).abs() < 1e-12 {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

fn rank_corr(rx: &[f64], ry: &[f64]) -> f64 {
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for (a, b) in rx.iter().zip(ry) {
        num += (a - mx) * (b - my);
        dx += (a - mx) * (a - mx);
        dy += (b - my) * (b - my);
    }
    if dx == 0.0 || dy == 0.0 {
        0.0
    } else {
        num / (dx * dy).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_median_conventions() {
        assert_eq!(quantile(&[1.0, 2.0, 3.0], 0.5), 2.0);
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
    }

    #[test]
    fn chi2_uniform_sane() {
        // perfectly uniform counts -> p close to 1
        let p = chi2_uniform_pvalue(&[100, 100, 100, 100]);
        assert!(p > 0.99);
        // grossly non-uniform -> tiny p
        let p = chi2_uniform_pvalue(&[400, 0, 0, 0]);
        assert!(p < 1e-6);
    }

    #[test]
    fn spearman_perfect_order() {
        let (rho, p) = spearman_exact(&[1.0, 2.0, 3.0, 4.0], &[0.1, 0.2, 0.3, 0.7]);
        assert!((rho - 1.0).abs() < 1e-12);
        assert!(p < 0.05, "p = {p}");
        let (rho, _) = spearman_exact(&[1.0, 2.0, 3.0, 4.0], &[0.7, 0.3, 0.2, 0.1]);
        assert!((rho + 1.0).abs() < 1e-12);
    }
}
