//! Two-sample Kolmogorov–Smirnov test and Benjamini–Hochberg adjustment.

use std::cmp::Ordering;

/// Terms of the Kolmogorov series smaller than this are dropped.
pub const KS_SERIES_TOL: f64 = 1e-10;

/// Survival function of the Kolmogorov distribution, `P(K > lambda)`.
///
/// Uses `2 sum (-1)^(k-1) exp(-2 k^2 lambda^2)` for `lambda >= 1.18` and the
/// Jacobi-theta form `1 - sqrt(2 pi)/lambda sum exp(-(2k-1)^2 pi^2 / (8 lambda^2))`
/// below, where the alternating series converges slowly.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda.is_nan() {
        return f64::NAN;
    }
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        let mut sum = 0.0;
        for k in 1..100 {
            let m = (2 * k - 1) as f64;
            let t = (-m * m * pi2 / (8.0 * lambda * lambda)).exp();
            sum += t;
            if t < KS_SERIES_TOL {
                break;
            }
        }
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / lambda * sum;
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let mut sum = 0.0;
        for k in 1..100 {
            let kf = k as f64;
            let t = (-2.0 * kf * kf * lambda * lambda).exp();
            sum += if k % 2 == 1 { t } else { -t };
            if t < KS_SERIES_TOL {
                break;
            }
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

fn sorted(x: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = x.iter().copied().filter(|v| !v.is_nan()).collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    v
}

/// Two-sample KS statistic with asymptotic p-value. NaNs are dropped; ties
/// across samples are stepped together.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let a = sorted(a);
    let b = sorted(b);
    let (n, m) = (a.len(), b.len());
    if n == 0 || m == 0 {
        return KsResult { statistic: 0.0, p_value: 1.0 };
    }
    let (mut ia, mut ib) = (0, 0);
    let mut stat: f64 = 0.0;
    while ia < n && ib < m {
        let x = a[ia].min(b[ib]);
        while ia < n && a[ia] <= x {
            ia += 1;
        }
        while ib < m && b[ib] <= x {
            ib += 1;
        }
        stat = stat.max((ia as f64 / n as f64 - ib as f64 / m as f64).abs());
    }
    let en = ((n * m) as f64 / (n + m) as f64).sqrt();
    KsResult { statistic: stat, p_value: kolmogorov_sf(en * stat) }
}

/// Benjamini–Hochberg adjusted p-values, in input order.
pub fn benjamini_hochberg(p: &[f64]) -> Vec<f64> {
    let n = p.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| p[x].partial_cmp(&p[y]).unwrap_or(Ordering::Equal).then(x.cmp(&y)));
    let mut adj = vec![1.0; n];
    let mut running = 1.0f64;
    for (rank, &idx) in order.iter().enumerate().rev() {
        let q = (p[idx] * n as f64 / (rank + 1) as f64).min(1.0);
        running = running.min(q);
        adj[idx] = running;
    }
    adj
}
