//! Goodness-of-fit helpers: one-sample Kolmogorov–Smirnov and binomial bands.

use serde::Serialize;

use crate::special::ln_gamma;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsReport {
    pub n: usize,
    pub statistic: f64,
    pub p_value: f64,
}

impl KsReport {
    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// Two-sided one-sample KS test of `values` against a continuous `cdf`.
pub fn ks_test(values: &[f64], cdf: impl Fn(f64) -> f64) -> KsReport {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cdf_values: Vec<f64> = sorted.iter().map(|&x| cdf(x)).collect();
    ks_from_sorted_cdf(&cdf_values)
}

/// KS test when the CDF has already been evaluated at the sorted sample.
pub fn ks_from_sorted_cdf(cdf_values: &[f64]) -> KsReport {
    let n = cdf_values.len();
    let nf = n as f64;
    let d = cdf_values
        .iter()
        .enumerate()
        .map(|(i, &f)| {
            let above = (i as f64 + 1.0) / nf - f;
            let below = f - i as f64 / nf;
            above.max(below)
        })
        .fold(0.0, f64::max);
    let sqrt_n = nf.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    KsReport {
        n,
        statistic: d,
        p_value: kolmogorov_sf(lambda),
    }
}

/// Limiting Kolmogorov survival function `P(K > λ)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.0 {
        // Jacobi-theta form converges fast for small λ
        let s: f64 = (1..=50)
            .map(|j| {
                let k = (2 * j - 1) as f64;
                (-k * k * std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda)).exp()
            })
            .sum();
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let s: f64 = (1..=100)
            .map(|j| {
                let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * (j * j) as f64 * lambda * lambda).exp()
            })
            .sum();
        (2.0 * s).clamp(0.0, 1.0)
    }
}

fn binomial_ln_pmf(trials: u64, p: f64, k: u64) -> f64 {
    let (n, kf) = (trials as f64, k as f64);
    let ln_choose = ln_gamma(n + 1.0) - ln_gamma(kf + 1.0) - ln_gamma(n - kf + 1.0);
    let ln_p = if k == 0 { 0.0 } else { kf * p.ln() };
    let ln_q = if k == trials { 0.0 } else { (n - kf) * (1.0 - p).ln() };
    ln_choose + ln_p + ln_q
}

/// Equal-tailed acceptance band `[lo, hi]` of counts for `Binomial(trials, p)`:
/// each tail outside the band has probability at most `(1 - level) / 2`.
pub fn binomial_band(trials: u64, p: f64, level: f64) -> (u64, u64) {
    let tail = (1.0 - level) / 2.0;
    let pmf: Vec<f64> = (0..=trials).map(|k| binomial_ln_pmf(trials, p, k).exp()).collect();
    let mut lo = 0;
    let mut acc = 0.0;
    for (k, &m) in pmf.iter().enumerate() {
        if acc + m > tail {
            lo = k as u64;
            break;
        }
        acc += m;
    }
    let mut hi = trials;
    let mut acc = 0.0;
    for (k, &m) in pmf.iter().enumerate().rev() {
        if acc + m > tail {
            hi = k as u64;
            break;
        }
        acc += m;
    }
    (lo, hi)
}
