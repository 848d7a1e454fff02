//! Symmetry tests: likelihood ratio (asymptotic and parametric bootstrap),
//! the Wald-type statistic and its skewness measure, and the b₂ test.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{NntsError, Result};
use crate::estimation::{fit_pair, FitOptions, FitPair, FitReport};
use crate::model::{AngleSample, ComplexCoefficients, NntsModel, SymmetricNntsModel};
use crate::parallel::map_indexed;
use crate::sampling::{sample_symmetric, RngStream};

pub use crate::special::chisq_sf;

/// Raw LR values down to this are treated as optimizer noise.
pub const LR_NOISE: f64 = 1e-6;
/// Smallest bootstrap size accepted.
pub const MIN_REPLICATES: usize = 99;
const REPLICATE_RETRIES: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    LrAsymptotic,
    LrBootstrap,
    Wald,
    B2Bootstrap,
}

impl TestKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TestKind::LrAsymptotic => "lr_asymptotic",
            TestKind::LrBootstrap => "lr_bootstrap",
            TestKind::Wald => "wald",
            TestKind::B2Bootstrap => "b2_bootstrap",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub test: TestKind,
    pub statistic: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub df: Option<u32>,
    pub p_value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_replicates: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_hat: Option<f64>,
}

/// `max(0, -2(l_S - l_G))` for fits of the same degree on the same data.
pub fn lr_statistic(general: &FitReport<NntsModel>, symmetric: &FitReport<SymmetricNntsModel>) -> Result<f64> {
    if general.model.m() != symmetric.model.m() {
        return Err(NntsError::domain(format!(
            "LR needs fits of equal degree, got general M={} and symmetric M={}",
            general.model.m(),
            symmetric.model.m()
        )));
    }
    if general.n != symmetric.n {
        return Err(NntsError::domain(format!(
            "LR needs fits on the same data, got n={} and n={}",
            general.n, symmetric.n
        )));
    }
    if general.model.m() < 2 {
        return Err(NntsError::domain("LR test needs M >= 2"));
    }
    let raw = -2.0 * (symmetric.loglik - general.loglik);
    if raw < -LR_NOISE {
        return Err(NntsError::OptimizerInconsistency { excess: -raw / 2.0 });
    }
    Ok(raw.max(0.0))
}

fn check_test_degree(m: usize) -> Result<()> {
    if m == 1 {
        return Err(NntsError::domain("M=1 NNTS models are symmetric by definition"));
    }
    if m < 2 {
        return Err(NntsError::domain("symmetry tests need M >= 2"));
    }
    Ok(())
}

/// Warns when the sample is below the size where the chi-squared
/// approximation is trusted. Returns whether the warning fired.
pub fn warn_small_sample(n: usize, m: usize) -> bool {
    let small = n < 25 * m;
    if small {
        log::warn!(
            "n={n} is below 25*M={}; the bootstrapped version of the test is recommended",
            25 * m
        );
    }
    small
}

fn observed_pair(data: &AngleSample, m: usize, opts: &FitOptions) -> Result<(FitPair, f64)> {
    let pair = fit_pair(data, m, opts, &[])?;
    let lr = lr_statistic(&pair.general, &pair.symmetric)?;
    Ok((pair, lr))
}

/// LR test with the chi-squared reference on `M - 1` degrees of freedom.
pub fn lr_test_asymptotic(data: &AngleSample, m: usize, opts: &FitOptions) -> Result<TestResult> {
    check_test_degree(m)?;
    warn_small_sample(data.n(), m);
    let (pair, lr) = observed_pair(data, m, opts)?;
    Ok(lr_asymptotic_result(&pair, lr))
}

fn lr_asymptotic_result(pair: &FitPair, lr: f64) -> TestResult {
    let m = pair.general.model.m();
    let df = (m - 1) as u32;
    TestResult {
        test: TestKind::LrAsymptotic,
        statistic: lr,
        df: Some(df),
        p_value: chisq_sf(lr, df),
        k_replicates: None,
        seed: None,
        m: Some(m),
        mu_hat: Some(pair.symmetric.model.mu()),
    }
}

fn check_replicates(k: usize) -> Result<()> {
    if k < MIN_REPLICATES {
        return Err(NntsError::domain(format!(
            "need at least {MIN_REPLICATES} bootstrap replicates, got {k}"
        )));
    }
    Ok(())
}

/// `(1 + #{T* >= T_obs}) / (K + 1)`.
pub fn bootstrap_p_value(observed: f64, replicates: &[f64]) -> f64 {
    let count = replicates.iter().filter(|&&t| t >= observed).count();
    (1 + count) as f64 / (replicates.len() + 1) as f64
}

/// One bootstrap LR value from the null model; retried on fresh sub-streams,
/// then reported as `+inf` so a failure can only raise the p-value.
fn replicate_lr(null: &SymmetricNntsModel, n: usize, m: usize, stream: RngStream, opts: &FitOptions) -> f64 {
    let warm = [null.to_general()];
    for attempt in 0..=REPLICATE_RETRIES {
        let run = || -> Result<f64> {
            let data = sample_symmetric(null, n, &stream.child(attempt))?;
            let pair = fit_pair(&data, m, opts, &warm)?;
            lr_statistic(&pair.general, &pair.symmetric)
        };
        match run() {
            Ok(lr) => return lr,
            Err(e) => log::debug!("bootstrap replicate {} attempt {attempt} failed: {e}", stream.stream_id),
        }
    }
    log::warn!(
        "bootstrap replicate {} failed after retries; counted as +inf",
        stream.stream_id
    );
    f64::INFINITY
}

/// Parametric bootstrap LR test. Replicates are drawn from the fitted
/// symmetric model with its axis moved to zero, which leaves the null
/// distribution of LR unchanged and keeps the p-value rotation invariant.
pub fn lr_test_bootstrap(data: &AngleSample, m: usize, k: usize, seed: u64, opts: &FitOptions) -> Result<TestResult> {
    check_test_degree(m)?;
    check_replicates(k)?;
    let (pair, lr) = observed_pair(data, m, opts)?;
    Ok(lr_bootstrap_from_pair(&pair, lr, data.n(), k, seed, opts))
}

pub(crate) fn lr_bootstrap_from_pair(
    pair: &FitPair,
    lr: f64,
    n: usize,
    k: usize,
    seed: u64,
    opts: &FitOptions,
) -> TestResult {
    let m = pair.general.model.m();
    let null =
        SymmetricNntsModel::new(pair.symmetric.model.axis_free_rho(), 0.0).expect("axis-free null model is valid");
    let replicate_opts = FitOptions {
        threads: Some(1),
        ..opts.clone()
    };
    let stars = map_indexed(opts.threads, k, |i| {
        replicate_lr(&null, n, m, RngStream::new(seed, i as u64), &replicate_opts)
    });
    TestResult {
        test: TestKind::LrBootstrap,
        statistic: lr,
        df: None,
        p_value: bootstrap_p_value(lr, &stars),
        k_replicates: Some(k),
        seed: Some(seed),
        m: Some(m),
        mu_hat: Some(pair.symmetric.model.mu()),
    }
}

/// Symmetric counterpart of a general fit used by the Wald statistic:
/// `ĉ_S,k = ±|ĉ_G,k| e^{-ikμ}`, each sign taken from `Re(ĉ_G,k e^{ikμ})`.
/// With nonnegative signs this is the moduli-plus-axis construction; the
/// signs make it exact for every symmetric fit, whose `ρ_k` may be negative,
/// and make the result independent of the choice between `μ` and `μ + π`.
pub fn wald_symmetric_coeffs(general: &ComplexCoefficients, mu_hat: f64) -> Vec<Complex64> {
    general
        .as_slice()
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let turn = Complex64::from_polar(1.0, k as f64 * mu_hat);
            let sign = if (c * turn).re >= 0.0 { 1.0 } else { -1.0 };
            Complex64::from_polar(sign * c.norm(), -(k as f64) * mu_hat)
        })
        .collect()
}

fn wald_inner(general: &ComplexCoefficients, mu_hat: f64) -> Complex64 {
    let s = wald_symmetric_coeffs(general, mu_hat);
    general.as_slice().iter().zip(&s).map(|(g, s)| g.conj() * s).sum()
}

/// Closed form `n(1 - |ĉ_G^H ĉ_S|²)`.
pub fn wald_statistic(general: &ComplexCoefficients, mu_hat: f64, n: usize) -> f64 {
    n as f64 * sk_nnts(general, mu_hat)
}

/// `(ĉ_G - ĉ_S)^H n(I - ĉ_G ĉ_G^H) (ĉ_G - ĉ_S)` evaluated term by term.
pub fn wald_quadratic_form(general: &ComplexCoefficients, mu_hat: f64, n: usize) -> f64 {
    let g = general.as_slice();
    let s = wald_symmetric_coeffs(general, mu_hat);
    let d: Vec<Complex64> = g.iter().zip(&s).map(|(a, b)| a - b).collect();
    let dd: f64 = d.iter().map(|x| x.norm_sqr()).sum();
    let gd: Complex64 = g.iter().zip(&d).map(|(a, b)| a.conj() * b).sum();
    n as f64 * (dd - gd.norm_sqr())
}

/// Skewness measure `1 - |ĉ_G^H ĉ_S|²` in `[0, 1]`.
pub fn sk_nnts(general: &ComplexCoefficients, mu_hat: f64) -> f64 {
    (1.0 - wald_inner(general, mu_hat).norm_sqr()).clamp(0.0, 1.0)
}

/// Wald-type test from a fitted pair. The p-value uses the chi-squared
/// reference with `M - 1` degrees of freedom, like the LR statistic.
pub fn wald_test(pair: &FitPair) -> Result<TestResult> {
    let m = pair.general.model.m();
    check_test_degree(m)?;
    let mu = pair.symmetric.model.mu();
    let w = wald_statistic(pair.general.model.coeffs(), mu, pair.general.n);
    let df = (m - 1) as u32;
    Ok(TestResult {
        test: TestKind::Wald,
        statistic: w,
        df: Some(df),
        p_value: chisq_sf(w, df),
        k_replicates: None,
        seed: None,
        m: Some(m),
        mu_hat: Some(mu),
    })
}

/// `SK_NNTS` of a fitted pair.
pub fn sk_nnts_of_pair(pair: &FitPair) -> f64 {
    sk_nnts(pair.general.model.coeffs(), pair.symmetric.model.mu())
}

const DEGENERATE_R1: f64 = 1e-12;

/// Sample circular skewness `R̄₂ sin(θ̄₂ - 2θ̄₁) / (1 - R̄₁)^{3/2}`.
pub fn sample_skewness(data: &AngleSample) -> Result<f64> {
    if data.n() < 2 {
        return Err(NntsError::degenerate("skewness needs at least two angles"));
    }
    let m1 = data.trig_moment(1);
    let m2 = data.trig_moment(2);
    let r1 = m1.norm();
    if r1 >= 1.0 - DEGENERATE_R1 {
        return Err(NntsError::degenerate("all angles coincide (mean resultant length 1)"));
    }
    // R̄₂ sin(θ̄₂ - 2θ̄₁) = Im(m₂ · conj(m₁)² / R̄₁²), and 0 when R̄₁ = 0
    let num = if r1 == 0.0 {
        0.0
    } else {
        (m2 * (m1.conj() / r1).powi(2)).im
    };
    Ok(num / (1.0 - r1).powf(1.5))
}

fn mean_direction(data: &AngleSample) -> Result<f64> {
    if data.n() < 2 {
        return Err(NntsError::degenerate("b2 needs at least two angles"));
    }
    let m1 = data.trig_moment(1);
    if m1.norm() < DEGENERATE_R1 {
        return Err(NntsError::degenerate(
            "mean direction undefined (mean resultant length 0)",
        ));
    }
    Ok(m1.arg())
}

/// Mean of `sin 2ψ` with `ψ` measured from the sample's own mean direction.
fn b2_of_centered(psi: &[f64]) -> Result<f64> {
    let (s, c) = psi.iter().fold((0.0, 0.0), |(s, c), p| (s + p.sin(), c + p.cos()));
    if s.hypot(c) < DEGENERATE_R1 * psi.len() as f64 {
        return Err(NntsError::degenerate(
            "mean direction undefined (mean resultant length 0)",
        ));
    }
    let mean = s.atan2(c);
    Ok(psi.iter().map(|p| (2.0 * (p - mean)).sin()).sum::<f64>() / psi.len() as f64)
}

/// `b₂ = (1/n) Σ sin 2(θ_j - θ̄)`.
pub fn b2_statistic(data: &AngleSample) -> Result<f64> {
    let mean = mean_direction(data)?;
    Ok(data.angles().iter().map(|t| (2.0 * (t - mean)).sin()).sum::<f64>() / data.n() as f64)
}

/// Two-sided bootstrap b₂ test. Replicates resample the sample reflected
/// about its mean direction, which imposes symmetry without a parametric
/// model; each replicate re-centres on its own mean.
pub fn b2_test_bootstrap(data: &AngleSample, k: usize, seed: u64, threads: Option<usize>) -> Result<TestResult> {
    check_replicates(k)?;
    let mean = mean_direction(data)?;
    let psi: Vec<f64> = data.angles().iter().map(|t| t - mean).collect();
    let observed = b2_of_centered(&psi)?;
    let pool: Vec<f64> = psi.iter().copied().chain(psi.iter().map(|p| -p)).collect();
    let n = data.n();
    let stars = map_indexed(threads, k, |i| {
        use rand::Rng;
        let stream = RngStream::new(seed, i as u64);
        for attempt in 0..=REPLICATE_RETRIES {
            let mut rng = stream.child(attempt).rng();
            let draw: Vec<f64> = (0..n).map(|_| pool[rng.random_range(0..pool.len())]).collect();
            if let Ok(b) = b2_of_centered(&draw) {
                return b.abs();
            }
        }
        f64::INFINITY
    });
    Ok(TestResult {
        test: TestKind::B2Bootstrap,
        statistic: observed,
        df: None,
        p_value: bootstrap_p_value(observed.abs(), &stars),
        k_replicates: Some(k),
        seed: Some(seed),
        m: None,
        mu_hat: None,
    })
}

/// Which tests [`symmetry_tests`] should run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TestSelection {
    pub lr_asymptotic: bool,
    pub lr_bootstrap: bool,
    pub b2_bootstrap: bool,
}

/// Runs the selected tests at degree `m`, sharing a single pair of fits.
/// `m` is only checked when an LR test is selected.
pub fn symmetry_tests(
    data: &AngleSample,
    m: usize,
    k: usize,
    seed: u64,
    which: TestSelection,
    opts: &FitOptions,
) -> Result<Vec<TestResult>> {
    let mut out = Vec::new();
    if which.lr_asymptotic || which.lr_bootstrap {
        check_test_degree(m)?;
        warn_small_sample(data.n(), m);
        let (pair, lr) = observed_pair(data, m, opts)?;
        if which.lr_asymptotic {
            out.push(lr_asymptotic_result(&pair, lr));
        }
        if which.lr_bootstrap {
            check_replicates(k)?;
            out.push(lr_bootstrap_from_pair(&pair, lr, data.n(), k, seed, opts));
        }
    }
    if which.b2_bootstrap {
        out.push(b2_test_bootstrap(data, k, seed, opts.threads)?);
    }
    Ok(out)
}
