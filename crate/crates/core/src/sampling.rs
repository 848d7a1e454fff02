//! Exact samplers for NNTS and k-sine densities with reproducible streams.
//!
//! Both samplers use uniform proposals on `[0, 2π)` and a constant envelope,
//! so every accepted draw is exact.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{NntsError, Result};
use crate::model::{wrap_angle, AngleSample, ComplexCoefficients, NntsModel, SymmetricNntsModel};
use crate::special::ln_bessel_i0;

pub use crate::special::bessel_i0;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// A reproducible random stream identified by `(master_seed, stream_id)`.
///
/// Child streams are derived deterministically, so work split across threads
/// draws the same numbers regardless of scheduling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        RngStream { master_seed, stream_id }
    }

    pub fn child(&self, index: u64) -> RngStream {
        RngStream {
            master_seed: self.master_seed,
            stream_id: splitmix64(self.stream_id ^ splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D))),
        }
    }

    pub fn rng(&self) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// A density on the circle that can be sampled by uniform-proposal rejection.
pub trait CircularDensity {
    fn density(&self, theta: f64) -> f64;

    /// A constant bounding `density` from above everywhere.
    fn envelope(&self) -> f64;
}

impl CircularDensity for NntsModel {
    fn density(&self, theta: f64) -> f64 {
        NntsModel::density(self, theta)
    }

    fn envelope(&self) -> f64 {
        // |a(θ)| <= Σ|c_k|
        let s: f64 = self.coeffs().moduli().iter().sum();
        s * s / TAU
    }
}

impl CircularDensity for SymmetricNntsModel {
    fn density(&self, theta: f64) -> f64 {
        SymmetricNntsModel::density(self, theta)
    }

    fn envelope(&self) -> f64 {
        let s: f64 = self.rho().iter().map(|r| r.abs()).sum();
        s * s / TAU
    }
}

/// Rejection sampler; returns the draws and the number of proposals used.
pub fn rejection_sample<D: CircularDensity + ?Sized, R: Rng + ?Sized>(
    model: &D,
    n: usize,
    rng: &mut R,
) -> (Vec<f64>, u64) {
    let envelope = model.envelope();
    let ceiling = envelope * (1.0 + 1e-12);
    let mut out = Vec::with_capacity(n);
    let mut proposals = 0u64;
    while out.len() < n {
        let theta = wrap_angle(TAU * rng.random::<f64>());
        let u: f64 = rng.random();
        proposals += 1;
        let f = model.density(theta);
        assert!(
            f <= ceiling,
            "density {f} exceeds rejection envelope {envelope} at {theta}"
        );
        if u * envelope < f {
            out.push(theta);
        }
    }
    (out, proposals)
}

fn checked_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(NntsError::domain("sample size must be >= 1"));
    }
    Ok(())
}

/// Exact draws from a general NNTS model.
pub fn sample_nnts(model: &NntsModel, n: usize, stream: &RngStream) -> Result<AngleSample> {
    checked_n(n)?;
    let (draws, _) = rejection_sample(model, n, &mut stream.rng());
    AngleSample::new(draws)
}

/// Exact draws from a symmetric NNTS model.
pub fn sample_symmetric(model: &SymmetricNntsModel, n: usize, stream: &RngStream) -> Result<AngleSample> {
    checked_n(n)?;
    let (draws, _) = rejection_sample(model, n, &mut stream.rng());
    AngleSample::new(draws)
}

/// Draws by numerically inverting the analytic CDF (bisection to 1e-12).
///
/// Much slower than rejection; kept as an independent cross-check path.
pub fn sample_nnts_by_inversion(model: &NntsModel, n: usize, stream: &RngStream) -> Result<AngleSample> {
    checked_n(n)?;
    let mut rng = stream.rng();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random();
        let (mut lo, mut hi) = (0.0, TAU);
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if model.cdf(mid)? < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        out.push(0.5 * (lo + hi));
    }
    AngleSample::new(out)
}

/// Base density of a k-sine model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KSineBase {
    VonMises { kappa: f64 },
}

impl KSineBase {
    fn density(&self, x: f64) -> f64 {
        match *self {
            KSineBase::VonMises { kappa } => (kappa * x.cos() - ln_bessel_i0(kappa)).exp() / TAU,
        }
    }

    fn max_density(&self) -> f64 {
        match *self {
            KSineBase::VonMises { kappa } => (kappa - ln_bessel_i0(kappa)).exp() / TAU,
        }
    }
}

/// Sine-skewed perturbation `f₀(θ-μ)[1 + λ sin(k*(θ-μ))]` of a symmetric base.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KSineModel {
    pub mu: f64,
    pub lambda: f64,
    pub k_star: u32,
    pub base: KSineBase,
}

impl KSineModel {
    pub fn new(mu: f64, lambda: f64, k_star: u32, base: KSineBase) -> Result<Self> {
        if !mu.is_finite() {
            return Err(NntsError::invalid("k-sine mu must be finite"));
        }
        if !(lambda.abs() <= 1.0) {
            return Err(NntsError::invalid(format!(
                "k-sine |lambda| must be <= 1, got {lambda}"
            )));
        }
        if k_star == 0 {
            return Err(NntsError::invalid("k-sine k_star must be a positive integer"));
        }
        let KSineBase::VonMises { kappa } = base;
        if !(kappa >= 0.0) || !kappa.is_finite() {
            return Err(NntsError::invalid(format!("von Mises kappa must be >= 0, got {kappa}")));
        }
        Ok(KSineModel {
            mu,
            lambda,
            k_star,
            base,
        })
    }

    /// The von Mises base used throughout the simulation study.
    pub fn von_mises(mu: f64, lambda: f64, k_star: u32, kappa: f64) -> Result<Self> {
        Self::new(mu, lambda, k_star, KSineBase::VonMises { kappa })
    }

    /// Distribution function on `[0, 2π]` by composite Gauss–Legendre quadrature.
    pub fn cdf(&self, theta: f64) -> Result<f64> {
        if !(0.0..=TAU).contains(&theta) {
            return Err(NntsError::domain(format!("cdf argument {theta} outside [0, 2π]")));
        }
        let panels = 256;
        Ok(gauss_legendre(|t| ksine_density(self, t), 0.0, theta, panels).clamp(0.0, 1.0))
    }
}

/// k-sine density at `theta`.
pub fn ksine_density(model: &KSineModel, theta: f64) -> f64 {
    let x = theta - model.mu;
    model.base.density(x) * (1.0 + model.lambda * (model.k_star as f64 * x).sin())
}

impl CircularDensity for KSineModel {
    fn density(&self, theta: f64) -> f64 {
        ksine_density(self, theta)
    }

    fn envelope(&self) -> f64 {
        (1.0 + self.lambda.abs()) * self.base.max_density()
    }
}

/// Exact draws from a k-sine model.
pub fn sample_ksine(model: &KSineModel, n: usize, stream: &RngStream) -> Result<AngleSample> {
    checked_n(n)?;
    let (draws, _) = rejection_sample(model, n, &mut stream.rng());
    AngleSample::new(draws)
}

const GL8_NODES: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_WEIGHTS: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

pub(crate) fn gauss_legendre(f: impl Fn(f64) -> f64, lo: f64, hi: f64, panels: usize) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let h = (hi - lo) / panels as f64;
    (0..panels)
        .map(|p| {
            let mid = lo + (p as f64 + 0.5) * h;
            let half = 0.5 * h;
            GL8_NODES
                .iter()
                .zip(GL8_WEIGHTS)
                .map(|(&x, w)| w * (f(mid - half * x) + f(mid + half * x)))
                .sum::<f64>()
                * half
        })
        .sum()
}

/// Any of the circular models this crate can evaluate and sample.
#[derive(Debug, Clone, PartialEq)]
pub enum CircularModel {
    General(NntsModel),
    Symmetric(SymmetricNntsModel),
    KSine(KSineModel),
}

impl CircularModel {
    pub fn density(&self, theta: f64) -> f64 {
        match self {
            CircularModel::General(m) => m.density(theta),
            CircularModel::Symmetric(m) => m.density(theta),
            CircularModel::KSine(m) => ksine_density(m, theta),
        }
    }

    pub fn cdf(&self, theta: f64) -> Result<f64> {
        match self {
            CircularModel::General(m) => m.cdf(theta),
            CircularModel::Symmetric(m) => m.to_general().cdf(theta),
            CircularModel::KSine(m) => m.cdf(theta),
        }
    }

    pub fn sample(&self, n: usize, stream: &RngStream) -> Result<AngleSample> {
        match self {
            CircularModel::General(m) => sample_nnts(m, n, stream),
            CircularModel::Symmetric(m) => sample_symmetric(m, n, stream),
            CircularModel::KSine(m) => sample_ksine(m, n, stream),
        }
    }
}

/// A general model with coefficients uniform on the complex unit sphere.
pub fn random_general_model<R: Rng + ?Sized>(m: usize, rng: &mut R) -> NntsModel {
    let values: Vec<Complex64> = (0..=m)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    NntsModel::new(ComplexCoefficients::from_unnormalized(values).expect("gaussian vector is nonzero"))
}

/// A symmetric model with `ρ` uniform on the real unit sphere and a uniform axis.
pub fn random_symmetric_model<R: Rng + ?Sized>(m: usize, rng: &mut R) -> SymmetricNntsModel {
    let rho: Vec<f64> = (0..=m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let norm = rho.iter().map(|r| r * r).sum::<f64>().sqrt();
    let mu = TAU * rng.random::<f64>();
    SymmetricNntsModel::canonical(rho.into_iter().map(|r| r / norm).collect(), mu).expect("gaussian vector is nonzero")
}
