//! NNTS parameter types and density algebra.
//!
//! A general model of degree `M` is a unit vector `c` in `C^{M+1}` and has
//! density `|a(θ)|² / 2π` with `a(θ) = Σ_k c_k e^{ikθ}`. A reflective-symmetric
//! model replaces `c_k` by `ρ_k e^{-ikμ}` with real `ρ`.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{NntsError, Result};

/// Accepted deviation of `Σ|c_k|²` from one at construction time.
pub const NORM_TOL: f64 = 1e-9;

/// Moduli below this never anchor the global phase.
const GAUGE_EPS: f64 = 1e-14;

/// Densities below this count as zero in the log-likelihood.
const DENSITY_FLOOR: f64 = 1e-300;

/// Maps any finite angle into `[0, 2π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Maps any finite angle into `(-π, π]`.
pub fn wrap_signed(theta: f64) -> f64 {
    let r = wrap_angle(theta);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

fn renormalize<T: Copy>(values: &mut [T], norm_sq: f64, scale: impl Fn(T, f64) -> T) -> Result<()> {
    if !norm_sq.is_finite() || (norm_sq - 1.0).abs() > NORM_TOL {
        return Err(NntsError::invalid(format!(
            "coefficients must lie on the unit hypersphere (sum of squared moduli = 1), got {norm_sq}"
        )));
    }
    if (norm_sq - 1.0).abs() > 1e-15 {
        let inv = norm_sq.sqrt().recip();
        for v in values.iter_mut() {
            *v = scale(*v, inv);
        }
    }
    Ok(())
}

/// Unit-norm complex coefficients `c_0..c_M` with the global phase fixed so
/// that `c_0` is real and nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexCoefficients(Vec<Complex64>);

impl ComplexCoefficients {
    /// Validates the unit-norm constraint and fixes the gauge.
    pub fn new(values: Vec<Complex64>) -> Result<Self> {
        if values.is_empty() {
            return Err(NntsError::invalid("at least one coefficient (c_0) is required"));
        }
        if values.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(NntsError::invalid("coefficients must be finite"));
        }
        let mut values = values;
        let norm_sq: f64 = values.iter().map(|c| c.norm_sqr()).sum();
        renormalize(&mut values, norm_sq, |c, s| c * s)?;
        Ok(Self::gauge_fixed(values))
    }

    /// Normalizes an arbitrary nonzero vector onto the sphere and fixes the gauge.
    pub fn from_unnormalized(values: Vec<Complex64>) -> Result<Self> {
        let norm = values.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(NntsError::invalid("cannot normalize a zero or non-finite vector"));
        }
        Self::new(values.into_iter().map(|c| c / norm).collect())
    }

    pub(crate) fn gauge_fixed(mut values: Vec<Complex64>) -> Self {
        let anchor = if values[0].norm() >= GAUGE_EPS {
            Some(0)
        } else {
            values.iter().position(|c| c.norm() > GAUGE_EPS)
        };
        if let Some(i) = anchor {
            let a = values[i];
            if !(a.im == 0.0 && a.re >= 0.0) {
                let rot = Complex64::from_polar(1.0, -a.arg());
                for c in values.iter_mut() {
                    *c *= rot;
                }
                // exactly real, not just up to rounding
                values[i] = Complex64::new(a.norm(), 0.0);
            }
        }
        ComplexCoefficients(values)
    }

    pub fn degree(&self) -> usize {
        self.0.len() - 1
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn moduli(&self) -> Vec<f64> {
        self.0.iter().map(|c| c.norm()).collect()
    }

    /// Arguments `φ_k = Arg(c_k)`.
    pub fn arguments(&self) -> Vec<f64> {
        self.0.iter().map(|c| c.arg()).collect()
    }

    /// Hermitian inner product `Σ conj(self_k)·other_k`.
    pub fn inner(&self, other: &ComplexCoefficients) -> Complex64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a.conj() * b).sum()
    }

    /// The inner sum `a(θ) = Σ_k c_k e^{ikθ}`, evaluated by Horner's rule.
    pub fn inner_sum(&self, theta: f64) -> Complex64 {
        horner(&self.0, Complex64::from_polar(1.0, theta))
    }
}

pub(crate) fn horner(coeffs: &[Complex64], z: Complex64) -> Complex64 {
    coeffs
        .iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

pub(crate) fn horner_real(coeffs: &[f64], z: Complex64) -> Complex64 {
    coeffs
        .iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

/// General NNTS density of degree `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct NntsModel {
    coeffs: ComplexCoefficients,
}

impl NntsModel {
    pub fn new(coeffs: ComplexCoefficients) -> Self {
        NntsModel { coeffs }
    }

    pub fn from_complex(values: Vec<Complex64>) -> Result<Self> {
        ComplexCoefficients::new(values).map(Self::new)
    }

    /// The circular uniform density (`M = 0`).
    pub fn uniform() -> Self {
        NntsModel::new(ComplexCoefficients(vec![Complex64::new(1.0, 0.0)]))
    }

    pub fn m(&self) -> usize {
        self.coeffs.degree()
    }

    pub fn coeffs(&self) -> &ComplexCoefficients {
        &self.coeffs
    }

    /// Density per radian. Computed as a squared modulus, so never negative.
    pub fn density(&self, theta: f64) -> f64 {
        self.coeffs.inner_sum(theta).norm_sqr() / TAU
    }

    /// Distribution function on `[0, 2π]`, integrated term by term.
    pub fn cdf(&self, theta: f64) -> Result<f64> {
        if !(0.0..=TAU).contains(&theta) {
            return Err(NntsError::domain(format!("cdf argument {theta} outside [0, 2π]")));
        }
        let c = self.coeffs.as_slice();
        let mut acc = theta;
        // pairs (k, l) with k - l = d > 0 and their conjugate partners
        for d in 1..c.len() {
            let r: Complex64 = (0..c.len() - d).map(|l| c[l + d] * c[l].conj()).sum();
            let phase = Complex64::from_polar(1.0, d as f64 * theta) - 1.0;
            acc += 2.0 * (r * phase / Complex64::new(0.0, d as f64)).re;
        }
        Ok((acc / TAU).clamp(0.0, 1.0))
    }

    /// Trigonometric moment `E[e^{ipθ}] = Σ_k c_k conj(c_{k+p})`.
    pub fn trig_moment(&self, p: usize) -> Result<Complex64> {
        if p == 0 {
            return Err(NntsError::domain("trigonometric moment order must be >= 1"));
        }
        let c = self.coeffs.as_slice();
        if p > self.m() {
            return Ok(Complex64::new(0.0, 0.0));
        }
        Ok((0..=self.m() - p).map(|k| c[k] * c[k + p].conj()).sum())
    }

    /// Log-likelihood of a sample; `-inf` when the density vanishes at a point.
    pub fn log_likelihood(&self, data: &AngleSample) -> f64 {
        log_likelihood_with(data, |theta| self.density(theta))
    }

    /// Returns the canonical axis of symmetry when the density is reflective
    /// symmetric to within `tol` (max absolute density difference).
    pub fn reflective_axis(&self, tol: f64) -> Option<f64> {
        is_reflective_symmetric(self, tol)
    }
}

fn log_likelihood_with(data: &AngleSample, density: impl Fn(f64) -> f64) -> f64 {
    let mut ll = 0.0;
    for &theta in data.angles() {
        let f = density(theta);
        if !(f >= DENSITY_FLOOR) {
            return f64::NEG_INFINITY;
        }
        ll += f.ln();
    }
    ll
}

/// Reflective-symmetric NNTS density with real coefficients `ρ` and axis `μ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricNntsModel {
    rho: Vec<f64>,
    mu: f64,
}

impl SymmetricNntsModel {
    /// Validates `Σρ² = 1` and `μ ∈ [0, 2π)`, then canonicalizes the
    /// representation (see [`SymmetricNntsModel::canonical`]).
    pub fn new(rho: Vec<f64>, mu: f64) -> Result<Self> {
        if !(0.0..TAU).contains(&mu) {
            return Err(NntsError::invalid(format!("axis mu = {mu} outside [0, 2π)")));
        }
        Self::canonical(rho, mu)
    }

    /// Builds the canonical representative for any finite `μ`.
    ///
    /// `(ρ, μ)`, `(-ρ, μ)` and `((-1)^k ρ_k, μ + π)` describe the same density.
    /// The representative kept has a positive first nonzero `ρ_k` and, among
    /// the two axes, the smaller one in `[0, 2π)`.
    pub fn canonical(rho: Vec<f64>, mu: f64) -> Result<Self> {
        if rho.is_empty() {
            return Err(NntsError::invalid("at least one coefficient (rho_0) is required"));
        }
        if rho.iter().any(|r| !r.is_finite()) || !mu.is_finite() {
            return Err(NntsError::invalid("rho and mu must be finite"));
        }
        let mut rho = rho;
        let norm_sq: f64 = rho.iter().map(|r| r * r).sum();
        renormalize(&mut rho, norm_sq, |r, s| r * s)?;
        let mut mu = wrap_angle(mu);
        if rho.len() == 1 {
            // the uniform density has no axis; pin it for determinism
            mu = 0.0;
        } else if mu >= PI {
            mu = wrap_angle(mu - PI);
            for (k, r) in rho.iter_mut().enumerate() {
                if k % 2 == 1 {
                    *r = -*r;
                }
            }
        }
        fix_sign(&mut rho);
        Ok(SymmetricNntsModel { rho, mu })
    }

    pub fn uniform() -> Self {
        SymmetricNntsModel {
            rho: vec![1.0],
            mu: 0.0,
        }
    }

    pub fn m(&self) -> usize {
        self.rho.len() - 1
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// The induced general coefficients `c_{Sk} = ρ_k e^{-ikμ}`.
    pub fn to_general(&self) -> NntsModel {
        let values = self
            .rho
            .iter()
            .enumerate()
            .map(|(k, &r)| Complex64::from_polar(1.0, -(k as f64) * self.mu) * r)
            .collect();
        NntsModel::new(ComplexCoefficients::gauge_fixed(values))
    }

    pub fn density(&self, theta: f64) -> f64 {
        horner_real(&self.rho, Complex64::from_polar(1.0, theta - self.mu)).norm_sqr() / TAU
    }

    pub fn log_likelihood(&self, data: &AngleSample) -> f64 {
        log_likelihood_with(data, |theta| self.density(theta))
    }

    /// Coefficients in a frame that does not depend on which of the two
    /// equivalent axes `μ`, `μ + π` was chosen: the first nonzero odd-indexed
    /// entry is made nonnegative. The density with these coefficients and
    /// axis 0 is a rotation of this model.
    pub fn axis_free_rho(&self) -> Vec<f64> {
        let mut rho = self.rho.clone();
        let first_odd = rho.iter().skip(1).step_by(2).find(|r| r.abs() > GAUGE_EPS);
        if matches!(first_odd, Some(r) if *r < 0.0) {
            for (k, r) in rho.iter_mut().enumerate() {
                if k % 2 == 1 {
                    *r = -*r;
                }
            }
        }
        fix_sign(&mut rho);
        rho
    }
}

fn fix_sign(rho: &mut [f64]) {
    if let Some(first) = rho.iter().find(|r| r.abs() > 0.0) {
        if *first < 0.0 {
            for r in rho.iter_mut() {
                *r = -*r;
            }
        }
    }
}

/// Symmetric model with `ρ_k = |c_k|` and the given axis.
pub fn symmetrize_coeffs(coeffs: &ComplexCoefficients, mu: f64) -> Result<SymmetricNntsModel> {
    SymmetricNntsModel::canonical(coeffs.moduli(), mu)
}

const AXIS_GRID: usize = 4096;
const REFLECTION_GRID: usize = 1024;

/// Phase misfit `Σ_k Im(c_k e^{ikμ})²`; zero exactly when every `c_k e^{ikμ}`
/// is real, i.e. when the density is symmetric about `μ`.
fn phase_misfit(c: &[Complex64], mu: f64) -> f64 {
    c.iter()
        .enumerate()
        .map(|(k, ck)| (ck * Complex64::from_polar(1.0, k as f64 * mu)).im.powi(2))
        .sum()
}

pub(crate) fn golden_section_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

/// Maximum of `|f(θ) - f(2μ - θ)|` over a uniform grid.
pub fn reflection_error(density: impl Fn(f64) -> f64, mu: f64, grid: usize) -> f64 {
    (0..grid)
        .map(|i| {
            let theta = TAU * i as f64 / grid as f64;
            (density(theta) - density(wrap_angle(2.0 * mu - theta))).abs()
        })
        .fold(0.0, f64::max)
}

/// Axis of reflective symmetry, if any, in canonical form.
///
/// The axis is estimated by minimizing the weighted phase misfit on a grid
/// with golden-section refinement; the model counts as symmetric when the
/// reflection error of the density about that axis is below `tol`.
pub fn is_reflective_symmetric(model: &NntsModel, tol: f64) -> Option<f64> {
    let c = model.coeffs().as_slice();
    if model.m() == 0 {
        return Some(0.0);
    }
    let step = TAU / AXIS_GRID as f64;
    let (best_i, _) = (0..AXIS_GRID)
        .map(|i| (i, phase_misfit(c, i as f64 * step)))
        .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
    let centre = best_i as f64 * step;
    let mu = golden_section_min(|m| phase_misfit(c, m), centre - step, centre + step, 1e-13);
    let err = reflection_error(|t| model.density(t), mu, REFLECTION_GRID);
    if err >= tol {
        return None;
    }
    let rho: Vec<f64> = c
        .iter()
        .enumerate()
        .map(|(k, ck)| (ck * Complex64::from_polar(1.0, k as f64 * mu)).re)
        .collect();
    SymmetricNntsModel::canonical(rho, mu).ok().map(|s| s.mu())
}

/// Unit the angles were recorded in before conversion to radians.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AngleUnit {
    #[default]
    Radians,
    Degrees,
    Hours24,
}

impl AngleUnit {
    pub fn to_radians(self, x: f64) -> f64 {
        match self {
            AngleUnit::Radians => x,
            AngleUnit::Degrees => x * PI / 180.0,
            AngleUnit::Hours24 => x * TAU / 24.0,
        }
    }
}

/// Nonempty sample of angles reduced to `[0, 2π)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleSample {
    angles: Vec<f64>,
    source_unit: AngleUnit,
    source: Option<String>,
}

impl AngleSample {
    /// Builds a sample from angles already in radians.
    pub fn new(angles: Vec<f64>) -> Result<Self> {
        Self::from_unit(angles, AngleUnit::Radians)
    }

    /// Converts raw values in `unit` to radians and reduces them mod 2π.
    pub fn from_unit(values: Vec<f64>, unit: AngleUnit) -> Result<Self> {
        if values.is_empty() {
            return Err(NntsError::domain("angle sample must be nonempty"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(NntsError::domain(format!("angle #{i} is not finite")));
        }
        let angles = values.into_iter().map(|v| wrap_angle(unit.to_radians(v))).collect();
        Ok(AngleSample {
            angles,
            source_unit: unit,
            source: None,
        })
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = Some(source.into());
        self
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn n(&self) -> usize {
        self.angles.len()
    }

    pub fn source_unit(&self) -> AngleUnit {
        self.source_unit
    }

    pub fn source(&self) -> Option<&str> {
        self.source.as_deref()
    }

    /// The same sample rotated by `delta` radians.
    pub fn rotated(&self, delta: f64) -> AngleSample {
        AngleSample {
            angles: self.angles.iter().map(|t| wrap_angle(t + delta)).collect(),
            source_unit: self.source_unit,
            source: self.source.clone(),
        }
    }

    /// Sample trigonometric moment `(1/n) Σ e^{ipθ_j}`.
    pub fn trig_moment(&self, p: u32) -> Complex64 {
        let s: Complex64 = self
            .angles
            .iter()
            .map(|&t| Complex64::from_polar(1.0, p as f64 * t))
            .sum();
        s / self.n() as f64
    }
}
