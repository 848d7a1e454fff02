//! Maximum-likelihood fits of general and symmetric NNTS models.
//!
//! Both fits run a damped fixed-point ascent on the unit hypersphere. With
//! `a(θ) = Σ c_k e^{ikθ}`, the score direction is
//! `g_k = (1/n) Σ_j e^{-ikθ_j} / conj(a(θ_j))`; on the sphere `c^H g = 1`,
//! so stationary points satisfy `g = c`. Each sweep proposes `g/|g|` and, if
//! that lowers the likelihood, backs off along the great circle toward it by
//! repeated halving. Accepted log-likelihoods never decrease.
//!
//! The symmetric fit alternates a profile search over the axis `μ` with the
//! real-sphere analogue of the same ascent for `ρ`.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{NntsError, Result};
use crate::model::{golden_section_min, wrap_angle, AngleSample, ComplexCoefficients, NntsModel, SymmetricNntsModel};
use crate::newton::{general_derivs, newton_direction, symmetric_derivs, tangent_norm, Derivs};
use crate::sampling::{random_general_model, RngStream};

const MAX_HALVINGS: usize = 30;
const MU_REFINE_TOL: f64 = 1e-8;
const NEWTON_STEPS: usize = 8;
/// Relative log-likelihood loss tolerated from a Newton step, a few ulps of
/// a sum over the sample.
const NEWTON_ROUNDING: f64 = 1e-12;

/// Controls for the likelihood ascent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitOptions {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub loglik_tol: f64,
    pub mu_grid_points: usize,
    pub n_restarts: usize,
    pub seed: u64,
    /// Worker-count hint for bootstrap and simulation loops. Never changes results.
    pub threads: Option<usize>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iters: 2000,
            grad_tol: 1e-8,
            loglik_tol: 1e-10,
            mu_grid_points: 512,
            n_restarts: 1,
            seed: 0,
            threads: crate::parallel::threads_from_env(),
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) || !(self.loglik_tol > 0.0) {
            return Err(NntsError::domain("tolerances must be > 0"));
        }
        if self.mu_grid_points < 8 {
            return Err(NntsError::domain("mu_grid_points must be >= 8"));
        }
        if self.max_iters == 0 || self.n_restarts == 0 {
            return Err(NntsError::domain("max_iters and n_restarts must be >= 1"));
        }
        Ok(())
    }
}

/// Outcome of one fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport<M> {
    pub model: M,
    pub n: usize,
    pub loglik: f64,
    pub n_params: usize,
    pub aic: f64,
    pub bic: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
    /// Accepted log-likelihood after every sweep, starting with the initial point.
    pub loglik_trace: Vec<f64>,
}

impl<M> FitReport<M> {
    fn assemble(model: M, n: usize, n_params: usize, ascent: Ascent) -> Self {
        let (aic, bic) = information_criteria(ascent.loglik, n_params, n);
        FitReport {
            model,
            n,
            loglik: ascent.loglik,
            n_params,
            aic,
            bic,
            iterations: ascent.iterations,
            grad_norm: ascent.grad_norm,
            converged: ascent.converged,
            loglik_trace: ascent.trace,
        }
    }

    pub fn map_model<N>(self, f: impl FnOnce(M) -> N) -> FitReport<N> {
        FitReport {
            model: f(self.model),
            n: self.n,
            loglik: self.loglik,
            n_params: self.n_params,
            aic: self.aic,
            bic: self.bic,
            iterations: self.iterations,
            grad_norm: self.grad_norm,
            converged: self.converged,
            loglik_trace: self.loglik_trace,
        }
    }
}

/// `(AIC, BIC)` from a log-likelihood.
pub fn information_criteria(loglik: f64, n_params: usize, n: usize) -> (f64, f64) {
    let k = n_params as f64;
    (-2.0 * loglik + 2.0 * k, -2.0 * loglik + (n as f64).ln() * k)
}

/// Free parameters of a general model: `2M`.
pub fn general_param_count(m: usize) -> usize {
    2 * m
}

/// Free parameters of a symmetric model: `M + 1` (axis included), none for `M = 0`.
pub fn symmetric_param_count(m: usize) -> usize {
    if m == 0 {
        0
    } else {
        m + 1
    }
}

#[derive(Debug, Clone)]
struct Ascent {
    loglik: f64,
    iterations: usize,
    grad_norm: f64,
    converged: bool,
    trace: Vec<f64>,
}

/// Precomputed unit phasors `e^{iθ_j}`.
struct Design {
    z: Vec<Complex64>,
}

impl Design {
    fn new(data: &AngleSample) -> Self {
        Design {
            z: data.angles().iter().map(|&t| Complex64::from_polar(1.0, t)).collect(),
        }
    }

    fn n(&self) -> f64 {
        self.z.len() as f64
    }
}

fn ln_density_constant(n: f64) -> f64 {
    n * TAU.ln()
}

/// Log-likelihood and `Σ_j z_j^k / a_j` for complex coefficients, with the
/// data rotated by `-shift`.
fn score_sums<C: Copy + Into<Complex64>>(design: &Design, coeffs: &[C], shift: f64, sums: &mut [Complex64]) -> f64 {
    let rot = Complex64::from_polar(1.0, -shift);
    sums.iter_mut().for_each(|s| *s = Complex64::new(0.0, 0.0));
    let mut ll = 0.0;
    for &z0 in &design.z {
        let z = z0 * rot;
        let a = coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c.into());
        let a2 = a.norm_sqr();
        if !(a2 / TAU >= 1e-300) {
            return f64::NEG_INFINITY;
        }
        ll += a2.ln();
        let w = a.conj() / a2;
        let mut zk = Complex64::new(1.0, 0.0);
        for s in sums.iter_mut() {
            *s += zk * w;
            zk *= z;
        }
    }
    ll - ln_density_constant(design.n())
}

fn loglik_only<C: Copy + Into<Complex64>>(design: &Design, coeffs: &[C], shift: f64) -> f64 {
    let rot = Complex64::from_polar(1.0, -shift);
    let mut ll = 0.0;
    for &z0 in &design.z {
        let z = z0 * rot;
        let a = coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c.into());
        let a2 = a.norm_sqr();
        if !(a2 / TAU >= 1e-300) {
            return f64::NEG_INFINITY;
        }
        ll += a2.ln();
    }
    ll - ln_density_constant(design.n())
}

/// A point on a real or complex unit sphere.
trait SpherePoint: Copy + Into<Complex64> {
    fn real_dot(a: &[Self], b: &[Self]) -> f64;
    fn scale(self, s: f64) -> Self;
    fn add(self, other: Self) -> Self;
    /// Score direction from `Σ z^k / a`.
    fn from_sum(s: Complex64, n: f64) -> Self;
    fn canonicalize(v: Vec<Self>) -> Vec<Self>;
}

impl SpherePoint for Complex64 {
    fn real_dot(a: &[Self], b: &[Self]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x.conj() * y).re).sum()
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
    fn add(self, other: Self) -> Self {
        self + other
    }
    fn from_sum(s: Complex64, n: f64) -> Self {
        s.conj() / n
    }
    fn canonicalize(v: Vec<Self>) -> Vec<Self> {
        ComplexCoefficients::gauge_fixed(v).as_slice().to_vec()
    }
}

impl SpherePoint for f64 {
    fn real_dot(a: &[Self], b: &[Self]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
    fn add(self, other: Self) -> Self {
        self + other
    }
    fn from_sum(s: Complex64, n: f64) -> Self {
        s.re / n
    }
    fn canonicalize(v: Vec<Self>) -> Vec<Self> {
        v
    }
}

fn normalized<T: SpherePoint>(v: &[T]) -> Option<Vec<T>> {
    let norm = T::real_dot(v, v).sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return None;
    }
    Some(v.iter().map(|x| x.scale(1.0 / norm)).collect())
}

/// Point at fraction `t` along the great circle from `x` to `y`.
fn geodesic<T: SpherePoint>(x: &[T], y: &[T], t: f64) -> Vec<T> {
    let cos_w = T::real_dot(x, y).clamp(-1.0, 1.0);
    let w = cos_w.acos();
    let (a, b) = if w < 1e-8 {
        (1.0 - t, t)
    } else {
        let s = w.sin();
        (((1.0 - t) * w).sin() / s, (t * w).sin() / s)
    };
    let raw: Vec<T> = x.iter().zip(y).map(|(&p, &q)| p.scale(a).add(q.scale(b))).collect();
    normalized(&raw).unwrap_or_else(|| x.to_vec())
}

/// Runs the damped fixed-point ascent from `start` with the data rotated by
/// `-shift`. Returns the final point.
fn ascend<T: SpherePoint>(design: &Design, start: Vec<T>, shift: f64, opts: &FitOptions) -> (Vec<T>, Ascent) {
    let n = design.n();
    let mut c = T::canonicalize(start);
    let mut sums = vec![Complex64::new(0.0, 0.0); c.len()];
    let mut ll = score_sums(design, &c, shift, &mut sums);
    let mut trace = vec![ll];
    let mut grad_norm = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    if !ll.is_finite() {
        return (
            c,
            Ascent {
                loglik: ll,
                iterations,
                grad_norm,
                converged,
                trace,
            },
        );
    }
    while iterations < opts.max_iters {
        let g: Vec<T> = sums.iter().map(|&s| T::from_sum(s, n)).collect();
        let along = T::real_dot(&c, &g);
        grad_norm = g
            .iter()
            .zip(&c)
            .map(|(&gk, &ck)| {
                let d: Complex64 = gk.into() - Into::<Complex64>::into(ck) * along;
                d.norm_sqr()
            })
            .sum::<f64>()
            .sqrt();
        if grad_norm < opts.grad_tol {
            converged = true;
            break;
        }
        let Some(target) = normalized(&g).map(T::canonicalize) else {
            break;
        };
        iterations += 1;
        let mut accepted = None;
        let cand_ll = loglik_only(design, &target, shift);
        if cand_ll >= ll {
            accepted = Some((target.clone(), cand_ll));
        } else {
            let mut t = 0.5;
            for _ in 0..MAX_HALVINGS {
                let p = T::canonicalize(geodesic(&c, &target, t));
                let p_ll = loglik_only(design, &p, shift);
                if p_ll >= ll {
                    accepted = Some((p, p_ll));
                    break;
                }
                t *= 0.5;
            }
        }
        let Some((next, _)) = accepted else {
            // no ascent along the great circle: numerically stationary
            break;
        };
        let prev = ll;
        c = next;
        ll = score_sums(design, &c, shift, &mut sums);
        debug_assert!(ll >= prev - 1e-9 * prev.abs().max(1.0));
        trace.push(ll);
        if (ll - prev).abs() / ll.abs().max(1.0) < opts.loglik_tol {
            converged = true;
            // refresh the gradient norm at the accepted point
            let g: Vec<T> = sums.iter().map(|&s| T::from_sum(s, n)).collect();
            let along = T::real_dot(&c, &g);
            grad_norm = g
                .iter()
                .zip(&c)
                .map(|(&gk, &ck)| (gk.into() - Into::<Complex64>::into(ck) * along).norm_sqr())
                .sum::<f64>()
                .sqrt();
            break;
        }
    }
    (
        c,
        Ascent {
            loglik: ll,
            iterations,
            grad_norm,
            converged,
            trace,
        },
    )
}

/// Shared Newton loop. `step` maps the current point and its derivatives to
/// a candidate with its derivatives and sphere coordinates. A candidate is
/// kept when it lowers the tangent gradient and loses no more than rounding
/// in log-likelihood.
fn newton_polish<P: Clone>(
    point: P,
    coords: impl Fn(&P) -> Vec<f64>,
    derivs: impl Fn(&P) -> Option<Derivs>,
    step: impl Fn(&P, &Derivs) -> Option<P>,
    ascent: &mut Ascent,
    opts: &FitOptions,
) -> P {
    let Some(mut d) = derivs(&point) else {
        return point;
    };
    let mut point = point;
    let mut norm = tangent_norm(&d, &coords(&point));
    let mut moved = false;
    for _ in 0..NEWTON_STEPS {
        if norm < opts.grad_tol || ascent.iterations >= opts.max_iters {
            break;
        }
        let Some(cand) = step(&point, &d) else {
            break;
        };
        let Some(cd) = derivs(&cand) else {
            break;
        };
        let cn = tangent_norm(&cd, &coords(&cand));
        if !(cn < norm) || cd.loglik < d.loglik - NEWTON_ROUNDING * d.loglik.abs().max(1.0) {
            break;
        }
        point = cand;
        d = cd;
        norm = cn;
        moved = true;
        ascent.iterations += 1;
        ascent.trace.push(d.loglik);
    }
    if moved {
        ascent.loglik = d.loglik;
    }
    ascent.grad_norm = norm;
    ascent.converged |= norm < opts.grad_tol;
    point
}

fn polish_general(design: &Design, c: Vec<Complex64>, ascent: &mut Ascent, opts: &FitOptions) -> Vec<Complex64> {
    let coords = |c: &Vec<Complex64>| c.iter().flat_map(|z| [z.re, z.im]).collect::<Vec<f64>>();
    newton_polish(
        c,
        coords,
        |c| general_derivs(&design.z, c),
        |c, d| {
            // a global phase change leaves the likelihood unchanged
            let phase: Vec<f64> = c.iter().flat_map(|z| [-z.im, z.re]).collect();
            let dir = newton_direction(d, &coords(c), &[phase])?;
            let moved: Vec<Complex64> = c
                .iter()
                .enumerate()
                .map(|(k, z)| z + Complex64::new(dir[2 * k], dir[2 * k + 1]))
                .collect();
            normalized(&moved).map(Complex64::canonicalize)
        },
        ascent,
        opts,
    )
}

fn polish_symmetric(
    design: &Design,
    rho: Vec<f64>,
    mu: f64,
    ascent: &mut Ascent,
    opts: &FitOptions,
) -> (Vec<f64>, f64) {
    newton_polish(
        (rho, mu),
        |p: &(Vec<f64>, f64)| p.0.clone(),
        |p| symmetric_derivs(&design.z, &p.0, p.1),
        |p, d| {
            let dir = newton_direction(d, &p.0, &[])?;
            let k = p.0.len();
            let moved: Vec<f64> = p.0.iter().enumerate().map(|(i, r)| r + dir[i]).collect();
            Some((normalized(&moved)?, p.1 + dir[k]))
        },
        ascent,
        opts,
    )
}

/// Rotation-equivariant start built from Fejér-weighted conjugate sample
/// moments, so a rotated sample starts from the correspondingly rotated point.
fn default_start(data: &AngleSample, m: usize) -> Vec<Complex64> {
    let mut v: Vec<Complex64> = (0..=m)
        .map(|k| data.trig_moment(k as u32).conj() * (1.0 - k as f64 / (m + 1) as f64))
        .collect();
    v[0] = Complex64::new(1.0, 0.0);
    normalized(&v).expect("nonzero start")
}

/// Fits a general NNTS model of degree `m`.
pub fn fit_general(data: &AngleSample, m: usize, opts: &FitOptions) -> Result<FitReport<NntsModel>> {
    fit_general_with_starts(data, m, opts, &[])
}

/// Like [`fit_general`] with extra starting points tried after the default
/// ones (for warm starts from nested or constrained fits).
pub fn fit_general_with_starts(
    data: &AngleSample,
    m: usize,
    opts: &FitOptions,
    extra_starts: &[NntsModel],
) -> Result<FitReport<NntsModel>> {
    opts.validate()?;
    let design = Design::new(data);
    let n = data.n();
    if m == 0 {
        let model = NntsModel::uniform();
        let ll = model.log_likelihood(data);
        let ascent = Ascent {
            loglik: ll,
            iterations: 0,
            grad_norm: 0.0,
            converged: true,
            trace: vec![ll],
        };
        return Ok(FitReport::assemble(model, n, 0, ascent));
    }
    let mut starts = vec![default_start(data, m)];
    for r in 1..opts.n_restarts {
        let mut rng = RngStream::new(opts.seed, r as u64).rng();
        starts.push(random_general_model(m, &mut rng).coeffs().as_slice().to_vec());
    }
    for s in extra_starts {
        if s.m() != m {
            return Err(NntsError::domain(format!(
                "warm start of degree {} given for a degree-{m} fit",
                s.m()
            )));
        }
        starts.push(s.coeffs().as_slice().to_vec());
    }
    let mut best: Option<(Vec<Complex64>, Ascent)> = None;
    for start in starts {
        let (c, ascent) = ascend(&design, start, 0.0, opts);
        // strict improvement keeps the earliest start on ties
        if best.as_ref().is_none_or(|(_, b)| ascent.loglik > b.loglik) {
            best = Some((c, ascent));
        }
    }
    let (c, mut ascent) = best.expect("at least one start");
    let c = polish_general(&design, c, &mut ascent, opts);
    let model = NntsModel::new(ComplexCoefficients::new(c)?);
    Ok(FitReport::assemble(model, n, general_param_count(m), ascent))
}

/// Log-likelihood of `ρ` at axis `μ` and its first two derivatives in `μ`.
fn mu_derivatives(design: &Design, rho: &[f64], mu: f64) -> (f64, f64, f64) {
    let rot = Complex64::from_polar(1.0, -mu);
    let (mut l, mut d1, mut d2) = (0.0, 0.0, 0.0);
    for &z0 in &design.z {
        let z = z0 * rot;
        let (mut a, mut a1, mut a2) = (
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
        );
        let mut zk = Complex64::new(1.0, 0.0);
        for (k, &r) in rho.iter().enumerate() {
            let k = k as f64;
            let term = zk * r;
            a += term;
            a1 += term * Complex64::new(0.0, k);
            a2 -= term * (k * k);
            zk *= z;
        }
        let m2 = a.norm_sqr();
        if !(m2 / TAU >= 1e-300) {
            return (f64::NEG_INFINITY, 0.0, 0.0);
        }
        l += m2.ln();
        let re1 = (a1 * a.conj()).re;
        // d/dμ = -d/dψ with ψ = θ - μ
        d1 -= 2.0 * re1 / m2;
        d2 += 2.0 * ((a2 * a.conj()).re + a1.norm_sqr()) / m2 - 4.0 * re1 * re1 / (m2 * m2);
    }
    (l - ln_density_constant(design.n()), d1, d2)
}

/// Best axis for fixed `ρ`: grid search, golden-section refinement on the
/// bracketing cell, then safeguarded Newton polishing. Never returns an axis
/// worse than `current`.
fn profile_mu(design: &Design, rho: &[f64], current: f64, grid: usize) -> (f64, f64) {
    let step = TAU / grid as f64;
    let (best_i, _) = (0..grid).map(|i| (i, loglik_only(design, rho, i as f64 * step))).fold(
        (0, f64::NEG_INFINITY),
        |acc, (i, v)| if v > acc.1 { (i, v) } else { acc },
    );
    let centre = best_i as f64 * step;
    let mu = golden_section_min(
        |m| -loglik_only(design, rho, m),
        centre - step,
        centre + step,
        MU_REFINE_TOL,
    );
    let (mu, ll) = newton_mu(design, rho, mu);
    let current_ll = loglik_only(design, rho, current);
    if current_ll >= ll {
        (wrap_angle(current), current_ll)
    } else {
        (wrap_angle(mu), ll)
    }
}

/// Safeguarded Newton steps on the axis from `mu`; steps that do not raise
/// the log-likelihood are halved, and the walk stops when none helps.
fn newton_mu(design: &Design, rho: &[f64], mut mu: f64) -> (f64, f64) {
    let mut ll = loglik_only(design, rho, mu);
    for _ in 0..20 {
        let (_, d1, d2) = mu_derivatives(design, rho, mu);
        if d1 == 0.0 {
            break;
        }
        // fall back to a short gradient step away from concave regions
        let mut delta = if d2 < 0.0 { -d1 / d2 } else { d1.signum() * 1e-3 };
        let mut moved = false;
        for _ in 0..20 {
            let cand = mu + delta;
            let cand_ll = loglik_only(design, rho, cand);
            if cand_ll > ll {
                mu = cand;
                ll = cand_ll;
                moved = true;
                break;
            }
            delta *= 0.5;
        }
        if !moved || delta.abs() < 1e-14 {
            break;
        }
    }
    (wrap_angle(mu), ll)
}

const MAX_SYMMETRIC_STARTS: usize = 4;
const TRIAL_SWEEPS: usize = 3;
const FINISHED_STARTS: usize = 2;

/// Starting points for the symmetric fit: real projections of the general
/// estimate onto the best-scoring axes, plus the moduli with no axis yet
/// (flagged `true`, needing a global axis search).
fn symmetric_starts(design: &Design, general: &NntsModel, grid: usize) -> Vec<(Vec<f64>, f64, bool)> {
    let c = general.coeffs().as_slice();
    let project = |mu: f64| -> Option<Vec<f64>> {
        let rho: Vec<f64> = c
            .iter()
            .enumerate()
            .map(|(k, ck)| (ck * Complex64::from_polar(1.0, k as f64 * mu)).re)
            .collect();
        normalized(&rho)
    };
    // axes mod π suffice: μ + π is the same model with odd ρ negated
    let step = std::f64::consts::PI / grid as f64;
    let scores: Vec<f64> = (0..grid)
        .map(|i| project(i as f64 * step).map_or(f64::NEG_INFINITY, |r| loglik_only(design, &r, i as f64 * step)))
        .collect();
    let mut peaks: Vec<usize> = (0..grid)
        .filter(|&i| {
            let prev = scores[(i + grid - 1) % grid];
            let next = scores[(i + 1) % grid];
            scores[i].is_finite() && scores[i] >= prev && scores[i] >= next
        })
        .collect();
    peaks.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut starts: Vec<(Vec<f64>, f64, bool)> = peaks
        .into_iter()
        .take(MAX_SYMMETRIC_STARTS)
        .filter_map(|i| project(i as f64 * step).map(|r| (r, i as f64 * step, false)))
        .collect();
    starts.push((general.coeffs().moduli(), 0.0, true));
    starts
}

/// Alternates axis profiling and `ρ` ascent until the joint gradient or the
/// log-likelihood change falls below tolerance.
fn alternate(
    design: &Design,
    mut rho: Vec<f64>,
    mut mu: f64,
    global_axis: bool,
    opts: &FitOptions,
) -> (Vec<f64>, f64, Ascent) {
    let mut ll = f64::NEG_INFINITY;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut grad_norm = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iters {
        iterations += 1;
        // at most one global axis search; later sweeps only polish
        mu = if global_axis && iterations == 1 {
            profile_mu(design, &rho, mu, opts.mu_grid_points).0
        } else {
            newton_mu(design, &rho, mu).0
        };
        let (new_rho, inner) = ascend(design, rho, mu, opts);
        rho = new_rho;
        let prev = ll;
        ll = inner.loglik;
        if trace.is_empty() {
            trace.push(inner.trace[0]);
        }
        trace.push(ll);
        let (_, d_mu, _) = mu_derivatives(design, &rho, mu);
        let mu_grad = d_mu / design.n();
        grad_norm = (inner.grad_norm.powi(2) + mu_grad.powi(2)).sqrt();
        if !ll.is_finite() {
            break;
        }
        if grad_norm < opts.grad_tol || (prev.is_finite() && (ll - prev).abs() / ll.abs().max(1.0) < opts.loglik_tol) {
            converged = true;
            break;
        }
    }
    let ascent = Ascent {
        loglik: ll,
        iterations,
        grad_norm,
        converged,
        trace,
    };
    (rho, mu, ascent)
}

/// Fits a reflective-symmetric model of degree `m`, starting from a fresh
/// general fit.
pub fn fit_symmetric(data: &AngleSample, m: usize, opts: &FitOptions) -> Result<FitReport<SymmetricNntsModel>> {
    let general = fit_general(data, m, opts)?;
    fit_symmetric_from(data, &general.model, opts)
}

/// Fits a reflective-symmetric model initialized from the moduli of a
/// general fit of the same degree.
pub fn fit_symmetric_from(
    data: &AngleSample,
    general: &NntsModel,
    opts: &FitOptions,
) -> Result<FitReport<SymmetricNntsModel>> {
    opts.validate()?;
    let n = data.n();
    let m = general.m();
    if m == 0 {
        let model = SymmetricNntsModel::uniform();
        let ll = model.log_likelihood(data);
        let ascent = Ascent {
            loglik: ll,
            iterations: 0,
            grad_norm: 0.0,
            converged: true,
            trace: vec![ll],
        };
        return Ok(FitReport::assemble(model, n, 0, ascent));
    }
    let design = Design::new(data);
    // a short trial from every start, then only the leaders run to convergence
    let trial = FitOptions {
        max_iters: TRIAL_SWEEPS,
        ..opts.clone()
    };
    let mut trials: Vec<(Vec<f64>, f64, Ascent)> = symmetric_starts(&design, general, opts.mu_grid_points)
        .into_iter()
        .map(|(rho, mu, global_axis)| alternate(&design, rho, mu, global_axis, &trial))
        .collect();
    // stable sort keeps the earlier start on ties
    trials.sort_by(|a, b| b.2.loglik.total_cmp(&a.2.loglik));
    let mut best: Option<(Vec<f64>, f64, Ascent)> = None;
    for (rho, mu, head) in trials.into_iter().take(FINISHED_STARTS) {
        let cand = if head.converged {
            (rho, mu, head)
        } else {
            let (rho, mu, mut tail) = alternate(&design, rho, mu, false, opts);
            let mut trace = head.trace;
            trace.extend_from_slice(&tail.trace[1..]);
            tail.trace = trace;
            tail.iterations += head.iterations;
            (rho, mu, tail)
        };
        if best.as_ref().is_none_or(|b| cand.2.loglik > b.2.loglik) {
            best = Some(cand);
        }
    }
    let (rho, mu, mut ascent) = best.expect("at least one start");
    let (rho, mu) = polish_symmetric(&design, rho, mu, &mut ascent, opts);
    let model = SymmetricNntsModel::canonical(rho, mu)?;
    Ok(FitReport::assemble(model, n, symmetric_param_count(m), ascent))
}

/// General and symmetric fits of the same degree on the same data.
#[derive(Debug, Clone)]
pub struct FitPair {
    pub general: FitReport<NntsModel>,
    pub symmetric: FitReport<SymmetricNntsModel>,
}

/// Fits both models at degree `m`. When the symmetric optimum beats the
/// general one, the general fit is restarted from the symmetric estimate,
/// which keeps the nested likelihoods ordered.
pub fn fit_pair(data: &AngleSample, m: usize, opts: &FitOptions, general_starts: &[NntsModel]) -> Result<FitPair> {
    let mut general = fit_general_with_starts(data, m, opts, general_starts)?;
    let symmetric = fit_symmetric_from(data, &general.model, opts)?;
    if symmetric.loglik > general.loglik {
        let warm = fit_general_with_starts(data, m, &single_start(opts), &[symmetric.model.to_general()])?;
        if warm.loglik > general.loglik {
            general = warm;
        }
    }
    Ok(FitPair { general, symmetric })
}

fn single_start(opts: &FitOptions) -> FitOptions {
    FitOptions {
        n_restarts: 1,
        ..opts.clone()
    }
}

/// Which family a scan fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    General,
    Symmetric,
}

/// A fitted model of either family.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel {
    General(NntsModel),
    Symmetric(SymmetricNntsModel),
}

#[derive(Debug)]
pub struct ScanEntry {
    pub m: usize,
    pub report: Result<FitReport<FittedModel>>,
}

#[derive(Debug)]
pub struct ModelScan {
    pub family: ModelFamily,
    pub entries: Vec<ScanEntry>,
    /// Index into `entries` of the BIC-minimizing successful fit.
    pub best_bic: Option<usize>,
    pub best_aic: Option<usize>,
}

impl ModelScan {
    pub fn best_by_bic(&self) -> Option<&FitReport<FittedModel>> {
        self.best_bic.and_then(|i| self.entries[i].report.as_ref().ok())
    }
}

pub(crate) fn pad_to(model: &NntsModel, m: usize) -> NntsModel {
    let mut v = model.coeffs().as_slice().to_vec();
    v.resize(m + 1, Complex64::new(0.0, 0.0));
    NntsModel::new(ComplexCoefficients::new(v).expect("padding keeps the norm"))
}

fn argmin_by(entries: &[ScanEntry], key: impl Fn(&FitReport<FittedModel>) -> f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, e) in entries.iter().enumerate() {
        if let Ok(r) = &e.report {
            let v = key(r);
            if v.is_finite() && best.is_none_or(|(_, b)| v < b) {
                best = Some((i, v));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// Fits every degree in `0..=m_max` and marks the AIC/BIC minimizers.
///
/// General fits at degree `M` are also started from the degree `M-1`
/// solution, so the general log-likelihood is nondecreasing in `M`.
pub fn scan_models(data: &AngleSample, m_max: usize, family: ModelFamily, opts: &FitOptions) -> ModelScan {
    let mut entries = Vec::with_capacity(m_max + 1);
    let mut previous: Option<NntsModel> = None;
    for m in 0..=m_max {
        let warm: Vec<NntsModel> = previous.iter().map(|p| pad_to(p, m)).collect();
        let report = match family {
            ModelFamily::General => fit_general_with_starts(data, m, opts, &warm).map(|r| {
                previous = Some(r.model.clone());
                r.map_model(FittedModel::General)
            }),
            ModelFamily::Symmetric => fit_pair(data, m, opts, &warm).map(|pair| {
                previous = Some(pair.general.model.clone());
                pair.symmetric.map_model(FittedModel::Symmetric)
            }),
        };
        entries.push(ScanEntry { m, report });
    }
    let best_bic = argmin_by(&entries, |r| r.bic);
    let best_aic = argmin_by(&entries, |r| r.aic);
    ModelScan {
        family,
        entries,
        best_bic,
        best_aic,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{random_symmetric_model, sample_nnts, sample_symmetric};
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn spread_sample(n: usize) -> AngleSample {
        AngleSample::new((0..n).map(|i| (i as f64 * 2.399963) % TAU).collect()).unwrap()
    }

    #[test]
    fn uniform_fit_reproduces_information_criteria() {
        let r = fit_general(&spread_sample(100), 0, &FitOptions::default()).unwrap();
        assert_eq!(r.n_params, 0);
        assert!((r.loglik - (-183.787_706_640_934_5)).abs() < 1e-9);
        assert!((r.aic - 367.58).abs() < 0.005 && (r.bic - 367.58).abs() < 0.005);
    }

    #[test]
    fn parameter_counts() {
        assert_eq!(general_param_count(4), 8);
        assert_eq!(symmetric_param_count(4), 5);
        assert_eq!(symmetric_param_count(1), 2);
        assert_eq!(symmetric_param_count(0), 0);
    }

    #[test]
    fn ascent_is_monotone_and_stationary() {
        let truth = NntsModel::new(
            ComplexCoefficients::from_unnormalized(vec![
                Complex64::new(0.6, 0.0),
                Complex64::new(0.3, 0.4),
                Complex64::new(-0.2, 0.5),
                Complex64::new(0.1, -0.3),
            ])
            .unwrap(),
        );
        let data = sample_nnts(&truth, 400, &RngStream::new(3, 0)).unwrap();
        let r = fit_general(&data, 3, &FitOptions::default()).unwrap();
        assert!(r.loglik_trace.windows(2).all(|w| w[1] >= w[0]));
        assert!(r.converged, "{r:?}");
        assert!(r.loglik >= truth.log_likelihood(&data));
    }

    #[test]
    fn cardioid_fit_tracks_sample_direction() {
        let truth = NntsModel::from_complex(vec![
            Complex64::new(FRAC_1_SQRT_2, 0.0),
            Complex64::from_polar(FRAC_1_SQRT_2, -1.0),
        ])
        .unwrap();
        let data = sample_nnts(&truth, 2000, &RngStream::new(4, 0)).unwrap();
        let opts = FitOptions::default();
        let r1 = fit_general(&data, 1, &opts).unwrap();
        let r0 = fit_general(&data, 0, &opts).unwrap();
        assert!(r1.loglik >= r0.loglik);
        let fitted = r1.model.trig_moment(1).unwrap().arg();
        let sample = data.trig_moment(1).arg();
        assert!((fitted - sample).abs() < 0.05, "{fitted} vs {sample}");
    }

    #[test]
    fn symmetric_equals_general_at_degree_one() {
        let data = sample_nnts(
            &NntsModel::from_complex(vec![Complex64::new(0.8, 0.0), Complex64::new(0.36, -0.48)]).unwrap(),
            300,
            &RngStream::new(5, 0),
        )
        .unwrap();
        let pair = fit_pair(&data, 1, &FitOptions::default(), &[]).unwrap();
        assert!((pair.general.loglik - pair.symmetric.loglik).abs() < 1e-7);
    }

    #[test]
    fn reflected_sample_recovers_axis() {
        let truth = random_symmetric_model(2, &mut RngStream::new(6, 0).rng());
        let half = sample_nnts(&truth.to_general(), 1000, &RngStream::new(6, 1)).unwrap();
        let axis = 2.0;
        let mut angles = half.angles().to_vec();
        angles.extend(half.angles().iter().map(|t| 2.0 * axis - t));
        let data = AngleSample::new(angles).unwrap();
        let r = fit_symmetric(&data, 2, &FitOptions::default()).unwrap();
        let d = (r.model.mu() - axis).rem_euclid(PI);
        assert!(d.min(PI - d) < 0.05, "mu = {}", r.model.mu());
    }

    #[test]
    fn symmetric_fit_loglik_sequence_is_monotone() {
        let truth = random_symmetric_model(3, &mut RngStream::new(7, 0).rng());
        let data = sample_symmetric(&truth, 300, &RngStream::new(7, 1)).unwrap();
        let r = fit_symmetric(&data, 3, &FitOptions::default()).unwrap();
        assert!(r.loglik_trace.windows(2).all(|w| w[1] >= w[0] - 1e-9));
        assert!(r.loglik >= truth.log_likelihood(&data) - 1e-6);
    }

    #[test]
    fn scan_of_degree_zero_is_uniform() {
        let scan = scan_models(&spread_sample(50), 0, ModelFamily::Symmetric, &FitOptions::default());
        assert_eq!(scan.entries.len(), 1);
        assert_eq!(scan.best_bic, Some(0));
    }

    #[test]
    fn general_scan_is_nested() {
        let truth = random_general_model(3, &mut RngStream::new(9, 0).rng());
        let data = sample_nnts(&truth, 250, &RngStream::new(9, 1)).unwrap();
        let scan = scan_models(&data, 5, ModelFamily::General, &FitOptions::default());
        let lls: Vec<f64> = scan.entries.iter().map(|e| e.report.as_ref().unwrap().loglik).collect();
        assert!(lls.windows(2).all(|w| w[1] >= w[0] - 1e-6), "{lls:?}");
    }

    #[test]
    fn rejects_bad_options() {
        let opts = FitOptions {
            mu_grid_points: 4,
            ..FitOptions::default()
        };
        assert!(fit_general(&spread_sample(10), 1, &opts).is_err());
    }

    #[test]
    fn identical_angles_still_report() {
        let data = AngleSample::new(vec![1.0; 20]).unwrap();
        let r = fit_general(&data, 2, &FitOptions::default()).unwrap();
        assert!(r.loglik.is_finite());
    }
}
