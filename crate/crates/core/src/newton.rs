//! Riemannian Newton steps used to finish a fit once the fixed-point ascent
//! has brought it near a maximum.
//!
//! The objective is `F = (1/n) Σ_j ln|a_j|²` where each `a_j` is a complex
//! function of real parameters. The first `sphere` parameters live on a unit
//! sphere; any remaining ones (the symmetry axis) are unconstrained.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub(crate) struct Derivs {
    /// Log-likelihood (sum over observations, density constant included).
    pub loglik: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

/// Accumulates `F`, its gradient and Hessian from per-observation values of
/// `a`, `∂a` and the nonzero second derivatives `∂²a`.
struct Accumulator {
    n: usize,
    ln_sum: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
    finite: bool,
}

impl Accumulator {
    fn new(dim: usize) -> Self {
        Accumulator {
            n: 0,
            ln_sum: 0.0,
            grad: DVector::zeros(dim),
            hess: DMatrix::zeros(dim, dim),
            finite: true,
        }
    }

    fn add(&mut self, a: Complex64, da: &[Complex64], d2a: &[(usize, usize, Complex64)]) {
        self.n += 1;
        let m2 = a.norm_sqr();
        if !(m2 / TAU >= 1e-300) {
            self.finite = false;
            return;
        }
        self.ln_sum += m2.ln();
        let ac = a.conj();
        let re: Vec<f64> = da.iter().map(|d| (ac * d).re).collect();
        let dim = da.len();
        for r in 0..dim {
            self.grad[r] += re[r] / m2;
            for s in 0..=r {
                let h = (da[s].conj() * da[r]).re / m2 - 2.0 * re[r] * re[s] / (m2 * m2);
                self.hess[(r, s)] += h;
            }
        }
        for &(r, s, v) in d2a {
            let h = (ac * v).re / m2;
            self.hess[(r.max(s), r.min(s))] += h;
        }
    }

    fn finish(mut self) -> Option<Derivs> {
        if !self.finite {
            return None;
        }
        let scale = 2.0 / self.n as f64;
        self.grad *= scale;
        let dim = self.grad.len();
        for r in 0..dim {
            for s in 0..=r {
                let h = self.hess[(r, s)] * scale;
                self.hess[(r, s)] = h;
                self.hess[(s, r)] = h;
            }
        }
        Some(Derivs {
            loglik: self.ln_sum - self.n as f64 * TAU.ln(),
            grad: self.grad,
            hess: self.hess,
        })
    }
}

/// Derivatives for complex coefficients stored as `[Re c_0, Im c_0, Re c_1, …]`.
pub(crate) fn general_derivs(z: &[Complex64], c: &[Complex64]) -> Option<Derivs> {
    let dim = 2 * c.len();
    let mut acc = Accumulator::new(dim);
    let mut da = vec![Complex64::new(0.0, 0.0); dim];
    for &zj in z {
        let mut zk = Complex64::new(1.0, 0.0);
        let mut a = Complex64::new(0.0, 0.0);
        for (k, ck) in c.iter().enumerate() {
            a += ck * zk;
            da[2 * k] = zk;
            da[2 * k + 1] = Complex64::new(0.0, 1.0) * zk;
            zk *= zj;
        }
        acc.add(a, &da, &[]);
    }
    acc.finish()
}

/// Derivatives for `(ρ_0, …, ρ_M, μ)` with `a = Σ ρ_k e^{ik(θ-μ)}`.
pub(crate) fn symmetric_derivs(z: &[Complex64], rho: &[f64], mu: f64) -> Option<Derivs> {
    let dim = rho.len() + 1;
    let axis = rho.len();
    let rot = Complex64::from_polar(1.0, -mu);
    let mut acc = Accumulator::new(dim);
    let mut da = vec![Complex64::new(0.0, 0.0); dim];
    let mut d2a = Vec::with_capacity(dim);
    let minus_i = Complex64::new(0.0, -1.0);
    for &z0 in z {
        let w = z0 * rot;
        let mut wk = Complex64::new(1.0, 0.0);
        let mut a = Complex64::new(0.0, 0.0);
        let mut a_mu = Complex64::new(0.0, 0.0);
        let mut a_mumu = Complex64::new(0.0, 0.0);
        d2a.clear();
        for (k, &r) in rho.iter().enumerate() {
            let kf = k as f64;
            a += wk * r;
            a_mu += minus_i * kf * r * wk;
            a_mumu -= kf * kf * r * wk;
            da[k] = wk;
            if k > 0 {
                d2a.push((k, axis, minus_i * kf * wk));
            }
            wk *= w;
        }
        da[axis] = a_mu;
        d2a.push((axis, axis, a_mumu));
        acc.add(a, &da, &d2a);
    }
    acc.finish()
}

/// Norm of the tangent gradient in the units reported by the fitters: half
/// the real gradient on the sphere block, the plain derivative elsewhere.
pub(crate) fn tangent_norm(d: &Derivs, x: &[f64]) -> f64 {
    let g = tangent_gradient(d, x);
    let sphere: f64 = g.rows(0, x.len()).norm_squared() / 4.0;
    let free: f64 = g.rows(x.len(), g.len() - x.len()).norm_squared();
    (sphere + free).sqrt()
}

fn tangent_gradient(d: &Derivs, x: &[f64]) -> DVector<f64> {
    let k = x.len();
    let along: f64 = (0..k).map(|i| x[i] * d.grad[i]).sum();
    let mut g = d.grad.clone();
    for i in 0..k {
        g[i] -= along * x[i];
    }
    g
}

/// Newton direction on the sphere (first `x.len()` coordinates) times the
/// free block. `flat` lists unit tangent directions along which `F` is
/// constant; they are removed from the system. Returns `None` unless the
/// projected Hessian is negative definite.
pub(crate) fn newton_direction(d: &Derivs, x: &[f64], flat: &[Vec<f64>]) -> Option<DVector<f64>> {
    let k = x.len();
    let dim = d.grad.len();
    let along: f64 = (0..k).map(|i| x[i] * d.grad[i]).sum();
    let mut p = DMatrix::<f64>::identity(dim, dim);
    let mut q = DMatrix::<f64>::zeros(dim, dim);
    let mut removed: Vec<&[f64]> = vec![x];
    removed.extend(flat.iter().map(|v| v.as_slice()));
    for v in removed {
        for i in 0..k {
            for j in 0..k {
                p[(i, j)] -= v[i] * v[j];
                q[(i, j)] += v[i] * v[j];
            }
        }
    }
    let mut hess = d.hess.clone();
    for i in 0..k {
        hess[(i, i)] -= along;
    }
    let riemannian = &p * hess * &p;
    let system = q - riemannian;
    let g = &p * &d.grad;
    let chol = system.cholesky()?;
    Some(chol.solve(&g))
}
