//! Pointwise Randers norms.
//!
//! A Randers norm with Zermelo data `(h, w)` is the unique `F ≥ 0` with
//! `‖v − F(v) w‖_h = F(v)`. Squaring gives the quadratic
//!
//! ```text
//! F²(1 − h(w,w)) + 2F·h(v,w) − h(v,v) = 0
//! ```
//!
//! whose positive root is evaluated in closed form. Writing `λ = 1 − h(w,w)`
//! the norm splits as `F = α + β` with
//!
//! ```text
//! α(v) = √(vᵀ A v),   A = (λ h + (hw)(hw)ᵀ) / λ²,   β(v) = −(hw)ᵀ v / λ,
//! ```
//!
//! which gives closed forms for the fundamental tensor, the Cartan tensor and
//! the Legendre map. The [`finite_difference`] submodule evaluates the same
//! objects straight from their derivative definitions and is the reference
//! route the analytic formulas are checked against.

use nalgebra::{DMatrix, DVector};

use crate::error::{domain, invalid, Result};

/// Winds with `h(w,w) > 1 − WIND_MARGIN` are rejected.
pub const WIND_MARGIN: f64 = 1e-8;

/// Zermelo data at one point: an inner product `h` and a wind `w` with
/// `‖w‖_h < 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct RandersDatum {
    h: DMatrix<f64>,
    w: DVector<f64>,
    hw: DVector<f64>,
    lambda: f64,
    alpha_form: DMatrix<f64>,
}

impl RandersDatum {
    pub fn new(h: DMatrix<f64>, w: DVector<f64>) -> Result<Self> {
        let n = h.nrows();
        if n == 0 || h.ncols() != n {
            return invalid(format!("h must be a non-empty square matrix, got {}x{}", h.nrows(), h.ncols()));
        }
        if w.len() != n {
            return invalid(format!("wind has length {}, expected {n}", w.len()));
        }
        if h.iter().chain(w.iter()).any(|x| !x.is_finite()) {
            return invalid("non-finite entry in Zermelo data");
        }
        let scale = h.abs().max().max(1.0);
        if (&h - h.transpose()).abs().max() > 1e-12 * scale {
            return invalid("h is not symmetric");
        }
        if h.clone().cholesky().is_none() {
            return invalid("h is not positive definite");
        }
        let hw = &h * &w;
        let ww = w.dot(&hw);
        if ww >= 1.0 - WIND_MARGIN {
            return invalid(format!("wind too strong: h(w,w) = {ww} must stay below 1 - {WIND_MARGIN:e}"));
        }
        let lambda = 1.0 - ww;
        let alpha_form = (&h * lambda + &hw * hw.transpose()) / (lambda * lambda);
        Ok(Self { h, w, hw, lambda, alpha_form })
    }

    /// Riemannian datum (zero wind).
    pub fn riemannian(h: DMatrix<f64>) -> Result<Self> {
        let n = h.nrows();
        Self::new(h, DVector::zeros(n))
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn wind(&self) -> &DVector<f64> {
        &self.w
    }

    /// `h(w, w)`.
    pub fn wind_norm_sq(&self) -> f64 {
        1.0 - self.lambda
    }

    pub fn h_norm(&self, v: &DVector<f64>) -> f64 {
        v.dot(&(&self.h * v)).max(0.0).sqrt()
    }

    /// The Randers norm `F(v)`.
    pub fn norm(&self, v: &DVector<f64>) -> f64 {
        let vw = self.hw.dot(v);
        let vv = v.dot(&(&self.h * v)).max(0.0);
        if vv == 0.0 {
            return 0.0;
        }
        let disc = (vw * vw + self.lambda * vv).sqrt();
        // Pick the cancellation-free form of the positive root.
        if vw <= 0.0 {
            (disc - vw) / self.lambda
        } else {
            vv / (disc + vw)
        }
    }

    fn require_nonzero(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.dim() {
            return invalid(format!("vector has length {}, expected {}", v.len(), self.dim()));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return invalid("non-finite tangent vector");
        }
        if v.iter().all(|&x| x == 0.0) {
            return domain("tensor undefined at the zero vector");
        }
        Ok(())
    }

    /// Pieces of the `α + β` split at `v ≠ 0`: `(F, α, ∇α, ∇F, Hess F)`.
    fn split(&self, v: &DVector<f64>) -> Split {
        let av = &self.alpha_form * v;
        let alpha = v.dot(&av).max(0.0).sqrt();
        let ell = av / alpha;
        let grad = &ell - &self.hw / self.lambda;
        let hess = (&self.alpha_form - &ell * ell.transpose()) / alpha;
        let f = self.norm(v);
        Split { f, alpha, ell, grad, hess }
    }

    /// Fundamental tensor `g_v = ½ Hess(F²)(v)`.
    pub fn fundamental_tensor(&self, v: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.require_nonzero(v)?;
        let s = self.split(v);
        let mut g = &s.grad * s.grad.transpose() + &s.hess * s.f;
        // Symmetrize away rounding so downstream Cholesky sees an exact symmetric matrix.
        g = (&g + g.transpose()) * 0.5;
        Ok(g)
    }

    /// Cartan tensor `C_v(w₁,w₂,w₃) = ¼ ∂³F²`.
    pub fn cartan(&self, v: &DVector<f64>, w1: &DVector<f64>, w2: &DVector<f64>, w3: &DVector<f64>) -> Result<f64> {
        self.require_nonzero(v)?;
        let s = self.split(v);
        let h12 = w1.dot(&(&s.hess * w2));
        let h13 = w1.dot(&(&s.hess * w3));
        let h23 = w2.dot(&(&s.hess * w3));
        let (d1, d2, d3) = (s.grad.dot(w1), s.grad.dot(w2), s.grad.dot(w3));
        let (l1, l2, l3) = (s.ell.dot(w1), s.ell.dot(w2), s.ell.dot(w3));
        let third = -(h12 * l3 + h13 * l2 + h23 * l1) / s.alpha;
        Ok(0.5 * (h12 * d3 + h13 * d2 + h23 * d1) + 0.5 * s.f * third)
    }

    /// Legendre map `v ↦ g_v(v, ·)` as a covector.
    pub fn legendre(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.require_nonzero(v)?;
        let s = self.split(v);
        Ok(s.grad * s.f)
    }
}

struct Split {
    f: f64,
    alpha: f64,
    ell: DVector<f64>,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

/// Derivative-definition evaluations of the tensors by central differences of
/// `F²`. Step sizes follow the accuracy budget of the checks that use them.
pub mod finite_difference {
    use nalgebra::{DMatrix, DVector};

    use super::RandersDatum;
    use crate::error::{domain, Result};

    pub const SECOND_ORDER_STEP: f64 = 1e-4;
    pub const THIRD_ORDER_STEP: f64 = 1e-3;

    fn f2(d: &RandersDatum, v: &DVector<f64>) -> f64 {
        let f = d.norm(v);
        f * f
    }

    fn nonzero(v: &DVector<f64>) -> Result<()> {
        if v.iter().all(|&x| x == 0.0) {
            return domain("tensor undefined at the zero vector");
        }
        Ok(())
    }

    /// `½ ∂²/∂t∂s F²(v + t u + s w)` by a four-point central stencil.
    pub fn fundamental_form(d: &RandersDatum, v: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>, step: f64) -> Result<f64> {
        nonzero(v)?;
        let e = step;
        let pp = f2(d, &(v + u * e + w * e));
        let pm = f2(d, &(v + u * e - w * e));
        let mp = f2(d, &(v - u * e + w * e));
        let mm = f2(d, &(v - u * e - w * e));
        Ok(0.5 * (pp - pm - mp + mm) / (4.0 * e * e))
    }

    pub fn fundamental_tensor(d: &RandersDatum, v: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = d.dim();
        let mut g = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let ei = DVector::from_fn(n, |k, _| if k == i { 1.0 } else { 0.0 });
                let ej = DVector::from_fn(n, |k, _| if k == j { 1.0 } else { 0.0 });
                let val = fundamental_form(d, v, &ei, &ej, SECOND_ORDER_STEP)?;
                g[(i, j)] = val;
                g[(j, i)] = val;
            }
        }
        Ok(g)
    }

    fn mixed_third(d: &RandersDatum, v: &DVector<f64>, w1: &DVector<f64>, w2: &DVector<f64>, w3: &DVector<f64>, e: f64) -> f64 {
        let mut acc = 0.0;
        for s1 in [-1.0, 1.0] {
            for s2 in [-1.0, 1.0] {
                for s3 in [-1.0, 1.0] {
                    let p = v + w1 * (s1 * e) + w2 * (s2 * e) + w3 * (s3 * e);
                    acc += s1 * s2 * s3 * f2(d, &p);
                }
            }
        }
        acc / (8.0 * e * e * e)
    }

    /// `¼ ∂³F²` by an eight-point central stencil with one Richardson step
    /// (steps `2e` and `e`).
    pub fn cartan(d: &RandersDatum, v: &DVector<f64>, w1: &DVector<f64>, w2: &DVector<f64>, w3: &DVector<f64>) -> Result<f64> {
        nonzero(v)?;
        let e = THIRD_ORDER_STEP;
        let coarse = mixed_third(d, v, w1, w2, w3, 2.0 * e);
        let fine = mixed_third(d, v, w1, w2, w3, e);
        Ok(0.25 * (4.0 * fine - coarse) / 3.0)
    }

    /// `½ ∂/∂s F²(v + s u)` for each basis direction.
    pub fn legendre(d: &RandersDatum, v: &DVector<f64>) -> Result<DVector<f64>> {
        nonzero(v)?;
        let n = d.dim();
        let e = SECOND_ORDER_STEP;
        Ok(DVector::from_fn(n, |i, _| {
            let mut dv = DVector::zeros(n);
            dv[i] = e;
            0.5 * (f2(d, &(v + &dv)) - f2(d, &(v - &dv))) / (2.0 * e)
        }))
    }
}
