//! Jacobi triples and their fields.
//!
//! A Jacobi triple is stored in a parallel orthonormal frame, where the
//! covariant derivative is `d/dt` and the curvature is a symmetric matrix
//! function `R(t)`. Jacobi fields solve `J″ + R J = 0`, carry the constant
//! symplectic form `ω(J₁, J₂) = ⟨J₁′, J₂⟩ − ⟨J₁, J₂′⟩`, and finite families of
//! them are handled as [`Subspace`]s of initial conditions.
//!
//! For an isotropic subspace `I` the vertical bundle `V` is spanned by the
//! values of `I` and, at instants where some field of `I` vanishes, by the
//! derivatives of the vanishing fields. With `P` the orthogonal projector
//! onto `V`, the mixed-component tensor is `𝔸 = (I − 2P) P′`, and the
//! transverse triple lives on `H = V^⊥` with curvature `R_H − 3𝔸²|_H` written
//! in a `D_H`-parallel frame.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{invalid, GeomError, Result};
use crate::linalg::{
    asymmetry, columns_to_matrix, min_eigenvalue, min_singular_value, null_space, numerical_rank, orthonormalize,
    symplectic_pairing,
};

/// Default RK4 step for Jacobi fields.
pub const DEFAULT_FIELD_STEP: f64 = 1e-3;
/// Default scan step for singular-instant searches.
pub const DEFAULT_SCAN_STEP: f64 = 1e-2;
/// Default window `[0, 10π]` standing in for the real line.
pub const DEFAULT_WINDOW: (f64, f64) = (0.0, 10.0 * PI);
/// Largest admissible `‖R − Rᵀ‖` of a triple.
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;
/// Relative rank threshold for subspace bases.
pub const BASIS_RANK_TOLERANCE: f64 = 1e-10;
/// Width to which singular instants are refined.
pub const INSTANT_RESOLUTION: f64 = 1e-9;
/// Finite-difference step for projector derivatives near singular instants.
pub const PROJECTOR_STEP: f64 = 1e-5;
/// Largest admissible condition number of the value matrix in Riccati operators.
pub const MAX_RICCATI_CONDITION: f64 = 1e8;
/// Smallest admissible eigenvalue of `R` for the decomposition of a Lagrangian.
pub const PSD_TOLERANCE: f64 = 1e-10;
/// Largest jump of the vertical projector between `t ± PROJECTOR_STEP`.
pub const MAX_PROJECTOR_JUMP: f64 = 0.5;

/// Relative size below which a singular value of the value matrix marks a
/// vanishing field in [`vertical_bundle`].
const VANISHING_TOLERANCE: f64 = 1e-9;
/// Relative smallest singular value below which projector derivatives fall
/// back to finite differences.
const ANALYTIC_DERIVATIVE_FLOOR: f64 = 1e-6;

/// Curvature operator `t ↦ R(t)` in a parallel orthonormal frame.
#[derive(Clone)]
pub enum CurvatureModel {
    Constant(DMatrix<f64>),
    /// Samples on the uniform grid `start + k·step`, cubic interpolation.
    Sampled { start: f64, step: f64, values: Arc<Vec<DMatrix<f64>>> },
    Function(Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>),
}

impl fmt::Debug for CurvatureModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CurvatureModel::Constant(r) => f.debug_tuple("Constant").field(r).finish(),
            CurvatureModel::Sampled { start, step, values } => f
                .debug_struct("Sampled")
                .field("start", start)
                .field("step", step)
                .field("samples", &values.len())
                .finish(),
            CurvatureModel::Function(_) => f.write_str("Function(..)"),
        }
    }
}

impl CurvatureModel {
    fn eval(&self, t: f64) -> DMatrix<f64> {
        match self {
            CurvatureModel::Constant(r) => r.clone(),
            CurvatureModel::Function(f) => f(t),
            CurvatureModel::Sampled { start, step, values } => {
                let len = values.len();
                if len == 1 {
                    return values[0].clone();
                }
                if len < 4 {
                    let s = ((t - start) / step).clamp(0.0, (len - 1) as f64);
                    let k = (s.floor() as usize).min(len - 2);
                    let u = s - k as f64;
                    return &values[k] * (1.0 - u) + &values[k + 1] * u;
                }
                let s = (t - start) / step;
                let k = (s.floor() as isize).clamp(1, len as isize - 3) as usize;
                let u = s - k as f64;
                // Cubic Lagrange weights on nodes k−1, k, k+1, k+2.
                let w0 = -u * (u - 1.0) * (u - 2.0) / 6.0;
                let w1 = (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0;
                let w2 = -(u + 1.0) * u * (u - 2.0) / 2.0;
                let w3 = (u + 1.0) * u * (u - 1.0) / 6.0;
                &values[k - 1] * w0 + &values[k] * w1 + &values[k + 1] * w2 + &values[k + 2] * w3
            }
        }
    }
}

/// A Jacobi triple over a finite window.
#[derive(Debug, Clone)]
pub struct JacobiTriple {
    n: usize,
    domain: (f64, f64),
    curvature: CurvatureModel,
}

impl JacobiTriple {
    /// Validates the window and symmetry of `R` at 17 probe times.
    pub fn new(n: usize, domain: (f64, f64), curvature: CurvatureModel) -> Result<Self> {
        if n == 0 {
            return invalid("triple rank must be at least 1");
        }
        let (a, b) = domain;
        if !a.is_finite() || !b.is_finite() || !(a < b) {
            return invalid(format!("domain [{a}, {b}] must be finite with a < b"));
        }
        let triple = Self { n, domain, curvature };
        for k in 0..=16 {
            let t = a + (b - a) * k as f64 / 16.0;
            let r = triple.curvature_at(t);
            if r.nrows() != n || r.ncols() != n {
                return invalid(format!("curvature at t = {t} is {}x{}, expected {n}x{n}", r.nrows(), r.ncols()));
            }
            if r.iter().any(|c| !c.is_finite()) {
                return invalid(format!("non-finite curvature at t = {t}"));
            }
            if asymmetry(&r) > SYMMETRY_TOLERANCE {
                return invalid(format!("curvature is not symmetric at t = {t}"));
            }
        }
        Ok(triple)
    }

    pub fn constant(r: DMatrix<f64>, domain: (f64, f64)) -> Result<Self> {
        if r.nrows() != r.ncols() {
            return invalid("curvature matrix must be square");
        }
        Self::new(r.nrows(), domain, CurvatureModel::Constant(r))
    }

    pub fn from_fn(n: usize, domain: (f64, f64), f: impl Fn(f64) -> DMatrix<f64> + Send + Sync + 'static) -> Result<Self> {
        Self::new(n, domain, CurvatureModel::Function(Arc::new(f)))
    }

    /// One of the catalog triples on `domain`.
    pub fn catalog(name: TripleName, n: Option<usize>, domain: (f64, f64)) -> Result<Self> {
        let fixed = |expected: usize| -> Result<usize> {
            match n {
                Some(m) if m != expected => invalid(format!("triple {name} has rank {expected}, got n = {m}")),
                _ => Ok(expected),
            }
        };
        match name {
            TripleName::Flat => {
                let n = n.unwrap_or(2);
                Self::constant(DMatrix::zeros(n, n), domain)
            }
            TripleName::Sphere => {
                let n = n.unwrap_or(2);
                Self::constant(DMatrix::identity(n, n), domain)
            }
            TripleName::Mixed => {
                fixed(2)?;
                Self::constant(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0])), domain)
            }
            TripleName::Hopf => {
                fixed(2)?;
                Self::constant(DMatrix::identity(2, 2), domain)
            }
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn curvature(&self) -> &CurvatureModel {
        &self.curvature
    }

    pub fn curvature_at(&self, t: f64) -> DMatrix<f64> {
        self.curvature.eval(t)
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let (a, b) = self.domain;
        let slack = 1e-12 * (1.0 + a.abs().max(b.abs()));
        if !t.is_finite() || t < a - slack || t > b + slack {
            return Err(GeomError::Domain(format!("time {t} outside the domain [{a}, {b}]")));
        }
        Ok(())
    }
}

/// Names of the catalog triples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TripleName {
    /// `R = 0`.
    Flat,
    /// `R = I`.
    Sphere,
    /// `R = diag(1, 0)`.
    Mixed,
    /// `R = I₂`, paired with the rotating isotropic line of [`hopf_line`].
    Hopf,
}

impl TripleName {
    pub const ALL: [TripleName; 4] = [TripleName::Flat, TripleName::Sphere, TripleName::Mixed, TripleName::Hopf];

    pub fn as_str(self) -> &'static str {
        match self {
            TripleName::Flat => "flat",
            TripleName::Sphere => "sphere",
            TripleName::Mixed => "mixed",
            TripleName::Hopf => "hopf",
        }
    }
}

impl fmt::Display for TripleName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TripleName {
    type Err = GeomError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|n| n.as_str() == s).ok_or_else(|| {
            let names: Vec<&str> = Self::ALL.iter().map(|n| n.as_str()).collect();
            GeomError::InvalidInput(format!("unknown triple '{s}'; valid names: {}", names.join(", ")))
        })
    }
}

/// Initial condition `(J(a), J′(a)) = ((1, 0), (0, 1))` of the rotating
/// isotropic line `J(t) = (cos t, sin t)` of the hopf triple.
pub fn hopf_line() -> DVector<f64> {
    DVector::from_vec(vec![1.0, 0.0, 0.0, 1.0])
}

/// A Jacobi field sampled on the uniform grid `start + k·step` of its triple's
/// domain, with cubic Hermite interpolation in between.
#[derive(Debug, Clone)]
pub struct JacobiField {
    n: usize,
    start: f64,
    step: f64,
    count: usize,
    initial: DVector<f64>,
    values: Vec<f64>,
    derivs: Vec<f64>,
    accels: Vec<f64>,
}

impl JacobiField {
    pub fn initial(&self) -> &DVector<f64> {
        &self.initial
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn time(&self, k: usize) -> f64 {
        self.start + k as f64 * self.step
    }

    pub fn value_at_index(&self, k: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.values[k * self.n..(k + 1) * self.n])
    }

    pub fn derivative_at_index(&self, k: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.derivs[k * self.n..(k + 1) * self.n])
    }

    fn locate(&self, t: f64) -> Result<(usize, f64)> {
        let end = self.time(self.count - 1);
        let slack = 1e-12 * (1.0 + self.start.abs().max(end.abs()));
        if !t.is_finite() || t < self.start - slack || t > end + slack {
            return Err(GeomError::Domain(format!("time {t} outside the field grid [{}, {end}]", self.start)));
        }
        if self.count == 1 {
            return Ok((0, 0.0));
        }
        let s = ((t - self.start) / self.step).clamp(0.0, (self.count - 1) as f64);
        let k = (s.floor() as usize).min(self.count - 2);
        Ok((k, s - k as f64))
    }

    fn hermite(&self, y: &[f64], dy: &[f64], k: usize, u: f64) -> DVector<f64> {
        let n = self.n;
        let h = self.step;
        let (h00, h10, h01, h11) = (
            (1.0 + 2.0 * u) * (1.0 - u) * (1.0 - u),
            u * (1.0 - u) * (1.0 - u),
            u * u * (3.0 - 2.0 * u),
            u * u * (u - 1.0),
        );
        DVector::from_fn(n, |i, _| {
            let (a, b) = (k * n + i, (k + 1) * n + i);
            h00 * y[a] + h10 * h * dy[a] + h01 * y[b] + h11 * h * dy[b]
        })
    }

    /// `J(t)`.
    pub fn value(&self, t: f64) -> Result<DVector<f64>> {
        let (k, u) = self.locate(t)?;
        if u == 0.0 {
            return Ok(self.value_at_index(k));
        }
        Ok(self.hermite(&self.values, &self.derivs, k, u))
    }

    /// `J′(t)`.
    pub fn derivative(&self, t: f64) -> Result<DVector<f64>> {
        let (k, u) = self.locate(t)?;
        if u == 0.0 {
            return Ok(self.derivative_at_index(k));
        }
        Ok(self.hermite(&self.derivs, &self.accels, k, u))
    }
}

fn grid(domain: (f64, f64), step: f64) -> Result<(usize, f64)> {
    if !(step > 0.0) || !step.is_finite() {
        return invalid(format!("grid step must be positive, got {step}"));
    }
    let len = domain.1 - domain.0;
    let steps = ((len / step) - 1e-9).ceil().max(1.0);
    if steps > 5e7 {
        return invalid(format!("grid of {steps} steps is too fine"));
    }
    let steps = steps as usize;
    Ok((steps, len / steps as f64))
}

/// RK4 solution of `J″ = −R(t) J` over the triple's domain from the initial
/// condition `(J(a), J′(a))` stacked as a `2n`-vector.
pub fn solve_jacobi(triple: &JacobiTriple, initial: &DVector<f64>, step: f64) -> Result<JacobiField> {
    let n = triple.n;
    if initial.len() != 2 * n {
        return invalid(format!("initial condition must have length {}, got {}", 2 * n, initial.len()));
    }
    if initial.iter().any(|c| !c.is_finite()) {
        return invalid("non-finite initial condition");
    }
    let (steps, h) = grid(triple.domain, step)?;
    let start = triple.domain.0;
    let count = steps + 1;
    let mut values = Vec::with_capacity(count * n);
    let mut derivs = Vec::with_capacity(count * n);
    let mut accels = Vec::with_capacity(count * n);
    let mut j = initial.rows(0, n).into_owned();
    let mut dj = initial.rows(n, n).into_owned();
    let mut r0 = triple.curvature_at(start);
    for k in 0..count {
        let t = start + k as f64 * h;
        let acc = -(&r0 * &j);
        values.extend(j.iter());
        derivs.extend(dj.iter());
        accels.extend(acc.iter());
        if k == steps {
            break;
        }
        let rm = triple.curvature_at(t + 0.5 * h);
        let r1 = triple.curvature_at(t + h);
        let k1j = dj.clone();
        let k1d = acc;
        let j2 = &j + &k1j * (0.5 * h);
        let k2j = &dj + &k1d * (0.5 * h);
        let k2d = -(&rm * &j2);
        let j3 = &j + &k2j * (0.5 * h);
        let k3j = &dj + &k2d * (0.5 * h);
        let k3d = -(&rm * &j3);
        let j4 = &j + &k3j * h;
        let k4j = &dj + &k3d * h;
        let k4d = -(&r1 * &j4);
        j += (k1j + k2j * 2.0 + k3j * 2.0 + k4j) * (h / 6.0);
        dj += (k1d + k2d * 2.0 + k3d * 2.0 + k4d) * (h / 6.0);
        if j.iter().chain(dj.iter()).any(|c| !c.is_finite()) {
            return Err(GeomError::Numeric(format!("Jacobi field blew up near t = {}", t + h)));
        }
        r0 = r1;
    }
    Ok(JacobiField { n, start, step: h, count, initial: initial.clone(), values, derivs, accels })
}

/// `ω(J₁, J₂)(t) = ⟨J₁′, J₂⟩ − ⟨J₁, J₂′⟩`.
pub fn omega(j1: &JacobiField, j2: &JacobiField, t: f64) -> Result<f64> {
    Ok(j1.derivative(t)?.dot(&j2.value(t)?) - j1.value(t)?.dot(&j2.derivative(t)?))
}

/// A finite-dimensional space of Jacobi fields, given by a basis of initial
/// conditions, together with the solved basis fields.
#[derive(Debug, Clone)]
pub struct Subspace {
    triple: JacobiTriple,
    basis: Vec<DVector<f64>>,
    fields: Vec<JacobiField>,
    step: f64,
}

impl Subspace {
    /// Solves every basis field; rejects linearly dependent bases.
    pub fn new(triple: &JacobiTriple, basis: Vec<DVector<f64>>, step: f64) -> Result<Self> {
        let n = triple.n;
        if basis.iter().any(|b| b.len() != 2 * n) {
            return invalid(format!("basis vectors must have length {}", 2 * n));
        }
        if basis.len() > 2 * n {
            return invalid(format!("at most {} independent initial conditions exist", 2 * n));
        }
        if numerical_rank(&columns_to_matrix(2 * n, &basis), BASIS_RANK_TOLERANCE) != basis.len() {
            return invalid("subspace basis is linearly dependent");
        }
        let fields = basis.iter().map(|b| solve_jacobi(triple, b, step)).collect::<Result<Vec<_>>>()?;
        Ok(Self { triple: triple.clone(), basis, fields, step })
    }

    pub fn triple(&self) -> &JacobiTriple {
        &self.triple
    }

    pub fn basis(&self) -> &[DVector<f64>] {
        &self.basis
    }

    pub fn fields(&self) -> &[JacobiField] {
        &self.fields
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// The `n × dim` matrix with columns `J_i(t)`.
    pub fn value_matrix(&self, t: f64) -> Result<DMatrix<f64>> {
        let cols = self.fields.iter().map(|f| f.value(t)).collect::<Result<Vec<_>>>()?;
        Ok(columns_to_matrix(self.triple.n, &cols))
    }

    /// The `n × dim` matrix with columns `J_i′(t)`.
    pub fn derivative_matrix(&self, t: f64) -> Result<DMatrix<f64>> {
        let cols = self.fields.iter().map(|f| f.derivative(t)).collect::<Result<Vec<_>>>()?;
        Ok(columns_to_matrix(self.triple.n, &cols))
    }

    /// Initial condition of `Σ c_i J_i`.
    pub fn combination(&self, coeffs: &DVector<f64>) -> DVector<f64> {
        self.basis.iter().zip(coeffs.iter()).fold(DVector::zeros(2 * self.triple.n), |acc, (b, c)| acc + b * *c)
    }

    fn grid_times(&self, scan_step: f64) -> Result<Vec<f64>> {
        let (steps, h) = grid(self.triple.domain, scan_step)?;
        Ok((0..=steps).map(|k| self.triple.domain.0 + k as f64 * h).collect())
    }
}

/// Isotropy and Lagrangian flags of a subspace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubspaceClass {
    pub isotropic: bool,
    pub lagrangian: bool,
    /// Largest `|ω|` over pairs of basis fields.
    pub max_pairing: f64,
}

/// Isotropic iff every pairwise `|ω| ≤ tol`; Lagrangian iff also `dim = n`.
pub fn classify_subspace(s: &Subspace, tol: f64) -> SubspaceClass {
    let mut max = 0.0_f64;
    for i in 0..s.dim() {
        for j in (i + 1)..s.dim() {
            max = max.max(symplectic_pairing(&s.basis[i], &s.basis[j]).abs());
        }
    }
    let isotropic = max <= tol;
    SubspaceClass { isotropic, lagrangian: isotropic && s.dim() == s.triple.n, max_pairing: max }
}

fn require_isotropic(s: &Subspace) -> Result<()> {
    if s.dim() > s.triple.n {
        return Err(GeomError::Precondition(format!(
            "subspace of dimension {} cannot be isotropic in rank {}",
            s.dim(),
            s.triple.n
        )));
    }
    let class = classify_subspace(s, 1e-8);
    if !class.isotropic {
        return Err(GeomError::Precondition(format!("subspace is not isotropic (|ω| up to {:.3e})", class.max_pairing)));
    }
    Ok(())
}

fn sigma_min(s: &Subspace, t: f64) -> Result<f64> {
    Ok(min_singular_value(&s.value_matrix(t)?))
}

/// Golden-section minimization of `σ_min` on `[lo, hi]`.
fn refine_minimum(s: &Subspace, mut lo: f64, mut hi: f64) -> Result<(f64, f64)> {
    let ratio = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = sigma_min(s, x1)?;
    let mut f2 = sigma_min(s, x2)?;
    while hi - lo > INSTANT_RESOLUTION {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = sigma_min(s, x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = sigma_min(s, x2)?;
        }
    }
    // Endpoints of the bracket are candidates too (zeros on the domain boundary).
    let mid = 0.5 * (lo + hi);
    let mut best = (mid, sigma_min(s, mid)?);
    for t in [lo, hi] {
        let v = sigma_min(s, t)?;
        if v < best.1 {
            best = (t, v);
        }
    }
    Ok(best)
}

/// Instants where some nonzero field of `S` vanishes: local minima of the
/// smallest singular value of the value matrix on a `scan_step` grid, refined
/// by golden-section search to [`INSTANT_RESOLUTION`] and kept when the
/// refined value is at most `tol`.
pub fn singular_instants(s: &Subspace, scan_step: f64, tol: f64) -> Result<Vec<f64>> {
    require_isotropic(s)?;
    if s.dim() == 0 {
        return Ok(Vec::new());
    }
    let times = s.grid_times(scan_step)?;
    let sig = times.iter().map(|&t| sigma_min(s, t)).collect::<Result<Vec<_>>>()?;
    let mut out: Vec<f64> = Vec::new();
    let last = times.len() - 1;
    for k in 0..times.len() {
        let left = if k == 0 { f64::INFINITY } else { sig[k - 1] };
        let right = if k == last { f64::INFINITY } else { sig[k + 1] };
        if !(sig[k] <= left && sig[k] <= right) {
            continue;
        }
        let lo = times[k.saturating_sub(1)];
        let hi = times[(k + 1).min(last)];
        let (t, v) = refine_minimum(s, lo, hi)?;
        if v <= tol && out.last().is_none_or(|&p| (t - p).abs() > 1e3 * INSTANT_RESOLUTION) {
            out.push(t);
        }
    }
    Ok(out)
}

/// Orthonormal basis (as columns) of the vertical space `V_t`: the left
/// singular vectors of the value matrix with non-negligible singular values,
/// plus `J′(t)·c` for the coefficient vectors `c` of fields vanishing at `t`.
pub fn vertical_bundle(s: &Subspace, t: f64) -> Result<DMatrix<f64>> {
    let n = s.triple.n;
    let k = s.dim();
    if k == 0 {
        return Ok(DMatrix::zeros(n, 0));
    }
    let m = s.value_matrix(t)?;
    let d = s.derivative_matrix(t)?;
    let scale = (m.norm_squared() + d.norm_squared()).sqrt().max(f64::MIN_POSITIVE);
    let mut padded = DMatrix::zeros(n.max(k), k);
    padded.view_mut((0, 0), (n, k)).copy_from(&m);
    let svd = padded.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let mut cols = Vec::with_capacity(k);
    for i in 0..k {
        let sigma = svd.singular_values[i];
        if sigma > VANISHING_TOLERANCE * scale {
            cols.push(u.column(i).rows(0, n).into_owned());
        } else {
            cols.push(&d * v_t.row(i).transpose());
        }
    }
    let basis = orthonormalize(&cols, 1e-8);
    if basis.len() != k {
        return Err(GeomError::Numeric(format!("vertical space at t = {t} has rank {} instead of {k}", basis.len())));
    }
    Ok(columns_to_matrix(n, &basis))
}

/// Orthogonal projector onto `V_t`.
pub fn vertical_projector(s: &Subspace, t: f64) -> Result<DMatrix<f64>> {
    let b = vertical_bundle(s, t)?;
    Ok(&b * b.transpose())
}

/// Spectral norm of the stacked `[M; M′]`, the size of the fields at `t`.
fn field_scale(m: &DMatrix<f64>, d: &DMatrix<f64>) -> f64 {
    let mut stacked = DMatrix::zeros(m.nrows() + d.nrows(), m.ncols());
    stacked.view_mut((0, 0), m.shape()).copy_from(m);
    stacked.view_mut((m.nrows(), 0), d.shape()).copy_from(d);
    stacked.svd(false, false).singular_values.iter().cloned().fold(0.0, f64::max)
}

/// `P′(t)` for the vertical projector. Away from singular instants the
/// projector onto the column space of `M(t)` has the closed-form derivative
/// `P′ = (I − P) M′ M⁺ + ((I − P) M′ M⁺)ᵀ`; close to them (`σ_min(M)` below
/// `1e−6 ‖[M; M′]‖`) central differences of [`vertical_projector`] with step
/// [`PROJECTOR_STEP`] are used, one-sided at the domain ends.
pub fn projector_derivative(s: &Subspace, t: f64) -> Result<DMatrix<f64>> {
    let n = s.triple.n;
    if s.dim() == 0 {
        return Ok(DMatrix::zeros(n, n));
    }
    let m = s.value_matrix(t)?;
    let d = s.derivative_matrix(t)?;
    if min_singular_value(&m) > ANALYTIC_DERIVATIVE_FLOOR * field_scale(&m, &d) {
        let gram = (m.transpose() * &m)
            .cholesky()
            .ok_or_else(|| GeomError::Numeric(format!("value matrix is rank deficient at t = {t}")))?;
        let pinv = gram.solve(&m.transpose());
        let p = &m * &pinv;
        let half = (DMatrix::identity(n, n) - p) * d * pinv;
        return Ok(&half + half.transpose());
    }
    finite_difference_projector_derivative(s, t)
}

/// Central-difference derivative of the vertical projector (one-sided at the
/// domain ends).
pub fn finite_difference_projector_derivative(s: &Subspace, t: f64) -> Result<DMatrix<f64>> {
    let h = PROJECTOR_STEP;
    let (a, b) = s.triple.domain;
    let p = |x: f64| vertical_projector(s, x);
    let jump_check = |lo: &DMatrix<f64>, hi: &DMatrix<f64>| -> Result<()> {
        let jump = (hi - lo).norm();
        if jump > MAX_PROJECTOR_JUMP {
            return Err(GeomError::Numeric(format!(
                "vertical frame jumps by {jump:.3} near t = {t}; use a finer step"
            )));
        }
        Ok(())
    };
    if t - h < a {
        let (p0, p1, p2) = (p(t)?, p(t + h)?, p(t + 2.0 * h)?);
        jump_check(&p0, &p2)?;
        return Ok((p1 * 4.0 - p0 * 3.0 - p2) / (2.0 * h));
    }
    if t + h > b {
        let (p0, p1, p2) = (p(t)?, p(t - h)?, p(t - 2.0 * h)?);
        jump_check(&p2, &p0)?;
        return Ok((p0 * 3.0 - p1 * 4.0 + p2) / (2.0 * h));
    }
    let (lo, hi) = (p(t - h)?, p(t + h)?);
    jump_check(&lo, &hi)?;
    Ok((hi - lo) / (2.0 * h))
}

/// Matrix of `𝔸 = (I − 2P) P′` at `t`.
pub fn a_tensor_matrix(s: &Subspace, t: f64) -> Result<DMatrix<f64>> {
    require_isotropic(s)?;
    let n = s.triple.n;
    let p = vertical_projector(s, t)?;
    let dp = projector_derivative(s, t)?;
    Ok((DMatrix::identity(n, n) - p * 2.0) * dp)
}

/// `𝔸(X) = (DX^V)^H + (DX^H)^V` at `t`.
pub fn a_tensor(s: &Subspace, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
    if x.len() != s.triple.n {
        return invalid(format!("vector must have length {}", s.triple.n));
    }
    Ok(a_tensor_matrix(s, t)? * x)
}

/// Transverse Jacobi triple of an isotropic subspace, with the horizontal
/// parallel frame used to express it.
#[derive(Debug, Clone)]
pub struct TransverseTriple {
    pub triple: JacobiTriple,
    start: f64,
    step: f64,
    /// `n × (n − dim I)` frames on the grid `start + k·step`.
    frames: Vec<DMatrix<f64>>,
    /// Derivatives `Φ′ = −P′Φ` on the same grid.
    frame_derivatives: Vec<DMatrix<f64>>,
}

impl TransverseTriple {
    pub fn rank(&self) -> usize {
        self.triple.n
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.start + k as f64 * self.step
    }

    pub fn frame(&self, k: usize) -> &DMatrix<f64> {
        &self.frames[k]
    }

    /// Coordinates `(c, c′)` of the horizontal part of `field` in the parallel
    /// frame at grid index `k`: `c = ΦᵀJ`, `c′ = Φ′ᵀJ + ΦᵀJ′`.
    pub fn project_at(&self, field: &JacobiField, k: usize) -> Result<(DVector<f64>, DVector<f64>)> {
        let t = self.time(k);
        let j = field.value(t)?;
        let dj = field.derivative(t)?;
        let phi = &self.frames[k];
        let c = phi.transpose() * &j;
        let dc = self.frame_derivatives[k].transpose() * &j + phi.transpose() * &dj;
        Ok((c, dc))
    }

    /// Projected initial condition `(c(a), c′(a))` as a `2r`-vector.
    pub fn project_initial(&self, field: &JacobiField) -> Result<DVector<f64>> {
        let (c, dc) = self.project_at(field, 0)?;
        let r = c.len();
        Ok(DVector::from_fn(2 * r, |i, _| if i < r { c[i] } else { dc[i - r] }))
    }
}

fn complement_frame(v: &DMatrix<f64>) -> DMatrix<f64> {
    let n = v.nrows();
    if v.ncols() == 0 {
        return DMatrix::identity(n, n);
    }
    null_space(&v.transpose(), 1e-10)
}

/// Transverse triple `(H, D_H, R_H − 3𝔸²|_H)` of an isotropic subspace.
///
/// A frame of `H` is transported by `Φ′ = −P′Φ` (RK4 on the subspace's field
/// grid), which keeps it orthonormal, horizontal and `D_H`-parallel; the new
/// curvature `Φᵀ(R − 3𝔸²)Φ` is sampled on the same grid.
pub fn transverse_triple(s: &Subspace) -> Result<TransverseTriple> {
    require_isotropic(s)?;
    let triple = &s.triple;
    let n = triple.n;
    let (steps, h) = grid(triple.domain, s.step)?;
    let start = triple.domain.0;
    if s.dim() == 0 {
        let eye = DMatrix::identity(n, n);
        return Ok(TransverseTriple {
            triple: triple.clone(),
            start,
            step: h,
            frames: vec![eye.clone(); steps + 1],
            frame_derivatives: vec![DMatrix::zeros(n, n); steps + 1],
        });
    }
    let r = n - s.dim();
    if r == 0 {
        return Err(GeomError::Precondition("a Lagrangian subspace has no transverse directions".into()));
    }
    let mut phi = complement_frame(&vertical_bundle(s, start)?);
    let mut frames = Vec::with_capacity(steps + 1);
    let mut derivs = Vec::with_capacity(steps + 1);
    let mut curvature = Vec::with_capacity(steps + 1);
    let mut dp0 = projector_derivative(s, start)?;
    for k in 0..=steps {
        let t = start + k as f64 * h;
        let p = vertical_projector(s, t)?;
        let a = (DMatrix::identity(n, n) - &p * 2.0) * &dp0;
        let rt = phi.transpose() * (triple.curvature_at(t) - &a * &a * 3.0) * &phi;
        curvature.push((&rt + rt.transpose()) * 0.5);
        derivs.push(-(&dp0 * &phi));
        frames.push(phi.clone());
        if k == steps {
            break;
        }
        let dpm = projector_derivative(s, t + 0.5 * h)?;
        let dp1 = projector_derivative(s, t + h)?;
        let k1 = -(&dp0 * &phi);
        let k2 = -(&dpm * (&phi + &k1 * (0.5 * h)));
        let k3 = -(&dpm * (&phi + &k2 * (0.5 * h)));
        let k4 = -(&dp1 * (&phi + &k3 * h));
        phi += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        dp0 = dp1;
    }
    let model = CurvatureModel::Sampled { start, step: h, values: Arc::new(curvature) };
    Ok(TransverseTriple {
        triple: JacobiTriple::new(r, triple.domain, model)?,
        start,
        step: h,
        frames,
        frame_derivatives: derivs,
    })
}

/// Basis of the `ω`-orthogonal complement `I^ω` of an isotropic subspace, as
/// initial conditions.
pub fn symplectic_complement(s: &Subspace) -> Vec<DVector<f64>> {
    let n2 = 2 * s.triple.n;
    if s.dim() == 0 {
        return (0..n2).map(|i| DVector::from_fn(n2, |k, _| if k == i { 1.0 } else { 0.0 })).collect();
    }
    let n = s.triple.n;
    let mut rows = DMatrix::zeros(s.dim(), n2);
    for (i, a) in s.basis.iter().enumerate() {
        // ω(a, b) = Σ a[n+i] b[i] − a[i] b[n+i] as a row functional of b.
        for c in 0..n {
            rows[(i, c)] = a[n + c];
            rows[(i, n + c)] = -a[c];
        }
    }
    let ns = null_space(&rows, 1e-10);
    (0..ns.ncols()).map(|j| ns.column(j).into_owned()).collect()
}

/// Check that `J ↦ J^H` maps `I^ω` to transverse Jacobi fields and preserves
/// `ω`. Returns `(tracking, pairing)`: the largest deviation between the
/// projected fields and the transverse solutions from their projected initial
/// conditions, and the largest `|ω̃(c_i, c_j) − ω(J_i, J_j)|`, both over
/// `checkpoints` evenly spaced grid times.
pub fn symplectic_isomorphism_defect(s: &Subspace, transverse: &TransverseTriple, checkpoints: usize) -> Result<(f64, f64)> {
    let reps = Subspace::new(&s.triple, symplectic_complement(s), s.step)?;
    let solved = reps
        .fields
        .iter()
        .map(|f| solve_jacobi(&transverse.triple, &transverse.project_initial(f)?, s.step))
        .collect::<Result<Vec<_>>>()?;
    let last = transverse.len() - 1;
    let mut tracking = 0.0_f64;
    let mut pairing = 0.0_f64;
    for c in 0..=checkpoints.max(1) {
        let k = last * c / checkpoints.max(1);
        let t = transverse.time(k);
        let projected = reps.fields.iter().map(|f| transverse.project_at(f, k)).collect::<Result<Vec<_>>>()?;
        for (p, sol) in projected.iter().zip(&solved) {
            tracking = tracking.max((&p.0 - sol.value(t)?).amax()).max((&p.1 - sol.derivative(t)?).amax());
        }
        for i in 0..projected.len() {
            for j in 0..projected.len() {
                let w = projected[i].1.dot(&projected[j].0) - projected[i].0.dot(&projected[j].1);
                let w0 = symplectic_pairing(&reps.basis[i], &reps.basis[j]);
                pairing = pairing.max((w - w0).abs());
            }
        }
    }
    Ok((tracking, pairing))
}

fn require_lagrangian(l: &Subspace) -> Result<()> {
    let class = classify_subspace(l, 1e-8);
    if !class.lagrangian {
        return Err(GeomError::Precondition(format!(
            "subspace is not Lagrangian (dim {}, rank {}, |ω| up to {:.3e})",
            l.dim(),
            l.triple.n,
            class.max_pairing
        )));
    }
    Ok(())
}

/// Riccati operator `S = J′(t) J(t)⁻¹` of a Lagrangian subspace at an
/// `L`-regular instant. Instants with `‖[M; M′]‖ / σ_min(M)` above
/// [`MAX_RICCATI_CONDITION`] count as singular.
pub fn riccati_operator(l: &Subspace, t: f64) -> Result<DMatrix<f64>> {
    require_lagrangian(l)?;
    l.triple.check_time(t)?;
    let m = l.value_matrix(t)?;
    let d = l.derivative_matrix(t)?;
    let (min, scale) = (min_singular_value(&m), field_scale(&m, &d));
    if !(min > 0.0) || scale / min > MAX_RICCATI_CONDITION {
        let instants = singular_instants(l, DEFAULT_SCAN_STEP, 1e-6).unwrap_or_default();
        let nearest = instants.iter().cloned().min_by(|a, b| (a - t).abs().total_cmp(&(b - t).abs()));
        let msg = match nearest {
            Some(s) => format!("t = {t} is singular for the Lagrangian (nearest singular instant {s:.9})"),
            None => format!("t = {t} is singular for the Lagrangian (condition {:.3e})", scale / min),
        };
        return Err(GeomError::Precondition(msg));
    }
    let inv = m
        .try_inverse()
        .ok_or_else(|| GeomError::Numeric(format!("value matrix not invertible at t = {t}")))?;
    Ok(d * inv)
}

/// `‖S′(t) + S(t)² + R(t)‖_F` with `S′` by a central difference of step `fd_step`.
pub fn riccati_residual(l: &Subspace, t: f64, fd_step: f64) -> Result<f64> {
    let s = riccati_operator(l, t)?;
    let ds = (riccati_operator(l, t + fd_step)? - riccati_operator(l, t - fd_step)?) / (2.0 * fd_step);
    Ok((ds + &s * &s + l.triple.curvature_at(t)).norm())
}

/// Outcome of the trace-Riccati check.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRiccatiReport {
    pub window: (f64, f64),
    /// Singular instants of the Lagrangian inside the window.
    pub singular_instants: Vec<f64>,
    /// Whether `R(t)` is positive semidefinite at every scan point.
    pub curvature_nonnegative: bool,
    /// Whether `tr R(t) ≥ 0` at every scan point.
    pub trace_nonnegative: bool,
    /// Regular on the whole window and `R ≥ 0`.
    pub applicable: bool,
    pub max_trace: Option<f64>,
    pub max_norm: Option<f64>,
    /// `max ‖S‖ ≤ tol` when applicable; vacuously true otherwise.
    pub holds: bool,
}

/// Scan a Lagrangian for the vanishing of its Riccati operator: under
/// `R ≥ 0`, a Lagrangian regular on the whole line has `S ≡ 0`; on the finite
/// window the check is applicable only when no singular instant occurs.
pub fn trace_riccati_check(l: &Subspace, scan_step: f64, tol: f64) -> Result<TraceRiccatiReport> {
    require_lagrangian(l)?;
    let times = l.grid_times(scan_step)?;
    let mut psd = true;
    let mut trace_ok = true;
    for &t in &times {
        let r = l.triple.curvature_at(t);
        psd &= min_eigenvalue(&r) >= -PSD_TOLERANCE;
        trace_ok &= r.trace() >= -PSD_TOLERANCE;
    }
    let instants = singular_instants(l, scan_step, 1e-6)?;
    let regular = instants.is_empty();
    let (mut max_trace, mut max_norm) = (None, None);
    if regular {
        let mut mt = 0.0_f64;
        let mut mn = 0.0_f64;
        for &t in &times {
            let s = riccati_operator(l, t)?;
            mt = mt.max(s.trace().abs());
            mn = mn.max(s.norm());
        }
        max_trace = Some(mt);
        max_norm = Some(mn);
    }
    let applicable = regular && psd;
    let holds = !applicable || max_norm.is_some_and(|m| m <= tol);
    Ok(TraceRiccatiReport {
        window: l.triple.domain,
        singular_instants: instants,
        curvature_nonnegative: psd,
        trace_nonnegative: trace_ok,
        applicable,
        max_trace,
        max_norm,
        holds,
    })
}

/// Diagnostics of [`wilking_decompose`].
#[derive(Debug, Clone, PartialEq)]
pub struct WilkingDiagnostics {
    pub window_length: f64,
    pub singular_instants: Vec<f64>,
    /// Distance of the Lagrangian's basis from `null ⊕ parallel`, plus the
    /// dimension shortfall.
    pub reconstruction_error: f64,
    /// `max ‖P_H R P_H‖` over the scan, with `V` the vertical bundle of the
    /// null span.
    pub curvature_residual: f64,
    /// `max ‖𝔸‖` over the scan for the null span.
    pub a_tensor_residual: f64,
    /// `max ‖S̃‖` of the transverse Riccati operator of the projected parallel
    /// fields, when both parts are nontrivial.
    pub transverse_riccati: Option<f64>,
}

/// Splitting of a Lagrangian under nonnegative curvature.
#[derive(Debug, Clone)]
pub struct WilkingDecomposition {
    pub null_span: Subspace,
    pub parallel_span: Subspace,
    pub diagnostics: WilkingDiagnostics,
}

fn coefficient_span(cols: &[DVector<f64>], k: usize) -> DMatrix<f64> {
    columns_to_matrix(k, &orthonormalize(cols, 1e-8))
}

/// Decompose a Lagrangian `L` as (span of fields vanishing somewhere in the
/// window) ⊕ (parallel fields: `J′ ≡ 0` and `R J ≡ 0`), given `R ≥ 0`.
pub fn wilking_decompose(l: &Subspace, scan_step: f64, tol: f64) -> Result<WilkingDecomposition> {
    require_lagrangian(l)?;
    let triple = &l.triple;
    let n = triple.n;
    let times = l.grid_times(scan_step)?;
    for &t in &times {
        let lo = min_eigenvalue(&triple.curvature_at(t));
        if lo < -PSD_TOLERANCE {
            return Err(GeomError::Precondition(format!(
                "curvature has eigenvalue {lo:.3e} < 0 at t = {t}; the decomposition needs R ≥ 0"
            )));
        }
    }
    let instants = singular_instants(l, scan_step, tol)?;
    let mut vanishing = Vec::new();
    for &t in &instants {
        let m = l.value_matrix(t)?;
        let scale = (m.norm_squared() + l.derivative_matrix(t)?.norm_squared()).sqrt();
        let ns = null_space(&m, tol.max(1e3 * INSTANT_RESOLUTION) * scale.max(1.0));
        vanishing.extend((0..ns.ncols()).map(|j| ns.column(j).into_owned()));
    }
    let null_coeffs = coefficient_span(&vanishing, n);

    let mut gram = DMatrix::zeros(n, n);
    for &t in &times {
        let d = l.derivative_matrix(t)?;
        let rj = triple.curvature_at(t) * l.value_matrix(t)?;
        gram += d.transpose() * &d + rj.transpose() * &rj;
    }
    gram /= times.len() as f64;
    let eig = SymmetricEigen::new(gram);
    let parallel: Vec<DVector<f64>> = (0..n)
        .filter(|&i| eig.eigenvalues[i] <= tol * tol)
        .map(|i| eig.eigenvectors.column(i).into_owned())
        .collect();
    let parallel_coeffs = coefficient_span(&parallel, n);

    let mut joint = null_coeffs.clone().resize_horizontally(null_coeffs.ncols() + parallel_coeffs.ncols(), 0.0);
    joint.view_mut((0, null_coeffs.ncols()), (n, parallel_coeffs.ncols())).copy_from(&parallel_coeffs);
    let reconstruction_error = if joint.ncols() == 0 {
        1.0
    } else {
        let q = joint.clone().svd(true, false).u.expect("requested U");
        let rank = numerical_rank(&joint, 1e-8);
        let q = q.columns(0, rank).into_owned();
        let residual = (DMatrix::identity(n, n) - &q * q.transpose()).norm();
        residual + (n as f64 - joint.ncols() as f64).abs()
    };

    let to_subspace = |coeffs: &DMatrix<f64>| -> Result<Subspace> {
        let basis = (0..coeffs.ncols()).map(|j| l.combination(&coeffs.column(j).into_owned())).collect();
        Subspace::new(triple, basis, l.step)
    };
    let null_span = to_subspace(&null_coeffs)?;
    let parallel_span = to_subspace(&parallel_coeffs)?;

    let mut curvature_residual = 0.0_f64;
    let mut a_tensor_residual = 0.0_f64;
    for &t in &times {
        let p = vertical_projector(&null_span, t)?;
        let ph = DMatrix::identity(n, n) - &p;
        curvature_residual = curvature_residual.max((&ph * triple.curvature_at(t) * &ph).norm());
        if null_span.dim() > 0 {
            a_tensor_residual = a_tensor_residual.max(a_tensor_matrix(&null_span, t)?.norm());
        }
    }

    let transverse_riccati = if null_span.dim() > 0 && null_span.dim() < n && parallel_span.dim() > 0 {
        let tt = transverse_triple(&null_span)?;
        let stride = ((scan_step / tt.step).round() as usize).max(1);
        let mut worst = 0.0_f64;
        for k in (0..tt.len()).step_by(stride) {
            let proj = parallel_span.fields.iter().map(|f| tt.project_at(f, k)).collect::<Result<Vec<_>>>()?;
            let c = columns_to_matrix(tt.rank(), &proj.iter().map(|p| p.0.clone()).collect::<Vec<_>>());
            let dc = columns_to_matrix(tt.rank(), &proj.iter().map(|p| p.1.clone()).collect::<Vec<_>>());
            if c.nrows() != c.ncols() {
                break;
            }
            let inv = c
                .try_inverse()
                .ok_or_else(|| GeomError::Numeric("projected parallel fields are singular".into()))?;
            worst = worst.max((dc * inv).norm());
        }
        Some(worst)
    } else {
        None
    };

    Ok(WilkingDecomposition {
        null_span,
        parallel_span,
        diagnostics: WilkingDiagnostics {
            window_length: triple.domain.1 - triple.domain.0,
            singular_instants: instants,
            reconstruction_error,
            curvature_residual,
            a_tensor_residual,
            transverse_riccati,
        },
    })
}

fn check_orthonormal(vectors: &[DVector<f64>], n: usize, what: &str) -> Result<()> {
    for (i, a) in vectors.iter().enumerate() {
        if a.len() != n {
            return invalid(format!("{what} vectors must have length {n}"));
        }
        for (j, b) in vectors.iter().enumerate() {
            let expected = if i == j { 1.0 } else { 0.0 };
            if (a.dot(b) - expected).abs() > 1e-10 {
                return invalid(format!("{what} vectors are not orthonormal"));
            }
        }
    }
    Ok(())
}

/// Lagrangian of `L`-Jacobi fields of a submanifold through `γ(a)`: tangent
/// directions `e_i` with `J′(a) = Σ_j S_ji e_j`, normal directions with
/// `(J, J′) = (0, ν)`. `shape` is the shape operator in the tangent basis.
pub fn l_jacobi_initial_conditions(
    triple: &JacobiTriple,
    tangent: &[DVector<f64>],
    shape: &DMatrix<f64>,
    normal: &[DVector<f64>],
    step: f64,
) -> Result<Subspace> {
    let n = triple.n;
    let k = tangent.len();
    if shape.nrows() != k || shape.ncols() != k {
        return invalid(format!("shape operator must be {k}x{k}"));
    }
    if asymmetry(shape) > 1e-12 {
        return invalid("shape operator must be symmetric");
    }
    if k + normal.len() != n {
        return invalid(format!("tangent and normal bases must together have {n} vectors"));
    }
    let all: Vec<DVector<f64>> = tangent.iter().chain(normal).cloned().collect();
    check_orthonormal(&all, n, "tangent and normal")?;
    let tmat = columns_to_matrix(n, tangent);
    let mut basis = Vec::with_capacity(n);
    for (i, e) in tangent.iter().enumerate() {
        let de = &tmat * shape.column(i);
        basis.push(DVector::from_fn(2 * n, |c, _| if c < n { e[c] } else { de[c - n] }));
    }
    for nu in normal {
        basis.push(DVector::from_fn(2 * n, |c, _| if c < n { 0.0 } else { nu[c - n] }));
    }
    Subspace::new(triple, basis, step)
}

/// Holonomy-type fields of a submersion: `J(a) = v_i` vertical and
/// `J′(a) = −(S + A*)(v_i)`, with `shape` the `k×k` fiber shape operator in
/// the vertical basis and `a_star` the `n×k` matrix of `A*` on it.
pub fn holonomy_initial_conditions(
    triple: &JacobiTriple,
    vertical: &[DVector<f64>],
    shape: &DMatrix<f64>,
    a_star: &DMatrix<f64>,
    step: f64,
) -> Result<Subspace> {
    let n = triple.n;
    let k = vertical.len();
    if shape.nrows() != k || shape.ncols() != k {
        return invalid(format!("shape operator must be {k}x{k}"));
    }
    if a_star.nrows() != n || a_star.ncols() != k {
        return invalid(format!("A* must be {n}x{k}"));
    }
    check_orthonormal(vertical, n, "vertical")?;
    let vmat = columns_to_matrix(n, vertical);
    let basis = (0..k)
        .map(|i| {
            let d = -(&vmat * shape.column(i) + a_star.column(i));
            DVector::from_fn(2 * n, |c, _| if c < n { vertical[i][c] } else { d[c - n] })
        })
        .collect();
    Subspace::new(triple, basis, step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn catalog(name: TripleName, b: f64) -> JacobiTriple {
        JacobiTriple::catalog(name, None, (0.0, b)).unwrap()
    }

    #[test]
    fn flat_and_sphere_fields_match_closed_forms() {
        let flat = catalog(TripleName::Flat, 5.0);
        let f = solve_jacobi(&flat, &v(&[1.0, -2.0, 0.5, 3.0]), DEFAULT_FIELD_STEP).unwrap();
        for t in [0.0, 1.2345, 5.0] {
            assert!((f.value(t).unwrap() - v(&[1.0 + 0.5 * t, -2.0 + 3.0 * t])).amax() < 1e-12);
        }
        let sphere = catalog(TripleName::Sphere, 7.0);
        let f = solve_jacobi(&sphere, &v(&[1.0, 0.0, 0.0, 2.0]), DEFAULT_FIELD_STEP).unwrap();
        for t in [0.3_f64, 2.00037, 6.9999] {
            let want = v(&[t.cos(), 2.0 * t.sin()]);
            let dwant = v(&[-t.sin(), 2.0 * t.cos()]);
            assert!((f.value(t).unwrap() - want).amax() < 1e-10, "J at {t}");
            assert!((f.derivative(t).unwrap() - dwant).amax() < 1e-10, "J' at {t}");
        }
        assert!(f.value(7.5).is_err());
    }

    #[test]
    fn sampled_curvature_interpolates_cubics_exactly() {
        let r = |t: f64| DMatrix::from_element(1, 1, 1.0 + t * t * t);
        let values: Vec<_> = (0..11).map(|k| r(k as f64 * 0.1)).collect();
        let model = CurvatureModel::Sampled { start: 0.0, step: 0.1, values: Arc::new(values) };
        for t in [0.0, 0.05, 0.437, 0.99] {
            assert!((model.eval(t)[(0, 0)] - r(t)[(0, 0)]).abs() < 1e-12);
        }
    }

    #[test]
    fn triple_validation() {
        let asym = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(JacobiTriple::constant(asym, (0.0, 1.0)).is_err());
        assert!(JacobiTriple::constant(DMatrix::identity(2, 2), (1.0, 1.0)).is_err());
        assert!(JacobiTriple::catalog(TripleName::Mixed, Some(3), (0.0, 1.0)).is_err());
        assert_eq!("hopf".parse::<TripleName>().unwrap(), TripleName::Hopf);
        assert!("torus".parse::<TripleName>().is_err());
        let t = catalog(TripleName::Flat, 1.0);
        assert!(solve_jacobi(&t, &v(&[1.0, 0.0]), 1e-3).is_err());
    }

    fn random_triple(n: usize, seed: u64, b: f64) -> JacobiTriple {
        crate::suite::random_bounded_triple(n, seed, (0.0, b))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn omega_is_conserved(n in 1usize..=4, seed in any::<u64>(), a in prop::collection::vec(-1.0..1.0f64, 8), b in prop::collection::vec(-1.0..1.0f64, 8)) {
            let triple = random_triple(n, seed, 10.0);
            let ja = solve_jacobi(&triple, &v(&a[..2 * n]), DEFAULT_FIELD_STEP).unwrap();
            let jb = solve_jacobi(&triple, &v(&b[..2 * n]), DEFAULT_FIELD_STEP).unwrap();
            let w0 = omega(&ja, &jb, 0.0).unwrap();
            prop_assert!((w0 - symplectic_pairing(&v(&a[..2 * n]), &v(&b[..2 * n]))).abs() < 1e-14);
            for k in 1..=20 {
                let t = 0.5 * k as f64;
                prop_assert!((omega(&ja, &jb, t).unwrap() - w0).abs() < 1e-8);
            }
        }

        #[test]
        fn fields_are_linear_in_initial_data(seed in any::<u64>(), s in -2.0..2.0f64, a in prop::collection::vec(-1.0..1.0f64, 6), b in prop::collection::vec(-1.0..1.0f64, 6)) {
            let triple = random_triple(3, seed, 4.0);
            let (a, b) = (v(&a), v(&b));
            let ja = solve_jacobi(&triple, &a, DEFAULT_FIELD_STEP).unwrap();
            let jb = solve_jacobi(&triple, &b, DEFAULT_FIELD_STEP).unwrap();
            let jc = solve_jacobi(&triple, &(&a * s + &b), DEFAULT_FIELD_STEP).unwrap();
            for t in [0.7, 2.3, 4.0] {
                let want = ja.value(t).unwrap() * s + jb.value(t).unwrap();
                prop_assert!((jc.value(t).unwrap() - want).amax() < 1e-10);
            }
        }
    }

    #[test]
    fn subspace_classification() {
        let sphere = catalog(TripleName::Sphere, 1.0);
        let point = Subspace::new(&sphere, vec![v(&[0.0, 0.0, 1.0, 0.0]), v(&[0.0, 0.0, 0.0, 1.0])], 1e-2).unwrap();
        let class = classify_subspace(&point, 1e-12);
        assert!(class.isotropic && class.lagrangian);
        let mixed = Subspace::new(&sphere, vec![v(&[1.0, 0.0, 0.0, 0.0]), v(&[0.0, 0.0, 1.0, 0.0])], 1e-2).unwrap();
        let class = classify_subspace(&mixed, 1e-12);
        assert!(!class.isotropic);
        assert_eq!(class.max_pairing, 1.0);
        let line = Subspace::new(&sphere, vec![v(&[1.0, 0.0, 0.0, 0.0])], 1e-2).unwrap();
        let class = classify_subspace(&line, 1e-12);
        assert!(class.isotropic && !class.lagrangian);
        assert!(Subspace::new(&sphere, vec![v(&[1.0, 0.0, 0.0, 0.0]), v(&[2.0, 0.0, 0.0, 0.0])], 1e-2).is_err());
        assert!(singular_instants(&mixed, 1e-2, 1e-6).is_err());
    }

    #[test]
    fn singular_instants_of_sphere_and_mixed() {
        let sphere = catalog(TripleName::Sphere, 7.0);
        let line = Subspace::new(&sphere, vec![v(&[0.0, 0.0, 1.0, 0.0])], DEFAULT_FIELD_STEP).unwrap();
        let found = singular_instants(&line, DEFAULT_SCAN_STEP, 1e-6).unwrap();
        assert_eq!(found.len(), 3, "{found:?}");
        for (t, want) in found.iter().zip([0.0, PI, 2.0 * PI]) {
            assert!((t - want).abs() < 1e-8, "{t} vs {want}");
        }

        let mixed = catalog(TripleName::Mixed, DEFAULT_WINDOW.1);
        let l = Subspace::new(&mixed, vec![v(&[0.0, 0.0, 1.0, 0.0]), v(&[0.0, 1.0, 0.0, 0.0])], DEFAULT_FIELD_STEP).unwrap();
        let found = singular_instants(&l, DEFAULT_SCAN_STEP, 1e-6).unwrap();
        assert_eq!(found.len(), 11, "{found:?}");
        for (k, t) in found.iter().enumerate() {
            assert!((t - k as f64 * PI).abs() < 1e-8);
        }

        let flat = catalog(TripleName::Flat, 10.0);
        let parallel = Subspace::new(&flat, vec![v(&[1.0, 0.0, 0.0, 0.0]), v(&[0.0, 1.0, 0.0, 0.0])], DEFAULT_FIELD_STEP).unwrap();
        assert!(singular_instants(&parallel, DEFAULT_SCAN_STEP, 1e-6).unwrap().is_empty());
    }

    #[test]
    fn vertical_bundle_is_continuous_through_zeros() {
        let sphere = catalog(TripleName::Sphere, 4.0);
        // J(t) = sin t · (1, 1)/√2 vanishes at 0 and π.
        let s = 0.5_f64.sqrt();
        let line = Subspace::new(&sphere, vec![v(&[0.0, 0.0, s, s])], DEFAULT_FIELD_STEP).unwrap();
        let want = v(&[s, s]) * v(&[s, s]).transpose();
        for t in [0.0, 1.0, PI, PI + 1e-7, 4.0] {
            let p = vertical_projector(&line, t).unwrap();
            assert!((p - &want).amax() < 1e-9, "t = {t}");
        }
        assert!(projector_derivative(&line, PI).unwrap().amax() < 1e-8);
    }

    #[test]
    fn projector_derivative_matches_finite_differences() {
        let hopf = catalog(TripleName::Hopf, 3.0);
        let line = Subspace::new(&hopf, vec![hopf_line()], DEFAULT_FIELD_STEP).unwrap();
        for t in [0.4, 1.7, 2.9] {
            let analytic = projector_derivative(&line, t).unwrap();
            let fd = finite_difference_projector_derivative(&line, t).unwrap();
            assert!((&analytic - fd).amax() < 1e-8, "t = {t}");
            let exact = DMatrix::from_row_slice(2, 2, &[-(2.0 * t).sin(), (2.0 * t).cos(), (2.0 * t).cos(), (2.0 * t).sin()]);
            assert!((analytic - exact).amax() < 1e-9);
        }
    }

    #[test]
    fn hopf_a_tensor_and_transverse_curvature() {
        let hopf = catalog(TripleName::Hopf, DEFAULT_WINDOW.1);
        let line = Subspace::new(&hopf, vec![hopf_line()], DEFAULT_FIELD_STEP).unwrap();
        let ax = a_tensor(&line, 0.0, &v(&[0.0, 1.0])).unwrap();
        assert!((ax - v(&[-1.0, 0.0])).amax() < 1e-10);
        // A maps vertical to horizontal and back.
        let av = a_tensor(&line, 1.0, &v(&[1.0_f64.cos(), 1.0_f64.sin()])).unwrap();
        assert!((av - v(&[-(1.0_f64.sin()), 1.0_f64.cos()])).amax() < 1e-9);

        let tt = transverse_triple(&line).unwrap();
        assert_eq!(tt.rank(), 1);
        for k in (0..tt.len()).step_by(997) {
            let r = tt.triple.curvature_at(tt.time(k))[(0, 0)];
            assert!((r - 4.0).abs() < 1e-6, "R~ = {r} at {}", tt.time(k));
            let phi = tt.frame(k);
            let t = tt.time(k);
            assert!((phi.column(0).dot(&v(&[t.cos(), t.sin()]))).abs() < 1e-8);
            assert!((phi.column(0).norm() - 1.0).abs() < 1e-8);
        }
        let (tracking, pairing) = symplectic_isomorphism_defect(&line, &tt, 10).unwrap();
        assert!(tracking < 1e-6, "tracking {tracking}");
        assert!(pairing < 1e-7, "pairing {pairing}");
    }

    #[test]
    fn trivial_subspace_has_identity_transverse_triple() {
        let sphere = catalog(TripleName::Sphere, 1.0);
        let empty = Subspace::new(&sphere, Vec::new(), 1e-2).unwrap();
        let tt = transverse_triple(&empty).unwrap();
        assert_eq!(tt.rank(), 2);
        assert_eq!(tt.frame(0), &DMatrix::identity(2, 2));
        assert_eq!(symplectic_complement(&empty).len(), 4);
    }

    #[test]
    fn sphere_riccati_operator_is_cotangent() {
        let sphere = catalog(TripleName::Sphere, 7.0);
        let l = Subspace::new(&sphere, vec![v(&[0.0, 0.0, 1.0, 0.0]), v(&[0.0, 0.0, 0.0, 1.0])], DEFAULT_FIELD_STEP).unwrap();
        for t in [0.5, 1.0, 2.5] {
            let s = riccati_operator(&l, t).unwrap();
            let cot = t.cos() / t.sin();
            assert!((s - DMatrix::identity(2, 2) * cot).amax() < 1e-9);
            assert!(riccati_residual(&l, t, 1e-4).unwrap() < 1e-6);
            assert!(asymmetry(&riccati_operator(&l, t).unwrap()) < 1e-8);
        }
        match riccati_operator(&l, PI) {
            Err(GeomError::Precondition(msg)) => assert!(msg.contains("3.14159265"), "{msg}"),
            other => panic!("expected precondition error, got {other:?}"),
        }
        let line = Subspace::new(&sphere, vec![v(&[0.0, 0.0, 1.0, 0.0])], DEFAULT_FIELD_STEP).unwrap();
        assert!(matches!(riccati_operator(&line, 1.0), Err(GeomError::Precondition(_))));
    }

    #[test]
    fn trace_riccati_check_cases() {
        let flat = catalog(TripleName::Flat, DEFAULT_WINDOW.1);
        let parallel = Subspace::new(&flat, vec![v(&[1.0, 0.0, 0.0, 0.0]), v(&[0.0, 1.0, 0.0, 0.0])], DEFAULT_FIELD_STEP).unwrap();
        let report = trace_riccati_check(&parallel, DEFAULT_SCAN_STEP, 1e-6).unwrap();
        assert!(report.applicable && report.holds);
        assert_eq!(report.max_norm, Some(0.0));

        let sphere = catalog(TripleName::Sphere, DEFAULT_WINDOW.1);
        let point = Subspace::new(&sphere, vec![v(&[0.0, 0.0, 1.0, 0.0]), v(&[0.0, 0.0, 0.0, 1.0])], DEFAULT_FIELD_STEP).unwrap();
        let report = trace_riccati_check(&point, DEFAULT_SCAN_STEP, 1e-6).unwrap();
        assert!(!report.applicable && report.holds);
        assert_eq!(report.singular_instants.len(), 11);
        assert!(report.curvature_nonnegative && report.trace_nonnegative);
    }

    #[test]
    fn wilking_splittings_of_catalog_lagrangians() {
        let w = DEFAULT_WINDOW.1;
        let mixed = catalog(TripleName::Mixed, w);
        let l = Subspace::new(&mixed, vec![v(&[0.0, 0.0, 1.0, 0.0]), v(&[0.0, 1.0, 0.0, 0.0])], DEFAULT_FIELD_STEP).unwrap();
        let d = wilking_decompose(&l, DEFAULT_SCAN_STEP, 1e-6).unwrap();
        assert_eq!((d.null_span.dim(), d.parallel_span.dim()), (1, 1));
        assert!(d.diagnostics.reconstruction_error < 1e-8);
        assert!(d.diagnostics.curvature_residual < 1e-8);
        assert!(d.diagnostics.a_tensor_residual < 1e-6);
        assert!(d.diagnostics.transverse_riccati.unwrap() < 1e-6);
        let null = d.null_span.value_matrix(1.0).unwrap();
        assert!(null[(1, 0)].abs() < 1e-9);

        let flat = catalog(TripleName::Flat, w);
        let l = Subspace::new(&flat, vec![v(&[1.0, 0.0, 0.0, 0.0]), v(&[0.0, 1.0, 0.0, 0.0])], DEFAULT_FIELD_STEP).unwrap();
        let d = wilking_decompose(&l, DEFAULT_SCAN_STEP, 1e-6).unwrap();
        assert_eq!((d.null_span.dim(), d.parallel_span.dim()), (0, 2));
        assert!(d.diagnostics.reconstruction_error < 1e-8);

        let sphere = catalog(TripleName::Sphere, w);
        let l = Subspace::new(&sphere, vec![v(&[0.0, 0.0, 1.0, 0.0]), v(&[0.0, 0.0, 0.0, 1.0])], DEFAULT_FIELD_STEP).unwrap();
        let d = wilking_decompose(&l, DEFAULT_SCAN_STEP, 1e-6).unwrap();
        assert_eq!((d.null_span.dim(), d.parallel_span.dim()), (2, 0));
        assert!(d.diagnostics.reconstruction_error < 1e-8);

        let negative = JacobiTriple::constant(-DMatrix::identity(2, 2), (0.0, 1.0)).unwrap();
        let l = Subspace::new(&negative, vec![v(&[1.0, 0.0, 0.0, 0.0]), v(&[0.0, 1.0, 0.0, 0.0])], 1e-2).unwrap();
        assert!(matches!(wilking_decompose(&l, 1e-2, 1e-6), Err(GeomError::Precondition(_))));
    }

    #[test]
    fn l_jacobi_and_holonomy_initial_conditions() {
        let flat = catalog(TripleName::Flat, 3.0);
        let e1 = v(&[1.0, 0.0]);
        let e2 = v(&[0.0, 1.0]);
        let fiber = l_jacobi_initial_conditions(&flat, &[e1.clone()], &DMatrix::zeros(1, 1), &[e2.clone()], 1e-2).unwrap();
        assert_eq!(fiber.basis(), &[v(&[1.0, 0.0, 0.0, 0.0]), v(&[0.0, 0.0, 0.0, 1.0])]);
        assert!(classify_subspace(&fiber, 1e-12).lagrangian);

        let point = l_jacobi_initial_conditions(&flat, &[], &DMatrix::zeros(0, 0), &[e1.clone(), e2.clone()], 1e-2).unwrap();
        assert!(point.value_matrix(0.0).unwrap().amax() == 0.0);

        let shape = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, -2.0]);
        let curved = l_jacobi_initial_conditions(&flat, &[e1.clone(), e2.clone()], &shape, &[], 1e-2).unwrap();
        assert!(classify_subspace(&curved, 1e-12).lagrangian);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, -2.0]);
        assert!(l_jacobi_initial_conditions(&flat, &[e1.clone(), e2.clone()], &bad, &[], 1e-2).is_err());
        assert!(l_jacobi_initial_conditions(&flat, &[e1.clone()], &DMatrix::zeros(1, 1), &[e1.clone()], 1e-2).is_err());

        let hol = holonomy_initial_conditions(&flat, &[e2.clone()], &DMatrix::zeros(1, 1), &DMatrix::zeros(2, 1), 1e-2).unwrap();
        for t in [0.0, 1.5, 3.0] {
            assert!((hol.fields()[0].value(t).unwrap() - &e2).amax() < 1e-14);
        }
        let a_star = DMatrix::from_column_slice(2, 1, &[0.7, 0.0]);
        let hol = holonomy_initial_conditions(&flat, &[e2.clone()], &DMatrix::from_element(1, 1, 0.3), &a_star, 1e-2).unwrap();
        assert_eq!(hol.basis()[0], v(&[0.0, 1.0, -0.7, -0.3]));
    }
}
