//! Finsler geodesics.
//!
//! Geodesics are critical points of the energy `∫ ½F²(γ, γ′)`. With
//! `L(x, v) = ½F²(x, v)` and `p = ∂L/∂v` (the Legendre map), the
//! Euler–Lagrange equations read
//!
//! ```text
//! g_v · a = ∂L/∂x − (∂p/∂x) · v
//! ```
//!
//! where `g_v = ∂p/∂v` is the fundamental tensor. The `v`-derivatives come
//! from the closed-form Randers expressions; the `x`-derivatives are central
//! differences with step [`X_STEP`]. The resulting second-order system is
//! integrated with classical fixed-step RK4.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, GeomError, Result};
use crate::linalg::spd_condition;
use crate::scene::Scene;

/// Central-difference step for spatial derivatives of `L` and `p`.
pub const X_STEP: f64 = 1e-5;
/// Default RK4 step.
pub const DEFAULT_STEP: f64 = 1e-3;
/// Geodesic-variation width used by the Jacobi-operator estimator.
pub const JACOBI_VARIATION: f64 = 1e-4;
/// Time step of the differences in `t` used by the Jacobi-operator estimator.
pub const JACOBI_TIME_STEP: f64 = 1e-3;
/// Flow-Jacobian difference step of the Liouville check.
pub const LIOUVILLE_STEP: f64 = 1e-5;
/// Largest admissible condition number of `g_v`.
pub const MAX_CONDITION: f64 = 1e10;

/// A point of `TM ∖ {0}` in chart coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub x: DVector<f64>,
    pub v: DVector<f64>,
}

impl PhaseState {
    pub fn new(x: DVector<f64>, v: DVector<f64>) -> Self {
        Self { x, v }
    }

    pub fn from_slices(x: &[f64], v: &[f64]) -> Self {
        Self::new(DVector::from_column_slice(x), DVector::from_column_slice(v))
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.x.len() != dim || self.v.len() != dim {
            return invalid(format!("phase state must have dimension {dim}"));
        }
        if self.x.iter().chain(self.v.iter()).any(|c| !c.is_finite()) {
            return invalid("non-finite phase state");
        }
        if self.v.iter().all(|&c| c == 0.0) {
            return Err(GeomError::Domain("initial velocity must be nonzero".into()));
        }
        Ok(())
    }

    fn as_vector(&self) -> DVector<f64> {
        let n = self.x.len();
        DVector::from_fn(2 * n, |i, _| if i < n { self.x[i] } else { self.v[i - n] })
    }

    fn from_vector(z: &DVector<f64>) -> Self {
        let n = z.len() / 2;
        Self::new(z.rows(0, n).into_owned(), z.rows(n, n).into_owned())
    }
}

/// A time-sampled geodesic. Torus positions are kept in cover coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<PhaseState>,
    /// Set when integration stopped early because the curve left the chart.
    pub truncated: bool,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, states: Vec<PhaseState>) -> Self {
        assert_eq!(times.len(), states.len(), "times and states must have equal length");
        Self { times, states, truncated: false }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, |s| s.x.len())
    }

    pub fn last(&self) -> &PhaseState {
        self.states.last().expect("trajectory is non-empty")
    }
}

/// Euler–Lagrange acceleration at `(x, v)`.
pub fn geodesic_accel(scene: &Scene, x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    let d = scene.datum(x)?;
    let g = d.fundamental_tensor(v)?;
    let n = scene.dim();
    let mut rhs = DVector::zeros(n);
    let mut xp = x.clone();
    let mut xm = x.clone();
    for i in 0..n {
        xp[i] = x[i] + X_STEP;
        xm[i] = x[i] - X_STEP;
        let dp = scene.datum(&xp)?;
        let dm = scene.datum(&xm)?;
        let (fp, fm) = (dp.norm(v), dm.norm(v));
        rhs[i] += 0.25 * (fp * fp - fm * fm) / X_STEP;
        let dpdx = (dp.legendre(v)? - dm.legendre(v)?) / (2.0 * X_STEP);
        rhs -= dpdx * v[i];
        xp[i] = x[i];
        xm[i] = x[i];
    }
    let cond = spd_condition(&g);
    if cond > MAX_CONDITION {
        return Err(GeomError::Numeric(format!("fundamental tensor ill-conditioned (cond = {cond:.3e})")));
    }
    let chol = g
        .cholesky()
        .ok_or_else(|| GeomError::Numeric("fundamental tensor is not positive definite".into()))?;
    Ok(chol.solve(&rhs))
}

fn phase_rhs(scene: &Scene, z: &DVector<f64>) -> Result<DVector<f64>> {
    let n = z.len() / 2;
    let x = z.rows(0, n).into_owned();
    let v = z.rows(n, n).into_owned();
    let a = geodesic_accel(scene, &x, &v)?;
    Ok(DVector::from_fn(2 * n, |i, _| if i < n { v[i] } else { a[i - n] }))
}

fn rk4_step(scene: &Scene, z: &DVector<f64>, h: f64) -> Result<DVector<f64>> {
    let k1 = phase_rhs(scene, z)?;
    let k2 = phase_rhs(scene, &(z + &k1 * (0.5 * h)))?;
    let k3 = phase_rhs(scene, &(z + &k2 * (0.5 * h)))?;
    let k4 = phase_rhs(scene, &(z + &k3 * h))?;
    Ok(z + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

fn step_plan(duration: f64, step: f64) -> Result<(usize, f64)> {
    if !(step > 0.0) || !step.is_finite() {
        return invalid(format!("step must be positive and finite, got {step}"));
    }
    if !duration.is_finite() {
        return invalid("duration must be finite");
    }
    if duration == 0.0 {
        return Ok((0, 0.0));
    }
    let count = ((duration.abs() / step) - 1e-9).ceil().max(1.0) as usize;
    Ok((count, duration / count as f64))
}

/// RK4 integration of the geodesic spray over `[0, duration]` (or
/// `[duration, 0]` when negative). The step is shrunk slightly, if needed, so
/// that the last sample lands exactly on `duration`.
pub fn integrate_geodesic(scene: &Scene, s0: &PhaseState, duration: f64, step: f64) -> Result<Trajectory> {
    s0.validate(scene.dim())?;
    let (count, h) = step_plan(duration, step)?;
    let mut times = Vec::with_capacity(count + 1);
    let mut states = Vec::with_capacity(count + 1);
    let mut z = s0.as_vector();
    times.push(0.0);
    states.push(s0.clone());
    let mut truncated = false;
    for k in 1..=count {
        match rk4_step(scene, &z, h) {
            Ok(next) => z = next,
            Err(GeomError::Domain(msg)) => {
                log::warn!("geodesic left the chart at t = {}: {msg}", times[k - 1]);
                truncated = true;
                break;
            }
            Err(e) => return Err(e),
        }
        if z.iter().any(|c| !c.is_finite()) {
            return Err(GeomError::Numeric(format!("geodesic blew up at t = {}", k as f64 * h)));
        }
        times.push(if k == count { duration } else { k as f64 * h });
        states.push(PhaseState::from_vector(&z));
    }
    Ok(Trajectory { times, states, truncated })
}

/// Endpoint of the geodesic flow after `duration`, without storing samples.
/// Leaving the chart is an error here.
pub fn geodesic_flow(scene: &Scene, s0: &PhaseState, duration: f64, step: f64) -> Result<PhaseState> {
    s0.validate(scene.dim())?;
    let (count, h) = step_plan(duration, step)?;
    let mut z = s0.as_vector();
    for _ in 0..count {
        z = rk4_step(scene, &z, h)?;
        if z.iter().any(|c| !c.is_finite()) {
            return Err(GeomError::Numeric("geodesic flow blew up".into()));
        }
    }
    Ok(PhaseState::from_vector(&z))
}

/// Geodesic of a Randers metric whose wind is Killing for `h`: the
/// `h`-geodesic with initial velocity `v₀ − F(v₀) w` pushed along the wind
/// flow, `β(t) = Φʷ_{F(v₀) t}(γ(t))`.
pub fn zermelo_geodesic(scene: &Scene, s0: &PhaseState, duration: f64, step: f64) -> Result<Trajectory> {
    if !scene.has_killing_wind() {
        return Err(GeomError::Precondition(format!("wind of scene {} is not a Killing field", scene.name())));
    }
    s0.validate(scene.dim())?;
    let speed = scene.norm(&s0.x, &s0.v)?;
    let u0 = &s0.v - scene.wind_at(&s0.x)? * speed;
    let riemannian = scene.without_wind();
    let base = if u0.iter().all(|&c| c == 0.0) {
        // Pure drift: the h-geodesic is constant.
        let (count, h) = step_plan(duration, step)?;
        let times = (0..=count).map(|k| if k == count { duration } else { k as f64 * h }).collect::<Vec<_>>();
        let states = times.iter().map(|_| PhaseState::new(s0.x.clone(), u0.clone())).collect();
        Trajectory::new(times, states)
    } else {
        integrate_geodesic(&riemannian, &PhaseState::new(s0.x.clone(), u0), duration, step)?
    };
    let flow = |x: &DVector<f64>, s: f64| {
        scene
            .wind_flow(x, s)
            .ok_or_else(|| GeomError::Precondition(format!("scene {} has no closed-form wind flow", scene.name())))
    };
    let mut states = Vec::with_capacity(base.len());
    for (t, st) in base.times.iter().zip(&base.states) {
        let s = speed * t;
        let pos = flow(&st.x, s)?;
        let eps = 1e-6;
        let push = (flow(&(&st.x + &st.v * eps), s)? - flow(&(&st.x - &st.v * eps), s)?) / (2.0 * eps);
        let vel = push + scene.wind_at(&pos)? * speed;
        states.push(PhaseState::new(pos, vel));
    }
    Ok(Trajectory { times: base.times, states, truncated: base.truncated })
}

/// Position, velocity, variation field and its derivative at time `t`, plus
/// the estimated Jacobi operator applied to the variation field.
#[derive(Debug, Clone)]
pub struct JacobiProbe {
    pub position: DVector<f64>,
    pub velocity: DVector<f64>,
    pub field: DVector<f64>,
    pub field_derivative: DVector<f64>,
    pub curvature_term: DVector<f64>,
    pub variation: f64,
    pub time_step: f64,
}

/// Jacobi field of the variation through geodesics starting at `x ± εu` with
/// the same initial velocity, evaluated at time `t`.
///
/// `J′` is the central difference of the velocities of the varied geodesics
/// and `J″` a central difference of `J′` in time; the operator estimate is
/// `R(J(t)) = −J″(t)` in chart coordinates.
pub fn probe_jacobi(scene: &Scene, s: &PhaseState, u: &DVector<f64>, t: f64) -> Result<JacobiProbe> {
    s.validate(scene.dim())?;
    if u.len() != scene.dim() || u.iter().all(|&c| c == 0.0) {
        return Err(GeomError::Domain("variation direction must be a nonzero vector of the scene dimension".into()));
    }
    let eps = JACOBI_VARIATION;
    let dt = JACOBI_TIME_STEP;
    let step = DEFAULT_STEP;
    let three_samples = |start: &PhaseState| -> Result<[PhaseState; 3]> {
        let a = geodesic_flow(scene, start, t - dt, step)?;
        let b = geodesic_flow(scene, &a, dt, dt)?;
        let c = geodesic_flow(scene, &b, dt, dt)?;
        Ok([a, b, c])
    };
    let plus = three_samples(&PhaseState::new(&s.x + u * eps, s.v.clone()))?;
    let minus = three_samples(&PhaseState::new(&s.x - u * eps, s.v.clone()))?;
    let center = three_samples(s)?;
    let jdot = |k: usize| (&plus[k].v - &minus[k].v) / (2.0 * eps);
    let field = (&plus[1].x - &minus[1].x) / (2.0 * eps);
    let jddot = (jdot(2) - jdot(0)) / (2.0 * dt);
    Ok(JacobiProbe {
        position: center[1].x.clone(),
        velocity: center[1].v.clone(),
        field,
        field_derivative: jdot(1),
        curvature_term: -jddot,
        variation: eps,
        time_step: dt,
    })
}

/// Estimate of `R_{γ′(t)}(J(t))` for the variation field of [`probe_jacobi`].
pub fn estimate_jacobi_operator(scene: &Scene, s: &PhaseState, u: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
    Ok(probe_jacobi(scene, s, u, t)?.curvature_term)
}

/// Flag curvature `K(v, J) = g_v(R_v J, J) / (g_v(v,v) g_v(J,J) − g_v(v,J)²)`
/// at time `t` along the geodesic from `s`, with flag pole `v = γ′(t)` and
/// transverse edge the variation field `J(t)` (equal to `u` at `t = 0`).
pub fn flag_curvature(scene: &Scene, s: &PhaseState, u: &DVector<f64>, t: f64) -> Result<f64> {
    let probe = probe_jacobi(scene, s, u, t)?;
    let d = scene.datum(&probe.position)?;
    let g = d.fundamental_tensor(&probe.velocity)?;
    let v = &probe.velocity;
    let j = &probe.field;
    let gvv = v.dot(&(&g * v));
    let gjj = j.dot(&(&g * j));
    let gvj = v.dot(&(&g * j));
    let denom = gvv * gjj - gvj * gvj;
    if denom <= 1e-10 {
        return Err(GeomError::Domain(format!("degenerate flag: area form {denom:.3e}")));
    }
    Ok(probe.curvature_term.dot(&(&g * j)) / denom)
}

/// Ratio `det g(Φ_T(z)) · |det DΦ_T(z)| / det g(z)` for the Legendre-pulled
/// back volume `det(g_v) dx dv`, which the geodesic flow preserves.
pub fn liouville_volume_check(scene: &Scene, s0: &PhaseState, duration: f64) -> Result<f64> {
    liouville_volume_check_with_step(scene, s0, duration, LIOUVILLE_STEP)
}

pub fn liouville_volume_check_with_step(scene: &Scene, s0: &PhaseState, duration: f64, fd_step: f64) -> Result<f64> {
    s0.validate(scene.dim())?;
    let n = scene.dim();
    let z0 = s0.as_vector();
    let end = geodesic_flow(scene, s0, duration, DEFAULT_STEP)?;
    let mut jac = DMatrix::zeros(2 * n, 2 * n);
    for k in 0..2 * n {
        let mut zp = z0.clone();
        let mut zm = z0.clone();
        zp[k] += fd_step;
        zm[k] -= fd_step;
        let ep = geodesic_flow(scene, &PhaseState::from_vector(&zp), duration, DEFAULT_STEP)?.as_vector();
        let em = geodesic_flow(scene, &PhaseState::from_vector(&zm), duration, DEFAULT_STEP)?.as_vector();
        jac.set_column(k, &((ep - em) / (2.0 * fd_step)));
    }
    let g0 = scene.datum(&s0.x)?.fundamental_tensor(&s0.v)?.determinant();
    let g1 = scene.datum(&end.x)?.fundamental_tensor(&end.v)?.determinant();
    Ok(g1 * jac.determinant().abs() / g0)
}
