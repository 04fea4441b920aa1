//! Finsler submersions given by coordinate projections.
//!
//! A vector is horizontal when it is `g_v`-orthogonal to the fiber through
//! its foot point. Over a base vector `b` the horizontal lift is the unique
//! horizontal vector projecting to `b`; it is also the minimizer of `F` on the
//! affine fiber `dρ⁻¹(b)`, so for a Finsler submersion its norm equals the
//! base norm of `b`.

use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;

use crate::error::{invalid, GeomError, Result};
use crate::geodesic::{integrate_geodesic, PhaseState, Trajectory};
use crate::scene::{Scene, SubmersionSpec, Topology};

/// Iteration cap of the lift solver.
pub const LIFT_MAX_ITERATIONS: usize = 100;
/// Largest deviation allowed between a lifted geodesic's projection and its
/// base curve.
pub const LIFT_TRACKING_TOLERANCE: f64 = 1e-5;
/// Default number of indicatrix samples per angular direction.
pub const DEFAULT_BALL_SAMPLES: usize = 256;

fn spec(scene: &Scene) -> Result<&SubmersionSpec> {
    scene
        .submersion()
        .ok_or_else(|| GeomError::Precondition(format!("scene {} carries no submersion", scene.name())))
}

/// Basis of `ker dρ` at `x` (constant for coordinate projections).
pub fn vertical_basis(scene: &Scene, x: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
    let spec = spec(scene)?;
    scene.check_point(x)?;
    Ok(spec.vertical_basis(scene.dim()))
}

/// Largest `|g_v(v, e)| / F(v)²` over the vertical basis vectors `e`.
pub fn horizontality_defect(scene: &Scene, s: &PhaseState) -> Result<f64> {
    let spec = spec(scene)?;
    let d = scene.datum(&s.x)?;
    let p = d.legendre(&s.v)?;
    let f = d.norm(&s.v);
    let k = spec.base_dim();
    Ok((k..scene.dim()).map(|i| p[i].abs()).fold(0.0, f64::max) / (f * f))
}

/// `true` iff `max_e |g_v(v, e)| ≤ tol · F(v)²` over the vertical basis.
pub fn is_horizontal(scene: &Scene, s: &PhaseState, tol: f64) -> Result<bool> {
    Ok(horizontality_defect(scene, s)? <= tol)
}

/// Horizontal lift of the base vector `b` at the total-space point `x`.
///
/// The vertical components `z` of `v = (b, z)` solve `p(v)_V = 0`, the
/// vertical part of the Legendre map. Damped Newton with the vertical block of
/// `g_v` as Jacobian, started from the `h`-orthogonal lift.
pub fn horizontal_lift_vector(scene: &Scene, x: &DVector<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let spec = spec(scene)?;
    let n = scene.dim();
    let k = spec.base_dim();
    if b.len() != k {
        return invalid(format!("base vector must have dimension {k}"));
    }
    if b.iter().any(|c| !c.is_finite()) {
        return invalid("non-finite base vector");
    }
    if b.iter().all(|&c| c == 0.0) {
        return Err(GeomError::Domain("cannot lift the zero vector".into()));
    }
    let d = scene.datum(x)?;
    let m = n - k;
    let assemble = |z: &DVector<f64>| DVector::from_fn(n, |i, _| if i < k { b[i] } else { z[i - k] });
    if m == 0 {
        return Ok(assemble(&DVector::zeros(0)));
    }
    let h = d.h();
    let h_vv = h.view((k, k), (m, m)).into_owned();
    let h_vb = h.view((k, 0), (m, k)).into_owned();
    let mut z = h_vv
        .clone()
        .cholesky()
        .ok_or_else(|| GeomError::Numeric("vertical block of h is not positive definite".into()))?
        .solve(&(-(&h_vb * b)));
    let residual = |z: &DVector<f64>| -> Result<(DVector<f64>, f64)> {
        let v = assemble(z);
        let p = d.legendre(&v)?;
        let f = d.norm(&v);
        let r = p.rows(k, m).into_owned();
        let scaled = r.amax() / (f * f);
        Ok((r, scaled))
    };
    let (mut r, mut err) = residual(&z)?;
    for _ in 0..LIFT_MAX_ITERATIONS {
        if err <= 1e-14 {
            return Ok(assemble(&z));
        }
        let g = d.fundamental_tensor(&assemble(&z))?;
        let g_vv: DMatrix<f64> = g.view((k, k), (m, m)).into_owned();
        let dz = g_vv
            .cholesky()
            .ok_or_else(|| GeomError::Numeric("vertical block of g_v is not positive definite".into()))?
            .solve(&(-&r));
        let mut t = 1.0;
        loop {
            let trial = &z + &dz * t;
            let (tr, terr) = residual(&trial)?;
            if terr < err || t < 1e-6 {
                z = trial;
                r = tr;
                err = terr;
                break;
            }
            t *= 0.5;
        }
    }
    if err <= 1e-12 {
        return Ok(assemble(&z));
    }
    Err(GeomError::Numeric(format!(
        "horizontal lift did not converge in {LIFT_MAX_ITERATIONS} iterations (residual {err:.3e})"
    )))
}

/// Lift of a base geodesic starting at `ρ(x0)`: the total-space geodesic with
/// the horizontal lift of the base initial velocity, sampled on the base time
/// grid. Fails when the projection drifts from the base curve by more than
/// [`LIFT_TRACKING_TOLERANCE`].
pub fn horizontal_lift_geodesic(scene: &Scene, x0: &DVector<f64>, base: &Trajectory) -> Result<Trajectory> {
    let spec = spec(scene)?;
    if base.len() < 2 {
        return invalid("base trajectory needs at least two samples");
    }
    if base.dim() != spec.base_dim() {
        return invalid(format!("base trajectory must have dimension {}", spec.base_dim()));
    }
    let start = &base.states[0];
    let diff = spec.project(x0) - &start.x;
    let gap = match spec.base().topology() {
        Topology::Torus { periods } => {
            diff.iter().zip(periods).map(|(c, p)| (c - p * (c / p).round()).abs()).fold(0.0, f64::max)
        }
        Topology::Euclidean => diff.amax(),
    };
    if gap > 1e-9 {
        return invalid("base trajectory does not start at the projection of x0");
    }
    let v0 = horizontal_lift_vector(scene, x0, &start.v)?;
    let t0 = base.times[0];
    let duration = base.times[base.len() - 1] - t0;
    let step = (duration / (base.len() - 1) as f64).abs();
    let mut lifted = integrate_geodesic(scene, &PhaseState::new(x0.clone(), v0), duration, step)?;
    for t in lifted.times.iter_mut() {
        *t += t0;
    }
    let mut worst = 0.0_f64;
    for (st, bs) in lifted.states.iter().zip(&base.states) {
        let diff = spec.project(&st.x) - &bs.x;
        worst = worst.max(diff.amax());
    }
    if worst > LIFT_TRACKING_TOLERANCE {
        return Err(GeomError::Numeric(format!(
            "lifted geodesic drifts from its base curve by {worst:.3e} (step {step})"
        )));
    }
    Ok(lifted)
}

/// Unit vectors on the Euclidean sphere `S^{n−1}`: `samples` equally spaced
/// angles for `n = 2`, a latitude–longitude grid with `samples` azimuths and
/// `samples/2 + 1` polar angles for `n = 3`.
fn sphere_samples(n: usize, samples: usize) -> Result<Vec<DVector<f64>>> {
    match n {
        1 => Ok(vec![DVector::from_element(1, 1.0), DVector::from_element(1, -1.0)]),
        2 => Ok((0..samples)
            .map(|i| {
                let a = 2.0 * PI * i as f64 / samples as f64;
                DVector::from_vec(vec![a.cos(), a.sin()])
            })
            .collect()),
        3 => {
            let polar = samples / 2 + 1;
            let mut out = Vec::with_capacity(samples * polar);
            for j in 0..polar {
                let th = PI * j as f64 / (polar - 1) as f64;
                let azimuths = if j == 0 || j + 1 == polar { 1 } else { samples };
                for i in 0..azimuths {
                    let a = 2.0 * PI * i as f64 / samples as f64;
                    out.push(DVector::from_vec(vec![th.sin() * a.cos(), th.sin() * a.sin(), th.cos()]));
                }
            }
            Ok(out)
        }
        _ => invalid(format!("indicatrix sampling supports dimensions 1 to 3, got {n}")),
    }
}

fn base_directions(k: usize, samples: usize) -> Result<Vec<DVector<f64>>> {
    match k {
        1 | 2 => sphere_samples(k, samples),
        _ => invalid(format!("ball check supports base dimensions 1 and 2, got {k}")),
    }
}

fn support(points: &[DVector<f64>], dir: &DVector<f64>) -> f64 {
    points.iter().map(|p| p.dot(dir)).fold(f64::NEG_INFINITY, f64::max)
}

/// Deviation between `dρ({F ≤ 1})` and the base unit ball `{F* ≤ 1}` at `x`.
///
/// Both indicatrices are sampled as `d / F(d)` over sphere directions `d`;
/// the projected total-space samples and the base samples are compared
/// through their support functions on the base direction grid. For convex
/// bodies the largest support-function gap is their Hausdorff distance.
pub fn submersion_ball_check(scene: &Scene, x: &DVector<f64>, samples: usize) -> Result<f64> {
    let spec = spec(scene)?;
    if samples < 16 {
        return invalid(format!("ball check needs at least 16 samples, got {samples}"));
    }
    let total = scene.datum(x)?;
    let base_scene = spec.base();
    let base = base_scene.datum(&spec.project(x))?;
    let projected: Vec<DVector<f64>> = sphere_samples(scene.dim(), samples)?
        .into_iter()
        .map(|d| spec.project_vector(&(&d / total.norm(&d))))
        .collect();
    let directions = base_directions(spec.base_dim(), samples)?;
    let base_points: Vec<DVector<f64>> = directions.iter().map(|d| d / base.norm(d)).collect();
    Ok(directions
        .iter()
        .map(|dir| (support(&projected, dir) - support(&base_points, dir)).abs())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{scenario, ScenarioName};
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_vec(xs.to_vec())
    }

    #[test]
    fn cone_generators_are_horizontal_lifts() {
        let cone = scenario(ScenarioName::ConeR2);
        let x = v(&[0.3, -1.2]);
        let f1 = horizontal_lift_vector(&cone, &x, &v(&[1.0])).unwrap();
        let f2 = horizontal_lift_vector(&cone, &x, &v(&[-1.0])).unwrap();
        assert!((&f1 - v(&[1.0, 0.5])).amax() < 1e-12);
        assert!((&f2 - v(&[-1.0, 0.5])).amax() < 1e-12);
        assert!((-&f1 - &f2).amax() > 0.5);
        assert!(is_horizontal(&cone, &PhaseState::new(x.clone(), f1), 1e-10).unwrap());
        assert!(!is_horizontal(&cone, &PhaseState::new(x.clone(), v(&[0.0, 1.0])), 1e-3).unwrap());
        let e = scenario(ScenarioName::Euclidean);
        assert!(matches!(is_horizontal(&e, &PhaseState::new(x.clone(), v(&[1.0, 0.0])), 1e-8), Err(GeomError::Precondition(_))));
        assert!(matches!(horizontal_lift_vector(&cone, &x, &v(&[0.0])), Err(GeomError::Domain(_))));
    }

    #[test]
    fn zero_wind_lift_is_h_orthogonal() {
        let h = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, -0.4, 0.3, 1.5, 0.2, -0.4, 0.2, 1.0]);
        let scene = Scene::constant("skew", h.clone(), DVector::zeros(3), Some(SubmersionSpec::new(Scene::euclidean(2)))).unwrap();
        let lift = horizontal_lift_vector(&scene, &v(&[0.0, 0.0, 0.0]), &v(&[0.7, -0.2])).unwrap();
        let e3 = v(&[0.0, 0.0, 1.0]);
        assert!(lift.dot(&(&h * e3)).abs() < 1e-12);
        assert_eq!(lift.rows(0, 2).into_owned(), v(&[0.7, -0.2]));
    }

    #[test]
    fn sin_wind_lift_matches_golden_velocity() {
        let s = scenario(ScenarioName::SinWindR3);
        let lift = horizontal_lift_vector(&s, &v(&[0.0, 0.0, 0.0]), &v(&[1.0, 0.0])).unwrap();
        assert!((lift - v(&[1.0, 0.0, 0.25])).amax() < 1e-12);
    }

    #[test]
    fn lifted_geodesics_track_their_base() {
        let cone = scenario(ScenarioName::ConeR2);
        let base_scene = cone.submersion().unwrap().base().clone();
        let base = integrate_geodesic(&base_scene, &PhaseState::from_slices(&[0.0], &[1.0]), 3.0, 1e-3).unwrap();
        let lifted = horizontal_lift_geodesic(&cone, &v(&[0.0, 0.0]), &base).unwrap();
        assert!((&lifted.last().x - v(&[3.0, 1.5])).amax() < 1e-10);

        let s = scenario(ScenarioName::SinWindR3);
        let base_scene = s.submersion().unwrap().base().clone();
        let base = integrate_geodesic(&base_scene, &PhaseState::from_slices(&[0.0, 0.0], &[1.0, 0.0]), 2.0 * PI, 1e-3).unwrap();
        let lifted = horizontal_lift_geodesic(&s, &v(&[0.0, 0.0, 0.0]), &base).unwrap();
        for (t, st) in lifted.times.iter().zip(&lifted.states) {
            let golden = v(&[*t, 0.0, 3.0 * t / 8.0 - (2.0 * t).sin() / 16.0]);
            assert!((&st.x - golden).amax() <= 1e-5);
        }

        let product = Scene::constant("product", DMatrix::identity(2, 2), DVector::zeros(2), Some(SubmersionSpec::new(Scene::euclidean(1)))).unwrap();
        let base = integrate_geodesic(&Scene::euclidean(1), &PhaseState::from_slices(&[0.5], &[-2.0]), 1.0, 1e-2).unwrap();
        let lifted = horizontal_lift_geodesic(&product, &v(&[0.5, 3.0]), &base).unwrap();
        assert!((&lifted.last().x - v(&[-1.5, 3.0])).amax() < 1e-12);
        assert!(horizontal_lift_geodesic(&product, &v(&[0.4, 3.0]), &base).is_err());
    }

    #[test]
    fn ball_checks() {
        let cone = scenario(ScenarioName::ConeR2);
        assert!(submersion_ball_check(&cone, &v(&[0.2, 0.1]), 256).unwrap() <= 1e-3);
        let s = scenario(ScenarioName::SinWindR3);
        assert!(submersion_ball_check(&s, &v(&[0.0, 0.0, 0.0]), 256).unwrap() <= 1e-3);
        let product = Scene::constant("product", DMatrix::identity(3, 3), DVector::zeros(3), Some(SubmersionSpec::new(Scene::euclidean(2)))).unwrap();
        assert!(submersion_ball_check(&product, &v(&[1.0, 2.0, 3.0]), 64).unwrap() <= 1e-6);
        assert!(submersion_ball_check(&cone, &v(&[0.0, 0.0]), 8).is_err());
        // Negative control: a base norm that is too small is detected.
        let wrong = Scene::constant("wrong", DMatrix::identity(2, 2), v(&[0.0, 0.5]), Some(SubmersionSpec::new(Scene::constant("half", DMatrix::identity(1, 1) * 4.0, DVector::zeros(1), None).unwrap()))).unwrap();
        assert!(submersion_ball_check(&wrong, &v(&[0.0, 0.0]), 64).unwrap() > 0.4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn lift_round_trip(a in 0.0f64..(2.0 * PI), r in 0.1f64..3.0, x in proptest::collection::vec(-3.0f64..3.0, 3)) {
            let s = scenario(ScenarioName::SinWindR3);
            let x = DVector::from_vec(x);
            let b = v(&[r * a.cos(), r * a.sin()]);
            let lift = horizontal_lift_vector(&s, &x, &b).unwrap();
            prop_assert!((lift.rows(0, 2).into_owned() - &b).amax() <= 1e-12);
            prop_assert!(is_horizontal(&s, &PhaseState::new(x.clone(), lift.clone()), 1e-10).unwrap());
            prop_assert!((s.norm(&x, &lift).unwrap() - b.norm()).abs() <= 1e-9 * (1.0 + r));
        }

        #[test]
        fn horizontality_is_preserved(a in 0.0f64..(2.0 * PI), x1 in -2.0f64..2.0) {
            let s = scenario(ScenarioName::SinWindR3);
            let x0 = v(&[x1, 0.0, 0.0]);
            let v0 = horizontal_lift_vector(&s, &x0, &v(&[a.cos(), a.sin()])).unwrap();
            let tr = integrate_geodesic(&s, &PhaseState::new(x0, v0), 3.0, 1e-2).unwrap();
            for st in &tr.states {
                prop_assert!(is_horizontal(&s, st, 1e-6).unwrap());
            }
        }
    }
}
