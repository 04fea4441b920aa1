//! Chart-based manifolds with metric and wind fields.
//!
//! A [`Scene`] is `ℝⁿ` (or a torus quotient of it, handled by wrap-on-read)
//! with built-in analytic evaluators for `h(x)` and `w(x)`. Geodesics on a
//! torus are integrated in the covering space; [`Scene::wrap`] is applied
//! whenever fields are read.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{domain, invalid, GeomError, Result};
use crate::geodesic::Trajectory;
use crate::minkowski::RandersDatum;

/// Polar-chart margin kept away from the poles of the round sphere.
pub const SPHERE_POLE_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub enum Topology {
    Euclidean,
    /// `ℝⁿ / (p₁ℤ × ⋯ × pₙℤ)`.
    Torus { periods: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
enum FieldModel {
    Constant { h: DMatrix<f64>, w: DVector<f64> },
    /// `h = I₃`, `w(x) = (0, 0, amp·sin²(x₁) + offset)`.
    SinWind { amp: f64, offset: f64 },
    /// Round unit sphere in polar coordinates `(θ, φ)`, `h = diag(1, sin²θ)`.
    Sphere2,
}

/// Coordinate projection `ρ(x) = (x₁, …, x_k)` onto a base scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SubmersionSpec {
    base: Box<Scene>,
}

impl SubmersionSpec {
    pub fn new(base: Scene) -> Self {
        Self { base: Box::new(base) }
    }

    pub fn base_dim(&self) -> usize {
        self.base.dim()
    }

    pub fn base(&self) -> &Scene {
        &self.base
    }

    /// `ρ(x)`.
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        x.rows(0, self.base_dim()).into_owned()
    }

    /// `dρ(v)`; the same coordinate projection on tangent vectors.
    pub fn project_vector(&self, v: &DVector<f64>) -> DVector<f64> {
        v.rows(0, self.base_dim()).into_owned()
    }

    /// Basis of `ker dρ`: the trailing coordinate axes.
    pub fn vertical_basis(&self, total_dim: usize) -> Vec<DVector<f64>> {
        (self.base_dim()..total_dim)
            .map(|i| DVector::from_fn(total_dim, |k, _| if k == i { 1.0 } else { 0.0 }))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    name: String,
    dim: usize,
    topology: Topology,
    fields: FieldModel,
    submersion: Option<SubmersionSpec>,
}

/// Names accepted by [`scenario`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioName {
    ConeR2,
    Torus,
    SinWindR3,
    Euclidean,
    Sphere2,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 5] = [
        ScenarioName::ConeR2,
        ScenarioName::Torus,
        ScenarioName::SinWindR3,
        ScenarioName::Euclidean,
        ScenarioName::Sphere2,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioName::ConeR2 => "cone_r2",
            ScenarioName::Torus => "torus",
            ScenarioName::SinWindR3 => "sin_wind_r3",
            ScenarioName::Euclidean => "euclidean",
            ScenarioName::Sphere2 => "sphere2",
        }
    }

    pub fn valid_names() -> String {
        Self::ALL.iter().map(|n| n.as_str()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioName {
    type Err = GeomError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| GeomError::InvalidInput(format!("unknown scenario '{s}'; valid names: {}", Self::valid_names())))
    }
}

/// Numeric overrides for registry scenarios.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioParams {
    /// Vertical wind for `cone_r2` / `torus` (default ½).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wind: Option<f64>,
    /// Dimension of `euclidean` (default 2).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// `sin_wind_r3` amplitude of the `sin²` term (default ¼).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amp: Option<f64>,
    /// `sin_wind_r3` constant wind offset (default ¼).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<f64>,
}

/// The registry scene with default parameters.
pub fn scenario(name: ScenarioName) -> Scene {
    scenario_with(name, &ScenarioParams::default()).expect("default parameters are valid")
}

/// Look a scenario up by its string name.
pub fn scenario_by_name(name: &str) -> Result<Scene> {
    Ok(scenario(name.parse()?))
}

pub fn scenario_with(name: ScenarioName, params: &ScenarioParams) -> Result<Scene> {
    let reject = |field: &str| invalid(format!("parameter '{field}' does not apply to scenario {name}"));
    let finite = |field: &str, v: f64| -> Result<f64> {
        if v.is_finite() {
            Ok(v)
        } else {
            invalid(format!("parameter '{field}' must be finite"))
        }
    };
    match name {
        ScenarioName::ConeR2 | ScenarioName::Torus => {
            if params.n.is_some() {
                return reject("n");
            }
            if params.amp.is_some() {
                return reject("amp");
            }
            if params.offset.is_some() {
                return reject("offset");
            }
            let wind = finite("wind", params.wind.unwrap_or(0.5))?;
            if name == ScenarioName::ConeR2 {
                Scene::cone(wind)
            } else {
                Scene::torus_cone(wind)
            }
        }
        ScenarioName::SinWindR3 => {
            if params.n.is_some() {
                return reject("n");
            }
            if params.wind.is_some() {
                return reject("wind");
            }
            let amp = finite("amp", params.amp.unwrap_or(0.25))?;
            let offset = finite("offset", params.offset.unwrap_or(0.25))?;
            Scene::sin_wind(amp, offset)
        }
        ScenarioName::Euclidean => {
            if params.wind.is_some() {
                return reject("wind");
            }
            if params.amp.is_some() {
                return reject("amp");
            }
            if params.offset.is_some() {
                return reject("offset");
            }
            let n = params.n.unwrap_or(2);
            if n == 0 || n > 64 {
                return invalid("parameter 'n' must lie in 1..=64");
            }
            Ok(Scene::euclidean(n))
        }
        ScenarioName::Sphere2 => {
            if params != &ScenarioParams::default() {
                return invalid("scenario sphere2 takes no parameters");
            }
            Ok(Scene::sphere2())
        }
    }
}

impl Scene {
    /// Flat `ℝⁿ` with zero wind.
    pub fn euclidean(n: usize) -> Scene {
        Scene {
            name: "euclidean".into(),
            dim: n,
            topology: Topology::Euclidean,
            fields: FieldModel::Constant { h: DMatrix::identity(n, n), w: DVector::zeros(n) },
            submersion: None,
        }
    }

    /// Constant Zermelo data on `ℝⁿ`, optionally with a submersion.
    pub fn constant(name: &str, h: DMatrix<f64>, w: DVector<f64>, submersion: Option<SubmersionSpec>) -> Result<Scene> {
        RandersDatum::new(h.clone(), w.clone())?;
        let dim = w.len();
        let scene = Scene {
            name: name.into(),
            dim,
            topology: Topology::Euclidean,
            fields: FieldModel::Constant { h, w },
            submersion,
        };
        scene.check_submersion()?;
        Ok(scene)
    }

    fn cone(wind: f64) -> Result<Scene> {
        let mut s = Scene::constant(
            "cone_r2",
            DMatrix::identity(2, 2),
            DVector::from_vec(vec![0.0, wind]),
            Some(SubmersionSpec::new(Scene::euclidean(1))),
        )?;
        s.name = "cone_r2".into();
        Ok(s)
    }

    fn torus_cone(wind: f64) -> Result<Scene> {
        let mut s = Scene::cone(wind)?;
        s.name = "torus".into();
        s.topology = Topology::Torus { periods: vec![1.0, 1.0] };
        let mut circle = Scene::euclidean(1);
        circle.name = "circle".into();
        circle.topology = Topology::Torus { periods: vec![1.0] };
        s.submersion = Some(SubmersionSpec::new(circle));
        Ok(s)
    }

    fn sin_wind(amp: f64, offset: f64) -> Result<Scene> {
        let lo = offset.min(offset + amp);
        let hi = offset.max(offset + amp);
        if lo.abs().max(hi.abs()) >= 1.0 - crate::minkowski::WIND_MARGIN {
            return invalid(format!("sin_wind_r3 wind range [{lo}, {hi}] must stay inside (-1, 1)"));
        }
        Ok(Scene {
            name: "sin_wind_r3".into(),
            dim: 3,
            topology: Topology::Euclidean,
            fields: FieldModel::SinWind { amp, offset },
            submersion: Some(SubmersionSpec::new(Scene::euclidean(2))),
        })
    }

    fn sphere2() -> Scene {
        Scene {
            name: "sphere2".into(),
            dim: 2,
            topology: Topology::Euclidean,
            fields: FieldModel::Sphere2,
            submersion: None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn submersion(&self) -> Option<&SubmersionSpec> {
        self.submersion.as_ref()
    }

    pub fn with_submersion(mut self, spec: SubmersionSpec) -> Result<Scene> {
        self.submersion = Some(spec);
        self.check_submersion()?;
        Ok(self)
    }

    /// Whether the wind is a Killing field of `h` (constant data on flat
    /// space, or zero wind).
    pub fn has_killing_wind(&self) -> bool {
        match &self.fields {
            FieldModel::Constant { .. } | FieldModel::Sphere2 => true,
            FieldModel::SinWind { amp, .. } => *amp == 0.0,
        }
    }

    /// Whether `h` and `w` are constant in the chart.
    pub fn is_translation_invariant(&self) -> bool {
        matches!(self.fields, FieldModel::Constant { .. })
    }

    /// Same `h`, zero wind.
    pub fn without_wind(&self) -> Scene {
        let mut s = self.clone();
        s.name = format!("{}[h]", self.name);
        s.fields = match &self.fields {
            FieldModel::Constant { h, .. } => FieldModel::Constant { h: h.clone(), w: DVector::zeros(self.dim) },
            FieldModel::SinWind { .. } => FieldModel::Constant { h: DMatrix::identity(3, 3), w: DVector::zeros(3) },
            FieldModel::Sphere2 => FieldModel::Sphere2,
        };
        s.submersion = None;
        s
    }

    /// Reduce each coordinate into `[0, period)`; identity on euclidean scenes.
    pub fn wrap(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.topology {
            Topology::Euclidean => x.clone(),
            Topology::Torus { periods } => DVector::from_fn(x.len(), |i, _| {
                let p = periods[i];
                let r = x[i].rem_euclid(p);
                // rem_euclid can round up to p for tiny negative inputs.
                if r >= p {
                    0.0
                } else {
                    r
                }
            }),
        }
    }

    pub fn h_at(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_point(x)?;
        let x = self.wrap(x);
        Ok(match &self.fields {
            FieldModel::Constant { h, .. } => h.clone(),
            FieldModel::SinWind { .. } => DMatrix::identity(3, 3),
            FieldModel::Sphere2 => {
                let s = x[0].sin();
                DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, s * s])
            }
        })
    }

    pub fn wind_at(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_point(x)?;
        let x = self.wrap(x);
        Ok(match &self.fields {
            FieldModel::Constant { w, .. } => w.clone(),
            FieldModel::SinWind { amp, offset } => {
                let s = x[0].sin();
                DVector::from_vec(vec![0.0, 0.0, amp * s * s + offset])
            }
            FieldModel::Sphere2 => DVector::zeros(2),
        })
    }

    /// Domain error when `x` has the wrong size or lies outside the chart.
    pub fn check_point(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim {
            return invalid(format!("point has dimension {}, scene {} has {}", x.len(), self.name, self.dim));
        }
        if x.iter().any(|c| !c.is_finite()) {
            return domain("non-finite point");
        }
        if let FieldModel::Sphere2 = self.fields {
            if x[0] <= SPHERE_POLE_MARGIN || x[0] >= PI - SPHERE_POLE_MARGIN {
                return domain(format!(
                    "theta = {} outside the sphere2 chart ({SPHERE_POLE_MARGIN}, pi - {SPHERE_POLE_MARGIN})",
                    x[0]
                ));
            }
        }
        Ok(())
    }

    /// Zermelo data at `x` (torus scenes wrap first).
    pub fn datum(&self, x: &DVector<f64>) -> Result<RandersDatum> {
        RandersDatum::new(self.h_at(x)?, self.wind_at(x)?)
    }

    /// `F(x, v)`.
    pub fn norm(&self, x: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        Ok(self.datum(x)?.norm(v))
    }

    /// Closed-form flow of the wind for time `s`, when one is available.
    pub fn wind_flow(&self, x: &DVector<f64>, s: f64) -> Option<DVector<f64>> {
        match &self.fields {
            FieldModel::Constant { w, .. } => Some(x + w * s),
            FieldModel::Sphere2 => Some(x.clone()),
            FieldModel::SinWind { amp, offset } => {
                // The wind is vertical and depends only on x₁, so its flow is a vertical shear.
                let sn = x[0].sin();
                let mut y = x.clone();
                y[2] += (amp * sn * sn + offset) * s;
                Some(y)
            }
        }
    }

    /// Verify `dρ ∘ w = w* ∘ ρ` at a deterministic set of probe points.
    pub fn check_submersion(&self) -> Result<()> {
        let Some(spec) = &self.submersion else {
            return Ok(());
        };
        if spec.base_dim() == 0 || spec.base_dim() > self.dim {
            return invalid("submersion base dimension must lie in 1..=dim");
        }
        for x in self.probe_points(16) {
            let lhs = spec.project_vector(&self.wind_at(&x)?);
            let rhs = spec.base.wind_at(&spec.project(&x))?;
            if (lhs - rhs).abs().max() > 1e-12 {
                return invalid(format!("wind of {} is not rho-related to its base wind", self.name));
            }
        }
        Ok(())
    }

    /// Deterministic probe points inside the chart domain.
    pub fn probe_points(&self, count: usize) -> Vec<DVector<f64>> {
        (0..count)
            .map(|k| {
                DVector::from_fn(self.dim, |i, _| {
                    // Weyl sequence: well spread, no RNG needed.
                    let frac = ((k as f64 + 1.0) * (0.754877666 + 0.569840291 * i as f64)).fract();
                    match self.fields {
                        FieldModel::Sphere2 if i == 0 => {
                            SPHERE_POLE_MARGIN + 0.01 + frac * (PI - 2.0 * SPHERE_POLE_MARGIN - 0.02)
                        }
                        _ => -3.0 + 6.0 * frac,
                    }
                })
            })
            .collect()
    }

    /// Finsler length `∫ F(γ′(t)) dt` of a sampled curve.
    ///
    /// Composite Simpson on pairs of intervals (unequal spacing allowed); an
    /// odd interval count ends with a trapezoid on the last interval.
    pub fn curve_length(&self, curve: &Trajectory) -> Result<f64> {
        let n = curve.len();
        if n < 2 {
            return invalid("curve_length needs at least two samples");
        }
        let mut integrand = Vec::with_capacity(n);
        for (i, s) in curve.states.iter().enumerate() {
            if s.v.iter().any(|c| !c.is_finite()) {
                return invalid("non-finite velocity sample");
            }
            let f = self.norm(&s.x, &s.v)?;
            if f == 0.0 && i > 0 && i + 1 < n {
                log::warn!("zero velocity at sample {i}; contributes 0 to the length");
            }
            integrand.push(f);
        }
        let t = &curve.times;
        let mut total = 0.0;
        let mut i = 0;
        while i + 2 < n {
            total += simpson_pair(t[i], t[i + 1], t[i + 2], integrand[i], integrand[i + 1], integrand[i + 2]);
            i += 2;
        }
        if i + 1 < n {
            total += 0.5 * (t[i + 1] - t[i]) * (integrand[i] + integrand[i + 1]);
        }
        Ok(total)
    }
}

/// Integral over `[t0, t2]` of the quadratic through three samples.
fn simpson_pair(t0: f64, t1: f64, t2: f64, f0: f64, f1: f64, f2: f64) -> f64 {
    let h0 = t1 - t0;
    let h1 = t2 - t1;
    let sum = h0 + h1;
    sum / 6.0
        * (f0 * (2.0 - h1 / h0) + f1 * sum * sum / (h0 * h1) + f2 * (2.0 - h0 / h1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesic::PhaseState;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_vec(xs.to_vec())
    }

    #[test]
    fn registry_fields() {
        let cone = scenario(ScenarioName::ConeR2);
        assert_eq!(cone.wind_at(&v(&[3.0, -7.0])).unwrap(), v(&[0.0, 0.5]));
        let sw = scenario(ScenarioName::SinWindR3);
        let w = sw.wind_at(&v(&[PI / 2.0, 0.0, 0.0])).unwrap();
        assert!((w - v(&[0.0, 0.0, 0.5])).norm() < 1e-15);
        let e = scenario(ScenarioName::Euclidean);
        assert!((e.norm(&v(&[0.0, 0.0]), &v(&[3.0, 4.0])).unwrap() - 5.0).abs() < 1e-15);
        let sph = scenario(ScenarioName::Sphere2);
        let d = sph.datum(&v(&[PI / 2.0, 0.0])).unwrap();
        assert!((d.h() - DMatrix::identity(2, 2)).abs().max() < 1e-15);
        assert!(matches!(sph.datum(&v(&[0.05, 0.0])), Err(GeomError::Domain(_))));
    }

    #[test]
    fn unknown_name_lists_valid_names() {
        let err = scenario_by_name("klein_bottle").unwrap_err().to_string();
        for n in ScenarioName::ALL {
            assert!(err.contains(n.as_str()));
        }
    }

    #[test]
    fn params_are_validated() {
        let p = ScenarioParams { wind: Some(1.2), ..Default::default() };
        assert!(scenario_with(ScenarioName::ConeR2, &p).is_err());
        let p = ScenarioParams { n: Some(3), ..Default::default() };
        assert!(scenario_with(ScenarioName::ConeR2, &p).is_err());
        assert_eq!(scenario_with(ScenarioName::Euclidean, &p).unwrap().dim(), 3);
        let p = ScenarioParams { amp: Some(0.5), offset: Some(0.6), ..Default::default() };
        assert!(scenario_with(ScenarioName::SinWindR3, &p).is_err());
    }

    #[test]
    fn wrap_examples() {
        let t = scenario(ScenarioName::Torus);
        let w = t.wrap(&v(&[1.25, -0.5]));
        assert!((w - v(&[0.25, 0.5])).norm() < 1e-15);
        assert_eq!(t.wrap(&v(&[0.3, 0.7])), v(&[0.3, 0.7]));
        let e = scenario(ScenarioName::Euclidean);
        assert_eq!(e.wrap(&v(&[-9.5, 4.0])), v(&[-9.5, 4.0]));
        for x in [v(&[-1e-18, 3.0]), v(&[17.999, -0.25])] {
            let once = t.wrap(&x);
            assert_eq!(t.wrap(&once), once);
            assert!(once.iter().all(|&c| (0.0..1.0).contains(&c)));
        }
    }

    #[test]
    fn rho_relatedness_on_registry() {
        for name in [ScenarioName::ConeR2, ScenarioName::Torus, ScenarioName::SinWindR3] {
            let s = scenario(name);
            let spec = s.submersion().unwrap();
            for x in s.probe_points(100) {
                let lhs = spec.project_vector(&s.wind_at(&x).unwrap());
                let rhs = spec.base().wind_at(&spec.project(&x)).unwrap();
                assert!((lhs - rhs).abs().max() <= 1e-12);
            }
        }
    }

    #[test]
    fn every_registry_datum_is_valid() {
        for name in ScenarioName::ALL {
            let s = scenario(name);
            for x in s.probe_points(100) {
                let d = s.datum(&x).unwrap();
                assert!(d.wind_norm_sq() < 1.0);
                let u = DVector::from_fn(s.dim(), |i, _| 1.0 + i as f64);
                let f = d.norm(&u);
                let resid = (d.h_norm(&(&u - d.wind() * f)) - f).abs();
                assert!(resid <= 1e-10 * (1.0 + f));
                assert!(d.fundamental_tensor(&u).unwrap().cholesky().is_some());
            }
        }
    }

    fn line(x0: &[f64], vel: &[f64], t1: f64, samples: usize) -> Trajectory {
        let x0 = v(x0);
        let vel = v(vel);
        let times: Vec<f64> = (0..samples).map(|i| t1 * i as f64 / (samples - 1) as f64).collect();
        let states = times.iter().map(|&t| PhaseState::new(&x0 + &vel * t, vel.clone())).collect();
        Trajectory::new(times, states)
    }

    #[test]
    fn lengths_are_orientation_sensitive() {
        let e = scenario(ScenarioName::Euclidean);
        assert!((e.curve_length(&line(&[0.0, 0.0], &[1.0, 0.0], 3.5, 101)).unwrap() - 3.5).abs() < 1e-12);
        let cone = scenario(ScenarioName::ConeR2);
        let up = cone.curve_length(&line(&[0.0, 0.0], &[0.0, 1.0], 1.0, 101)).unwrap();
        let down = cone.curve_length(&line(&[0.0, 1.0], &[0.0, -1.0], 1.0, 101)).unwrap();
        assert!((up - 2.0 / 3.0).abs() < 1e-12);
        assert!((down - 2.0).abs() < 1e-12);
        let f1 = cone.curve_length(&line(&[0.0, 0.0], &[1.0, 0.5], 4.0, 100)).unwrap();
        assert!((f1 - 4.0).abs() < 1e-12);
    }

    #[test]
    fn simpson_is_fourth_order() {
        // γ(t) = (cos t, sin 2t) on the cone: smooth integrand, compare two refinements.
        let cone = scenario(ScenarioName::ConeR2);
        let curve = |samples: usize| {
            let times: Vec<f64> = (0..samples).map(|i| 2.0 * i as f64 / (samples - 1) as f64).collect();
            let states = times
                .iter()
                .map(|&t| PhaseState::new(v(&[t.cos(), (2.0 * t).sin()]), v(&[-t.sin() + 1.5, 2.0 * (2.0 * t).cos()])))
                .collect();
            Trajectory::new(times, states)
        };
        let reference = cone.curve_length(&curve(8193)).unwrap();
        let e1 = (cone.curve_length(&curve(129)).unwrap() - reference).abs();
        let e2 = (cone.curve_length(&curve(257)).unwrap() - reference).abs();
        let order = (e1 / e2).log2();
        assert!(order >= 3.5, "observed order {order}");
    }
}
