//! Reproduction checks for the worked examples, each with pinned tolerances
//! and a runtime budget.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::control::{
    attainable_set, compare_grid, lie_rank, orbit_set, ConeOracle, ControlSystem, Generator, ReachParams, VectorField,
    Window,
};
use crate::error::Result;
use crate::geodesic::{flag_curvature, geodesic_accel, liouville_volume_check, PhaseState, Trajectory};
use crate::jacobi::{
    classify_subspace, hopf_line, riccati_operator, riccati_residual, solve_jacobi, symplectic_isomorphism_defect,
    transverse_triple, wilking_decompose, JacobiTriple, Subspace, TripleName, DEFAULT_FIELD_STEP, DEFAULT_SCAN_STEP,
    DEFAULT_WINDOW,
};
use crate::minkowski::RandersDatum;
use crate::scene::{scenario, ScenarioName, Scene};
use crate::submersion::is_horizontal;

/// Result of one check body: pass/fail plus a one-line metric summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self { passed, detail: detail.into() }
    }
}

/// A numbered reproduction criterion.
#[derive(Debug, Clone, Copy)]
pub struct Criterion {
    pub id: u8,
    pub name: &'static str,
    pub budget: Duration,
    pub run: fn() -> Result<Check>,
}

/// Outcome of running a criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub id: u8,
    pub name: &'static str,
    /// Numeric checks passed.
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
    pub budget: Duration,
}

impl Outcome {
    pub fn within_budget(&self) -> bool {
        self.elapsed <= self.budget
    }

    /// Numeric checks passed inside the runtime budget.
    pub fn ok(&self) -> bool {
        self.passed && self.within_budget()
    }

    /// `PASS`/`FAIL` line with the metric summary and timing.
    pub fn line(&self) -> String {
        let status = if self.ok() { "PASS" } else { "FAIL" };
        let timing = format!(
            "{:.2}s/{:.0}s{}",
            self.elapsed.as_secs_f64(),
            self.budget.as_secs_f64(),
            if self.within_budget() { "" } else { " over budget" }
        );
        format!("{status} {:>2} {:<28} {} [{timing}]", self.id, self.name, self.detail)
    }
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

/// All criteria in order.
pub fn criteria() -> Vec<Criterion> {
    vec![
        Criterion { id: 1, name: "randers-intrinsic-equation", budget: secs(1), run: randers_intrinsic_equation },
        Criterion { id: 2, name: "cone-control-fields", budget: secs(1), run: cone_control_fields },
        Criterion { id: 3, name: "figure-geodesic", budget: secs(5), run: figure_geodesic },
        Criterion { id: 4, name: "cone-attainable-set", budget: secs(60), run: cone_attainable_set },
        Criterion { id: 5, name: "torus-coverage", budget: secs(60), run: torus_coverage },
        Criterion { id: 6, name: "chow-consistency", budget: secs(5), run: chow_consistency },
        Criterion { id: 7, name: "symplectic-conservation", budget: secs(30), run: symplectic_conservation },
        Criterion { id: 8, name: "riccati", budget: secs(5), run: riccati },
        Criterion { id: 9, name: "transverse-curvature", budget: secs(10), run: transverse_curvature },
        Criterion { id: 10, name: "wilking-decomposition", budget: secs(10), run: wilking_decomposition },
        Criterion { id: 11, name: "liouville-volume", budget: secs(30), run: liouville_volume },
        Criterion { id: 12, name: "flag-curvature", budget: secs(30), run: flag_curvature_check },
        Criterion { id: 13, name: "asymmetric-length", budget: secs(1), run: asymmetric_length },
    ]
}

pub fn run_criterion(c: &Criterion) -> Outcome {
    let start = Instant::now();
    let check = (c.run)().unwrap_or_else(|e| Check::new(false, format!("error: {e}")));
    Outcome { id: c.id, name: c.name, passed: check.passed, detail: check.detail, elapsed: start.elapsed(), budget: c.budget }
}

pub fn run_suite() -> Vec<Outcome> {
    criteria().iter().map(run_criterion).collect()
}

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

/// Random Zermelo datum: `h = AAᵀ + ½I` and a wind of `h`-norm below 0.95.
pub fn random_datum(rng: &mut impl Rng, n: usize) -> RandersDatum {
    let a = DMatrix::<f64>::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let h = &a * a.transpose() + DMatrix::identity(n, n) * 0.5;
    let dir = DVector::<f64>::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let hn = dir.dot(&(&h * &dir)).sqrt().max(1e-12);
    let w = dir * (rng.random_range(0.0..0.95) / hn);
    RandersDatum::new(h, w).expect("random datum is valid")
}

/// Triple with `R(t) = Q(t) diag(λ) Q(t)ᵀ`, eigenvalues `λ ∈ [0.1, 1.9]` and
/// `Q(t)` a product of plane rotations at random rates, so `‖R‖ ≤ 2`.
pub fn random_bounded_triple(n: usize, seed: u64, domain: (f64, f64)) -> JacobiTriple {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eig: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.9)).collect();
    let rates: Vec<f64> = (0..n * n).map(|_| rng.random_range(-0.5..0.5)).collect();
    JacobiTriple::from_fn(n, domain, move |t| {
        let mut q = DMatrix::<f64>::identity(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let (s, c) = (rates[i * n + j] * t).sin_cos();
                let mut g = DMatrix::<f64>::identity(n, n);
                g[(i, i)] = c;
                g[(j, j)] = c;
                g[(i, j)] = -s;
                g[(j, i)] = s;
                q *= g;
            }
        }
        let r = &q * DMatrix::from_diagonal(&DVector::from_column_slice(&eig)) * q.transpose();
        (&r + r.transpose()) * 0.5
    })
    .expect("random triple is valid")
}

/// The cone control fields `f₁ = (1, ½)`, `f₂ = (−1, ½)` on `scene`.
pub fn cone_fields(scene: Scene) -> Result<ControlSystem> {
    ControlSystem::new(scene, vec![Generator::Constant(v(&[1.0, 0.5])), Generator::Constant(v(&[-1.0, 0.5]))])
}

fn randers_intrinsic_equation() -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0_f64;
    for _ in 0..1000 {
        let n = rng.random_range(1..=4);
        let d = random_datum(&mut rng, n);
        let x = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
        let f = d.norm(&x);
        let defect = (d.h_norm(&(&x - d.wind() * f)) - f).abs() / (1.0 + f);
        worst = worst.max(defect);
    }
    Ok(Check::new(worst <= 1e-10, format!("max |‖v − Fw‖_h − F|/(1+F) = {worst:.2e} (tol 1e-10)")))
}

fn cone_control_fields() -> Result<Check> {
    let cone = scenario(ScenarioName::ConeR2);
    let mut worst_f = 0.0_f64;
    let mut horizontal = true;
    for x in cone.probe_points(20) {
        for f in [v(&[1.0, 0.5]), v(&[-1.0, 0.5])] {
            worst_f = worst_f.max((cone.norm(&x, &f)? - 1.0).abs());
            horizontal &= is_horizontal(&cone, &PhaseState::new(x.clone(), f), 1e-10)?;
        }
    }
    Ok(Check::new(
        worst_f <= 1e-12 && horizontal,
        format!("max |F(f) − 1| = {worst_f:.2e} (tol 1e-12), horizontal: {horizontal}"),
    ))
}

fn figure_geodesic() -> Result<Check> {
    let scene = scenario(ScenarioName::SinWindR3);
    let (mut residual, mut unit, mut orth) = (0.0_f64, 0.0_f64, 0.0_f64);
    for k in 0..=400 {
        let t = 2.0 * PI * k as f64 / 400.0;
        let x = v(&[t, 0.0, 3.0 * t / 8.0 - (2.0 * t).sin() / 16.0]);
        let xd = v(&[1.0, 0.0, 3.0 / 8.0 - (2.0 * t).cos() / 8.0]);
        let xdd = v(&[0.0, 0.0, (2.0 * t).sin() / 4.0]);
        residual = residual.max((xdd - geodesic_accel(&scene, &x, &xd)?).norm());
        let d = scene.datum(&x)?;
        unit = unit.max((d.norm(&xd) - 1.0).abs());
        let g = d.fundamental_tensor(&xd)?;
        let gv = &g * &xd;
        orth = orth.max(gv[1].abs()).max(gv[2].abs());
    }
    Ok(Check::new(
        residual <= 1e-6 && unit <= 1e-8 && orth <= 1e-8,
        format!("EL residual {residual:.2e} (1e-6), |F − 1| {unit:.2e} (1e-8), vertical g {orth:.2e} (1e-8)"),
    ))
}

fn cone_params(samples: usize) -> Result<ReachParams> {
    Ok(ReachParams {
        horizon: 6.0,
        max_letters: 4,
        samples,
        window: Window::new(-2.0, 2.0, -0.25, 2.75)?,
        resolution: 0.05,
        seed: 1,
        step: 1e-2,
    })
}

fn cone_attainable_set() -> Result<Check> {
    let sys = cone_fields(scenario(ScenarioName::ConeR2))?;
    let params = cone_params(200_000)?;
    let q0 = v(&[0.0, 0.0]);
    let grid = attainable_set(&sys, &q0, &params)?;
    let cmp = compare_grid(&grid, &ConeOracle { slope: 0.5 }, 2.0 * params.resolution);
    let orbit = orbit_set(&sys, &q0, &params)?;
    let coverage = orbit.occupied_fraction();
    Ok(Check::new(
        cmp.agreement >= 0.99 && coverage >= 0.99,
        format!(
            "cone agreement {:.4} over {} cells (0.99), orbit coverage {coverage:.4} (0.99)",
            cmp.agreement, cmp.cells_compared
        ),
    ))
}

fn torus_coverage() -> Result<Check> {
    let sys = cone_fields(scenario(ScenarioName::Torus))?;
    let params = ReachParams {
        horizon: 40.0,
        max_letters: 4,
        samples: 50_000,
        window: Window::new(0.0, 1.0, 0.0, 1.0)?,
        resolution: 0.02,
        seed: 1,
        step: 1e-2,
    };
    let grid = attainable_set(&sys, &v(&[0.0, 0.0]), &params)?;
    let coverage = grid.occupied_fraction();
    Ok(Check::new(coverage >= 0.99, format!("attainable coverage {coverage:.4} of {} cells (0.99)", grid.nx * grid.ny)))
}

fn chow_consistency() -> Result<Check> {
    let sys = cone_fields(scenario(ScenarioName::ConeR2))?;
    let fields = sys.fields();
    let refs: Vec<&dyn VectorField> = fields.iter().map(|f| f as &dyn VectorField).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut full = 0;
    for _ in 0..100 {
        let x = v(&[rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)]);
        if lie_rank(&refs, &x, 2)? == 2 {
            full += 1;
        }
    }
    let single = ControlSystem::new(scenario(ScenarioName::ConeR2), vec![Generator::Constant(v(&[1.0, 0.5]))])?;
    let params = ReachParams { window: Window::new(-2.0, 2.0, -2.0, 2.0)?, ..cone_params(2_000)? };
    let band = orbit_set(&single, &v(&[0.0, 0.0]), &params)?;
    // A line of slope ½ meets at most two cells per column.
    let thickness = (0..band.nx).map(|i| (0..band.ny).filter(|&j| band.occupied(i, j)).count()).max().unwrap_or(0);
    let coverage = band.occupied_fraction();
    Ok(Check::new(
        full == 100 && thickness <= 2 && coverage < 0.05,
        format!("rank 2 at {full}/100 points; single-field orbit band {thickness} cells thick, coverage {coverage:.4}"),
    ))
}

fn symplectic_conservation() -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0_f64;
    for k in 0..50 {
        let n = rng.random_range(1..=4);
        let triple = random_bounded_triple(n, 1000 + k, (0.0, 10.0));
        let a = DVector::from_fn(2 * n, |_, _| rng.random_range(-1.0..1.0));
        let b = DVector::from_fn(2 * n, |_, _| rng.random_range(-1.0..1.0));
        let ja = solve_jacobi(&triple, &a, 1e-3)?;
        let jb = solve_jacobi(&triple, &b, 1e-3)?;
        let pairing = |i: usize| {
            ja.derivative_at_index(i).dot(&jb.value_at_index(i)) - ja.value_at_index(i).dot(&jb.derivative_at_index(i))
        };
        let w0 = pairing(0);
        for i in 0..ja.len() {
            worst = worst.max((pairing(i) - w0).abs());
        }
    }
    Ok(Check::new(worst <= 1e-8, format!("max |ω(t) − ω(0)| = {worst:.2e} over 50 triples (1e-8)")))
}

fn point_lagrangian(triple: &JacobiTriple) -> Result<Subspace> {
    let n = triple.n();
    let basis = (0..n).map(|i| DVector::from_fn(2 * n, |k, _| if k == n + i { 1.0 } else { 0.0 })).collect();
    Subspace::new(triple, basis, DEFAULT_FIELD_STEP)
}

fn riccati() -> Result<Check> {
    let mut worst = 0.0_f64;
    for name in [TripleName::Flat, TripleName::Sphere] {
        let l = point_lagrangian(&JacobiTriple::catalog(name, None, (0.0, 4.0))?)?;
        for k in 0..20 {
            let t = 0.5 + 2.0 * k as f64 / 19.0;
            worst = worst.max(riccati_residual(&l, t, 1e-4)?);
        }
    }
    let flat = point_lagrangian(&JacobiTriple::catalog(TripleName::Flat, None, (0.0, 4.0))?)?;
    let s1 = riccati_operator(&flat, 1.0)?;
    let dev = (s1 - DMatrix::identity(2, 2)).amax();
    Ok(Check::new(
        worst <= 1e-6 && dev <= 1e-8,
        format!("max residual {worst:.2e} at 40 instants (1e-6), flat |S(1) − I| {dev:.2e} (1e-8)"),
    ))
}

fn transverse_curvature() -> Result<Check> {
    let hopf = JacobiTriple::catalog(TripleName::Hopf, None, (0.0, 2.0 * PI))?;
    let line = Subspace::new(&hopf, vec![hopf_line()], DEFAULT_FIELD_STEP)?;
    let tt = transverse_triple(&line)?;
    let mut worst = 0.0_f64;
    for k in 0..tt.len() {
        let r = tt.triple.curvature_at(tt.time(k));
        worst = worst.max((r[(0, 0)] - 4.0).abs());
    }
    let (tracking, pairing) = symplectic_isomorphism_defect(&line, &tt, 20)?;
    Ok(Check::new(
        tt.rank() == 1 && worst <= 1e-6 && pairing <= 1e-7,
        format!("rank {}, max |R̃ − 4| {worst:.2e} (1e-6), ω defect {pairing:.2e} (1e-7), tracking {tracking:.2e}", tt.rank()),
    ))
}

fn wilking_decomposition() -> Result<Check> {
    let window = (0.0, DEFAULT_WINDOW.1);
    let e = |i: usize| DVector::from_fn(4, |k, _| if k == i { 1.0 } else { 0.0 });
    let mixed = JacobiTriple::catalog(TripleName::Mixed, None, window)?;
    let lm = Subspace::new(&mixed, vec![e(2), e(1)], DEFAULT_FIELD_STEP)?;
    let dm = wilking_decompose(&lm, DEFAULT_SCAN_STEP, 1e-6)?;
    let sphere = JacobiTriple::catalog(TripleName::Sphere, None, window)?;
    let ds = wilking_decompose(&point_lagrangian(&sphere)?, DEFAULT_SCAN_STEP, 1e-6)?;
    let flat = JacobiTriple::catalog(TripleName::Flat, None, window)?;
    let lf = Subspace::new(&flat, vec![e(0), e(1)], DEFAULT_FIELD_STEP)?;
    let df = wilking_decompose(&lf, DEFAULT_SCAN_STEP, 1e-6)?;
    let negative = JacobiTriple::constant(DMatrix::from_diagonal(&v(&[1.0, -0.5])), (0.0, 5.0))?;
    let ln = Subspace::new(&negative, vec![e(2), e(3)], DEFAULT_FIELD_STEP)?;
    let rejected = matches!(wilking_decompose(&ln, DEFAULT_SCAN_STEP, 1e-6), Err(crate::GeomError::Precondition(_)));
    let dims = |d: &crate::jacobi::WilkingDecomposition| (d.null_span.dim(), d.parallel_span.dim());
    let diag = &dm.diagnostics;
    let passed = dims(&dm) == (1, 1)
        && diag.reconstruction_error <= 1e-8
        && diag.curvature_residual <= 1e-8
        && diag.a_tensor_residual <= 1e-8
        && dims(&ds) == (2, 0)
        && dims(&df) == (0, 2)
        && rejected
        && classify_subspace(&lm, 1e-12).lagrangian;
    Ok(Check::new(
        passed,
        format!(
            "mixed {:?} recon {:.1e} ‖R_H‖ {:.1e} ‖𝔸‖ {:.1e}; sphere {:?}; flat {:?}; negative rejected: {rejected}",
            dims(&dm),
            diag.reconstruction_error,
            diag.curvature_residual,
            diag.a_tensor_residual,
            dims(&ds),
            dims(&df)
        ),
    ))
}

fn liouville_volume() -> Result<Check> {
    let cases = [
        (ScenarioName::Euclidean, PhaseState::from_slices(&[0.1, 0.2], &[0.6, -0.8])),
        (ScenarioName::ConeR2, PhaseState::from_slices(&[0.0, 0.0], &[0.3, 0.9])),
        (ScenarioName::Sphere2, PhaseState::from_slices(&[PI / 2.0, 0.0], &[0.05, 1.0])),
    ];
    let mut parts = Vec::new();
    let mut worst = 0.0_f64;
    for (name, s0) in cases {
        let ratio = liouville_volume_check(&scenario(name), &s0, 5.0)?;
        worst = worst.max((ratio - 1.0).abs());
        parts.push(format!("{name} {ratio:.8}"));
    }
    Ok(Check::new(worst <= 1e-4, format!("volume ratios {} (|r − 1| ≤ 1e-4)", parts.join(", "))))
}

fn flag_curvature_check() -> Result<Check> {
    let sphere = flag_curvature(
        &scenario(ScenarioName::Sphere2),
        &PhaseState::from_slices(&[PI / 2.0, 0.0], &[0.0, 1.0]),
        &v(&[1.0, 0.0]),
        0.0,
    )?;
    let flat = flag_curvature(
        &scenario(ScenarioName::Euclidean),
        &PhaseState::from_slices(&[0.0, 0.0], &[1.0, 0.0]),
        &v(&[0.0, 1.0]),
        0.0,
    )?;
    let cone = flag_curvature(
        &scenario(ScenarioName::ConeR2),
        &PhaseState::from_slices(&[0.0, 0.0], &[1.0, 0.5]),
        &v(&[0.0, 1.0]),
        0.0,
    )?;
    Ok(Check::new(
        (sphere - 1.0).abs() <= 1e-2 && flat.abs() <= 1e-3 && cone.abs() <= 1e-3,
        format!("sphere2 {sphere:.5} (1 ± 1e-2), euclidean {flat:.1e}, cone_r2 {cone:.1e} (0 ± 1e-3)"),
    ))
}

fn segment(from: [f64; 2], to: [f64; 2], samples: usize) -> Trajectory {
    let dir = v(&[to[0] - from[0], to[1] - from[1]]);
    let times: Vec<f64> = (0..samples).map(|k| k as f64 / (samples - 1) as f64).collect();
    let states = times.iter().map(|&t| PhaseState::new(v(&from) + &dir * t, dir.clone())).collect();
    Trajectory::new(times, states)
}

fn asymmetric_length() -> Result<Check> {
    let cone = scenario(ScenarioName::ConeR2);
    let up = cone.curve_length(&segment([0.0, 0.0], [0.0, 1.0], 101))?;
    let down = cone.curve_length(&segment([0.0, 1.0], [0.0, 0.0], 101))?;
    Ok(Check::new(
        (up - 2.0 / 3.0).abs() <= 1e-10 && (down - 2.0).abs() <= 1e-10,
        format!("l(up) = {up:.12} (2/3), l(down) = {down:.12} (2)"),
    ))
}
