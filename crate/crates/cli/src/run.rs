//! Command execution.

use std::fmt;
use std::path::{Path, PathBuf};

use finsler_core::control::{
    attainable_set, compare_grid, lie_rank, orbit_set, ConeOracle, ControlSystem, Generator, ReachGrid, ReachParams,
    VectorField,
};
use finsler_core::formats::{field_to_csv, grid_to_csv, trajectory_to_csv};
use finsler_core::geodesic::{integrate_geodesic, zermelo_geodesic, PhaseState};
use finsler_core::jacobi::{
    classify_subspace, singular_instants, symplectic_isomorphism_defect, trace_riccati_check, transverse_triple,
    wilking_decompose, Subspace,
};
use finsler_core::scene::{scenario, ScenarioName, Topology};
use finsler_core::suite::run_suite;
use finsler_core::GeomError;

use crate::config::{ConfigError, GeodesicConfig, JacobiConfig, LieRankConfig, ReachConfig, RunConfig};
use crate::svg::{curve_svg, grid_svg};

/// Why a run did not succeed; each kind has its own exit status.
#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Numeric(String),
    Io(String),
    ChecksFailed(usize),
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numeric(_) => 3,
            RunError::Io(_) | RunError::ChecksFailed(_) => 1,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "config error: {e}"),
            RunError::Numeric(m) => write!(f, "numeric failure: {m}"),
            RunError::Io(m) => write!(f, "i/o error: {m}"),
            RunError::ChecksFailed(n) => write!(f, "{n} check(s) failed"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

fn numeric(e: GeomError) -> RunError {
    RunError::Numeric(e.to_string())
}

fn write_file(path: &Path, contents: &str) -> Result<(), RunError> {
    std::fs::write(path, contents).map_err(|e| RunError::Io(format!("cannot write {}: {e}", path.display())))
}

fn written(paths: &[&Option<PathBuf>]) -> String {
    let names: Vec<String> = paths.iter().filter_map(|p| p.as_ref()).map(|p| p.display().to_string()).collect();
    if names.is_empty() {
        "no files written".into()
    } else {
        format!("wrote {}", names.join(", "))
    }
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("({})", parts.join(", "))
}

/// Run a validated configuration; returns the summary line.
pub fn dispatch(config: RunConfig) -> Result<String, RunError> {
    match config {
        RunConfig::Geodesic(c) => geodesic(c),
        RunConfig::Reach(c) => reach(c, false),
        RunConfig::Orbit(c) => reach(c, true),
        RunConfig::LieRank(c) => lierank(c),
        RunConfig::Jacobi(c) => jacobi(c),
        RunConfig::Check { suite } => check(&suite),
        RunConfig::ScenarioList => Ok(scenario_list()),
    }
}

fn geodesic(c: GeodesicConfig) -> Result<String, RunError> {
    let s0 = PhaseState::new(c.x0.clone(), c.v0.clone());
    let traj = if c.zermelo {
        zermelo_geodesic(&c.scene, &s0, c.duration, c.step)
    } else {
        integrate_geodesic(&c.scene, &s0, c.duration, c.step)
    }
    .map_err(numeric)?;
    let f0 = c.scene.norm(&c.x0, &c.v0).map_err(numeric)?;
    let mut drift = 0.0_f64;
    for s in &traj.states {
        drift = drift.max((c.scene.norm(&s.x, &s.v).map_err(numeric)? - f0).abs());
    }
    if let Some(out) = &c.out {
        write_file(out, &trajectory_to_csv(&traj))?;
    }
    if let Some(svg) = &c.svg {
        let n = c.scene.dim();
        let curve: Vec<(f64, f64)> = traj.states.iter().map(|s| (s.x[0], s.x[n - 1])).collect();
        let base: Option<Vec<(f64, f64)>> = c.scene.submersion().map(|spec| {
            traj.states
                .iter()
                .map(|s| {
                    let b = spec.project(&s.x);
                    (b[0], if b.len() > 1 { b[1] } else { 0.0 })
                })
                .collect()
        });
        write_file(svg, &curve_svg(&curve, base.as_deref()))?;
    }
    let last = traj.last();
    let t_end = traj.times.last().copied().unwrap_or(0.0);
    if traj.truncated {
        return Err(RunError::Numeric(format!(
            "geodesic left the chart of {} at t = {t_end:.6} after {} steps of {}; {}",
            c.scene.name(),
            traj.len() - 1,
            c.step,
            written(&[&c.out, &c.svg])
        )));
    }
    Ok(format!(
        "geodesic {}: {} samples to t = {t_end:.6}, end {}, max |F - F0| = {drift:.2e}; {}",
        c.scene.name(),
        traj.len(),
        fmt_vec(c.scene.wrap(&last.x).as_slice()),
        written(&[&c.out, &c.svg])
    ))
}

/// Slope of the cone spanned by constant generators, when the run starts at
/// the apex of `cone_r2`.
fn cone_slope(sys: &ControlSystem, c: &ReachConfig) -> Option<f64> {
    if sys.scene().name() != "cone_r2" || c.q0.iter().any(|&x| x != 0.0) {
        return None;
    }
    sys.generators()
        .iter()
        .map(|g| match g {
            Generator::Constant(v) if v[0] != 0.0 => Some(v[1] / v[0].abs()),
            _ => None,
        })
        .try_fold(f64::INFINITY, |acc, s| s.map(|s| acc.min(s)))
}

fn control_system(scene: finsler_core::Scene, fan: usize) -> Result<ControlSystem, RunError> {
    ControlSystem::from_scene(scene, fan).map_err(|e| match e {
        GeomError::Precondition(m) | GeomError::InvalidInput(m) => RunError::Config(ConfigError::new("scenario", m)),
        other => numeric(other),
    })
}

fn reach(c: ReachConfig, orbit: bool) -> Result<String, RunError> {
    let sys = control_system(c.scene.clone(), c.fan)?;
    let params = ReachParams {
        horizon: c.horizon,
        max_letters: c.letters,
        samples: c.samples,
        window: c.window,
        resolution: c.res,
        seed: c.seed,
        step: c.step,
    };
    let grid: ReachGrid = if orbit { orbit_set(&sys, &c.q0, &params) } else { attainable_set(&sys, &c.q0, &params) }
        .map_err(numeric)?;
    let slope = cone_slope(&sys, &c);
    if let Some(out) = &c.out {
        write_file(out, &grid_to_csv(&grid))?;
    }
    if let Some(svg) = &c.svg {
        write_file(svg, &grid_svg(&grid, slope))?;
    }
    let mut metric = format!(
        "{}/{} cells occupied ({:.2}%)",
        grid.occupied_cells(),
        grid.nx * grid.ny,
        100.0 * grid.occupied_fraction()
    );
    if let (Some(k), false) = (slope, orbit) {
        let cmp = compare_grid(&grid, &ConeOracle { slope: k }, 2.0 * c.res);
        metric.push_str(&format!(", cone agreement {:.4}", cmp.agreement));
    }
    let kind = if orbit { "orbit" } else { "reach" };
    Ok(format!("{kind} {}: {metric}; {}", c.scene.name(), written(&[&c.out, &c.svg])))
}

fn lierank(c: LieRankConfig) -> Result<String, RunError> {
    let sys = control_system(c.scene.clone(), c.fan)?;
    let fields = sys.fields();
    let refs: Vec<&dyn VectorField> = fields.iter().map(|f| f as &dyn VectorField).collect();
    let rank = lie_rank(&refs, &c.x, c.depth).map_err(numeric)?;
    Ok(format!(
        "lierank {} at {}: rank {rank} of {} with {} fields (depth {})",
        c.scene.name(),
        fmt_vec(c.x.as_slice()),
        c.scene.dim(),
        sys.len(),
        c.depth
    ))
}

fn field_path(out: &Path, k: usize, count: usize) -> PathBuf {
    if count == 1 {
        return out.to_path_buf();
    }
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match out.extension() {
        Some(ext) => format!("{stem}_{k}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{k}"),
    };
    out.with_file_name(name)
}

fn jacobi(c: JacobiConfig) -> Result<String, RunError> {
    let space = Subspace::new(&c.triple, c.basis, c.step).map_err(|e| match e {
        GeomError::InvalidInput(m) => RunError::Config(ConfigError::new("triple", m)),
        other => numeric(other),
    })?;
    let class = classify_subspace(&space, 1e-8);
    let mut parts = vec![format!(
        "dim {} in rank {}, {}",
        space.dim(),
        c.triple.n(),
        if class.lagrangian {
            "lagrangian"
        } else if class.isotropic {
            "isotropic"
        } else {
            "not isotropic"
        }
    )];
    if class.isotropic && space.dim() > 0 {
        let instants = singular_instants(&space, c.scan_step, c.tolerance).map_err(numeric)?;
        let shown: Vec<String> = instants.iter().take(5).map(|t| format!("{t:.6}")).collect();
        let more = if instants.len() > 5 { ", ..." } else { "" };
        parts.push(format!("{} singular instants [{}{more}]", instants.len(), shown.join(", ")));
    }
    if class.isotropic && !class.lagrangian && space.dim() > 0 {
        let tt = transverse_triple(&space).map_err(numeric)?;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for k in 0..tt.len() {
            let r = tt.triple.curvature_at(tt.time(k));
            let eig = nalgebra::SymmetricEigen::new(r).eigenvalues;
            lo = lo.min(eig.min());
            hi = hi.max(eig.max());
        }
        let (_, pairing) = symplectic_isomorphism_defect(&space, &tt, 10).map_err(numeric)?;
        parts.push(format!("transverse rank {} with curvature in [{lo:.6}, {hi:.6}], ω defect {pairing:.1e}", tt.rank()));
    }
    if class.lagrangian {
        let report = trace_riccati_check(&space, c.scan_step, c.tolerance).map_err(numeric)?;
        parts.push(match report.max_norm {
            Some(m) => format!("regular, max ‖S‖ {m:.2e}"),
            None => "not regular on the window".into(),
        });
        match wilking_decompose(&space, c.scan_step, c.tolerance) {
            Ok(d) => parts.push(format!(
                "splits as {} vanishing + {} parallel (reconstruction {:.1e})",
                d.null_span.dim(),
                d.parallel_span.dim(),
                d.diagnostics.reconstruction_error
            )),
            Err(GeomError::Precondition(m)) => parts.push(format!("no splitting: {m}")),
            Err(e) => return Err(numeric(e)),
        }
    }
    let mut files = Vec::new();
    if let Some(out) = &c.out {
        for (k, field) in space.fields().iter().enumerate() {
            let path = field_path(out, k, space.dim());
            write_file(&path, &field_to_csv(field))?;
            files.push(Some(path));
        }
    }
    let refs: Vec<&Option<PathBuf>> = files.iter().collect();
    Ok(format!("jacobi: {}; {}", parts.join(", "), written(&refs)))
}

fn check(suite: &str) -> Result<String, RunError> {
    let outcomes = run_suite();
    for o in &outcomes {
        println!("{}", o.line());
    }
    let failed = outcomes.iter().filter(|o| !o.ok()).count();
    let total: f64 = outcomes.iter().map(|o| o.elapsed.as_secs_f64()).sum();
    if failed > 0 {
        return Err(RunError::ChecksFailed(failed));
    }
    Ok(format!("check {suite}: {} of {} criteria passed in {total:.1}s", outcomes.len(), outcomes.len()))
}

fn scenario_list() -> String {
    let mut lines = Vec::new();
    for name in ScenarioName::ALL {
        let s = scenario(name);
        let topology = match s.topology() {
            Topology::Euclidean => "chart".to_string(),
            Topology::Torus { periods } => format!("torus {periods:?}"),
        };
        let submersion = match s.submersion() {
            Some(spec) => format!("submersion onto dimension {}", spec.base_dim()),
            None => "no submersion".into(),
        };
        let wind = if s.has_killing_wind() { "Killing wind" } else { "non-Killing wind" };
        lines.push(format!("{:<12} dim {}, {topology}, {submersion}, {wind}", name.as_str(), s.dim()));
    }
    lines.join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_paths() {
        assert_eq!(field_path(Path::new("a/f.csv"), 0, 1), PathBuf::from("a/f.csv"));
        assert_eq!(field_path(Path::new("a/f.csv"), 1, 2), PathBuf::from("a/f_1.csv"));
        assert_eq!(field_path(Path::new("f"), 0, 2), PathBuf::from("f_0"));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(RunError::Config(ConfigError::new("x", "y")).exit_code(), 2);
        assert_eq!(RunError::Numeric("x".into()).exit_code(), 3);
        assert_eq!(RunError::ChecksFailed(1).exit_code(), 1);
    }

    #[test]
    fn scenario_list_names_every_scene() {
        let text = scenario_list();
        for name in ScenarioName::ALL {
            assert!(text.contains(name.as_str()));
        }
    }
}
