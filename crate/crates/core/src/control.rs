//! Control systems built from horizontal unit geodesic fields.
//!
//! The attainable set of a family `C` from `q` is the set of endpoints of
//! `e^{t_k f_k} ∘ ⋯ ∘ e^{t_1 f_1}(q)` with `t_i ≥ 0`; the orbit allows
//! `t_i ∈ ℝ`. Both are approximated from below by occupancy grids filled with
//! randomly sampled words, every point of each broken path being rasterized.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, GeomError, Result};
use crate::geodesic::{integrate_geodesic, PhaseState};
use crate::linalg::numerical_rank;
use crate::scene::{Scene, Topology};
use crate::submersion::{horizontal_lift_vector, is_horizontal};

/// Tolerance of the unit-speed and horizontality certification of generators.
pub const GENERATOR_TOLERANCE: f64 = 1e-8;
/// Probe points used to certify generators.
pub const GENERATOR_PROBES: usize = 100;
/// Finite-difference step of Lie-bracket Jacobians.
pub const BRACKET_STEP: f64 = 1e-5;
/// Relative singular-value threshold of [`lie_rank`].
pub const LIE_RANK_TOLERANCE: f64 = 1e-8;
/// Number of base directions used to derive generators on curved scenes.
pub const DEFAULT_FAN: usize = 8;

const CHUNK: usize = 512;

/// A smooth vector field on a chart.
pub trait VectorField: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>>;
}

/// A vector field given by a closure.
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F> FnField<F>
where
    F: Fn(&DVector<f64>) -> DVector<f64> + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> VectorField for FnField<F>
where
    F: Fn(&DVector<f64>) -> DVector<f64> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok((self.f)(x))
    }
}

/// A generator of a control system.
#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    /// A constant field; its flow is a translation.
    Constant(DVector<f64>),
    /// Horizontal lift of the unit base vector in direction `base_dir`.
    Lifted { base_dir: DVector<f64> },
}

/// A finite family of horizontal unit geodesic fields on a scene.
#[derive(Debug, Clone)]
pub struct ControlSystem {
    scene: Scene,
    generators: Vec<Generator>,
}

impl ControlSystem {
    /// Certifies every generator at [`GENERATOR_PROBES`] probe points:
    /// `F = 1` and, when the scene has a submersion, horizontality.
    pub fn new(scene: Scene, generators: Vec<Generator>) -> Result<Self> {
        if generators.is_empty() {
            return invalid("a control system needs at least one generator");
        }
        let sys = Self { scene, generators };
        for (i, g) in sys.generators.iter().enumerate() {
            match g {
                Generator::Constant(v) if v.len() != sys.scene.dim() => {
                    return invalid(format!("generator {i} has dimension {}, expected {}", v.len(), sys.scene.dim()));
                }
                Generator::Lifted { base_dir } => match sys.scene.submersion() {
                    None => return invalid(format!("generator {i} is a lift but the scene has no submersion")),
                    Some(spec) if base_dir.len() != spec.base_dim() => {
                        return invalid(format!("generator {i} base direction must have dimension {}", spec.base_dim()));
                    }
                    _ => {}
                },
                _ => {}
            }
        }
        for x in sys.scene.probe_points(GENERATOR_PROBES) {
            for i in 0..sys.generators.len() {
                let v = sys.field_at(i, &x)?;
                let f = sys.scene.norm(&x, &v)?;
                if (f - 1.0).abs() > GENERATOR_TOLERANCE {
                    return Err(GeomError::Precondition(format!("generator {i} has F = {f} at {x:?}, expected 1")));
                }
                if sys.scene.submersion().is_some()
                    && !is_horizontal(&sys.scene, &PhaseState::new(x.clone(), v), GENERATOR_TOLERANCE)?
                {
                    return Err(GeomError::Precondition(format!("generator {i} is not horizontal at {x:?}")));
                }
            }
        }
        Ok(sys)
    }

    /// Horizontal unit lifts of a fan of base directions: `±1` over a line,
    /// `fan` equally spaced directions over a plane. Translation-invariant
    /// scenes get constant generators (for the cone these are `(±1, ½)`).
    pub fn from_scene(scene: Scene, fan: usize) -> Result<Self> {
        let spec = scene
            .submersion()
            .ok_or_else(|| GeomError::Precondition(format!("scene {} carries no submersion", scene.name())))?;
        let k = spec.base_dim();
        let dirs: Vec<DVector<f64>> = match k {
            1 => vec![DVector::from_element(1, 1.0), DVector::from_element(1, -1.0)],
            2 => {
                if fan < 2 {
                    return invalid("direction fan needs at least 2 directions");
                }
                (0..fan)
                    .map(|i| {
                        let a = std::f64::consts::TAU * i as f64 / fan as f64;
                        DVector::from_vec(vec![a.cos(), a.sin()])
                    })
                    .collect()
            }
            _ => return invalid(format!("generator fans need base dimension 1 or 2, got {k}")),
        };
        let generators = if scene.is_translation_invariant() {
            let origin = DVector::zeros(scene.dim());
            let base_origin = spec.project(&origin);
            dirs.iter()
                .map(|d| {
                    let b = d / spec.base().norm(&base_origin, d)?;
                    Ok(Generator::Constant(horizontal_lift_vector(&scene, &origin, &b)?))
                })
                .collect::<Result<Vec<_>>>()?
        } else {
            dirs.into_iter().map(|base_dir| Generator::Lifted { base_dir }).collect()
        };
        Self::new(scene, generators)
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    /// Value of generator `i` at `x`.
    pub fn field_at(&self, i: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        match self.generators.get(i) {
            None => invalid(format!("generator index {i} out of range (have {})", self.generators.len())),
            Some(Generator::Constant(v)) => Ok(v.clone()),
            Some(Generator::Lifted { base_dir }) => {
                let spec = self.scene.submersion().expect("lifted generators require a submersion");
                let b = base_dir / spec.base().norm(&spec.project(x), base_dir)?;
                horizontal_lift_vector(&self.scene, x, &b)
            }
        }
    }

    /// The generators as [`VectorField`]s.
    pub fn fields(&self) -> Vec<GeneratorField<'_>> {
        (0..self.generators.len()).map(|index| GeneratorField { system: self, index }).collect()
    }
}

/// One generator of a [`ControlSystem`] viewed as a vector field.
pub struct GeneratorField<'a> {
    system: &'a ControlSystem,
    index: usize,
}

impl VectorField for GeneratorField<'_> {
    fn dim(&self) -> usize {
        self.system.scene.dim()
    }

    fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.system.field_at(self.index, x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WordMode {
    /// Nonnegative durations.
    Attainable,
    /// Durations of any sign.
    Orbit,
}

/// A sequence of `(generator index, duration)` letters, applied first to last.
#[derive(Debug, Clone, PartialEq)]
pub struct Word {
    pub letters: Vec<(usize, f64)>,
    pub mode: WordMode,
}

impl Word {
    pub fn new(letters: Vec<(usize, f64)>, mode: WordMode) -> Result<Self> {
        for &(i, t) in &letters {
            if !t.is_finite() {
                return invalid(format!("letter ({i}, {t}) has a non-finite duration"));
            }
            if mode == WordMode::Attainable && t < 0.0 {
                return invalid(format!("letter ({i}, {t}) has a negative duration in attainable mode"));
            }
        }
        Ok(Self { letters, mode })
    }
}

/// Flow along generator `i` for time `t` starting at `q`, pushing the visited
/// points into `out` with spacing at most `spacing` for constant generators
/// and `step` in time for lifted ones. Returns the endpoint (cover
/// coordinates).
fn flow_letter(
    sys: &ControlSystem,
    q: &DVector<f64>,
    i: usize,
    t: f64,
    step: f64,
    spacing: f64,
    out: Option<&mut Vec<DVector<f64>>>,
) -> Result<DVector<f64>> {
    match &sys.generators[i] {
        Generator::Constant(v) => {
            if let Some(out) = out {
                let len = v.norm() * t.abs();
                let count = (len / spacing).ceil().max(1.0) as usize;
                for k in 1..=count {
                    out.push(q + v * (t * k as f64 / count as f64));
                }
            }
            Ok(q + v * t)
        }
        Generator::Lifted { .. } => {
            let v = sys.field_at(i, q)?;
            let tr = integrate_geodesic(&sys.scene, &PhaseState::new(q.clone(), v), t, step)?;
            if tr.truncated {
                return Err(GeomError::Domain("word left the chart".into()));
            }
            let end = tr.last().x.clone();
            if let Some(out) = out {
                out.extend(tr.states.into_iter().skip(1).map(|s| s.x));
            }
            Ok(end)
        }
    }
}

fn check_letters(sys: &ControlSystem, word: &Word) -> Result<()> {
    for &(i, t) in &word.letters {
        if i >= sys.len() {
            return invalid(format!("generator index {i} out of range (have {})", sys.len()));
        }
        if word.mode == WordMode::Attainable && t < 0.0 {
            return invalid("negative duration in attainable mode");
        }
    }
    Ok(())
}

/// Endpoint of the word applied to `q0`, wrapped on torus scenes.
pub fn apply_word(sys: &ControlSystem, q0: &DVector<f64>, word: &Word, step: f64) -> Result<DVector<f64>> {
    check_letters(sys, word)?;
    sys.scene.check_point(q0)?;
    let mut q = q0.clone();
    for &(i, t) in &word.letters {
        q = flow_letter(sys, &q, i, t, step, f64::INFINITY, None)?;
    }
    Ok(sys.scene.wrap(&q))
}

/// Axis-aligned rectangle `[x_min, x_max] × [y_min, y_max]` over the first two
/// coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Window {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        let w = Self { x_min, x_max, y_min, y_max };
        if [x_min, x_max, y_min, y_max].iter().any(|c| !c.is_finite()) {
            return invalid("window bounds must be finite");
        }
        if !(x_min < x_max) || !(y_min < y_max) {
            return invalid(format!("window must satisfy min < max on each axis, got {w:?}"));
        }
        Ok(w)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }
}

/// Occupancy grid over a window; `counts` is row-major in `j` (y) then `i` (x).
#[derive(Debug, Clone, PartialEq)]
pub struct ReachGrid {
    pub window: Window,
    pub resolution: f64,
    pub nx: usize,
    pub ny: usize,
    pub counts: Vec<u64>,
}

impl ReachGrid {
    pub fn new(window: Window, resolution: f64) -> Result<Self> {
        if !(resolution > 0.0) || !resolution.is_finite() {
            return invalid(format!("resolution must be positive, got {resolution}"));
        }
        let nx = ((window.x_max - window.x_min) / resolution - 1e-9).ceil().max(1.0);
        let ny = ((window.y_max - window.y_min) / resolution - 1e-9).ceil().max(1.0);
        if nx * ny > 1e8 {
            return invalid(format!("grid of {nx} x {ny} cells is too large"));
        }
        let (nx, ny) = (nx as usize, ny as usize);
        Ok(Self { window, resolution, nx, ny, counts: vec![0; nx * ny] })
    }

    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        if !self.window.contains(x, y) {
            return None;
        }
        let i = (((x - self.window.x_min) / self.resolution).floor() as usize).min(self.nx - 1);
        let j = (((y - self.window.y_min) / self.resolution).floor() as usize).min(self.ny - 1);
        Some((i, j))
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.window.x_min + (i as f64 + 0.5) * self.resolution,
            self.window.y_min + (j as f64 + 0.5) * self.resolution,
        )
    }

    pub fn count(&self, i: usize, j: usize) -> u64 {
        self.counts[j * self.nx + i]
    }

    pub fn occupied(&self, i: usize, j: usize) -> bool {
        self.count(i, j) > 0
    }

    pub fn mark(&mut self, x: f64, y: f64) {
        if let Some((i, j)) = self.cell_of(x, y) {
            self.counts[j * self.nx + i] += 1;
        }
    }

    pub fn occupied_cells(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    pub fn occupied_fraction(&self) -> f64 {
        self.occupied_cells() as f64 / self.counts.len() as f64
    }

    /// Whether every occupied cell of `self` is occupied in `other`.
    pub fn is_subset_of(&self, other: &ReachGrid) -> bool {
        self.nx == other.nx
            && self.ny == other.ny
            && self.counts.iter().zip(&other.counts).all(|(&a, &b)| a == 0 || b > 0)
    }

    fn merge(mut self, other: ReachGrid) -> ReachGrid {
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
        self
    }
}

/// Sampling parameters of [`attainable_set`] and [`orbit_set`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReachParams {
    pub horizon: f64,
    pub max_letters: usize,
    pub samples: usize,
    pub window: Window,
    pub resolution: f64,
    pub seed: u64,
    /// Integration step for lifted (non-constant) generators.
    pub step: f64,
}

impl ReachParams {
    fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return invalid(format!("horizon must be positive, got {}", self.horizon));
        }
        if self.max_letters == 0 {
            return invalid("max_letters must be at least 1");
        }
        if !(self.step > 0.0) || !self.step.is_finite() {
            return invalid(format!("step must be positive, got {}", self.step));
        }
        Ok(())
    }
}

/// Random word number `index`: letter count uniform in `1..=max_letters`,
/// generators uniform, durations uniform on `{t_i ≥ 0, Σ t_i ≤ horizon}`.
/// The stream is keyed by `(seed, index)` so words are independent of the
/// order in which they are drawn.
fn sample_word(params: &ReachParams, generators: usize, index: u64) -> Vec<(usize, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(index);
    let letters = rng.random_range(1..=params.max_letters);
    let gens: Vec<usize> = (0..letters).map(|_| rng.random_range(0..generators)).collect();
    // k + 1 exponentials normalized give a uniform point of the k-simplex; the
    // slack coordinate is dropped.
    let expo: Vec<f64> = (0..=letters).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = expo.iter().sum();
    gens.into_iter().zip(&expo).map(|(g, e)| (g, params.horizon * e / total)).collect()
}

fn signed(params: &ReachParams, letters: &[(usize, f64)], index: u64) -> Vec<(usize, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x5bd1_e995_9e37_79b9);
    rng.set_stream(index);
    letters.iter().map(|&(g, t)| (g, if rng.random::<bool>() { t } else { -t })).collect()
}

fn rasterize_word(sys: &ControlSystem, q0: &DVector<f64>, letters: &[(usize, f64)], params: &ReachParams, grid: &mut ReachGrid) -> Result<()> {
    let spacing = 0.5 * params.resolution;
    let step = params.step.min(0.25 * params.resolution);
    let mut q = q0.clone();
    let mut points = Vec::new();
    for &(i, t) in letters {
        if let Generator::Constant(v) = &sys.generators[i] {
            // Same points as `flow_letter`, marked without allocating.
            let count = (v.norm() * t.abs() / spacing).ceil().max(1.0) as usize;
            for k in 1..=count {
                let s = t * k as f64 / count as f64;
                mark_xy(sys.scene(), grid, q[0] + v[0] * s, q[1] + v[1] * s);
            }
            q += v * t;
            continue;
        }
        points.clear();
        q = flow_letter(sys, &q, i, t, step, spacing, Some(&mut points))?;
        for p in &points {
            mark_point(sys.scene(), grid, p);
        }
    }
    Ok(())
}

fn mark_point(scene: &Scene, grid: &mut ReachGrid, p: &DVector<f64>) {
    mark_xy(scene, grid, p[0], p[1]);
}

fn mark_xy(scene: &Scene, grid: &mut ReachGrid, x: f64, y: f64) {
    let (x, y) = match scene.topology() {
        Topology::Torus { periods } => (x.rem_euclid(periods[0]), y.rem_euclid(periods[1])),
        Topology::Euclidean => (x, y),
    };
    grid.mark(x, y);
}

fn sample_set(sys: &ControlSystem, q0: &DVector<f64>, params: &ReachParams, mode: WordMode) -> Result<ReachGrid> {
    params.validate()?;
    sys.scene.check_point(q0)?;
    if sys.scene.dim() < 2 {
        return invalid("occupancy grids need a scene of dimension at least 2");
    }
    let mut grid = ReachGrid::new(params.window, params.resolution)?;
    let wrapped = sys.scene.wrap(q0);
    if !params.window.contains(wrapped[0], wrapped[1]) {
        log::warn!("start point {:?} lies outside the window", wrapped.as_slice());
    }
    mark_point(sys.scene(), &mut grid, q0);
    let chunks = params.samples.div_ceil(CHUNK);
    let empty = ReachGrid::new(params.window, params.resolution)?;
    let sampled = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<ReachGrid> {
            let mut local = empty.clone();
            let end = ((c + 1) * CHUNK).min(params.samples);
            for index in (c * CHUNK)..end {
                let index = index as u64;
                let word = sample_word(params, sys.len(), index);
                rasterize_word(sys, q0, &word, params, &mut local)?;
                if mode == WordMode::Orbit {
                    rasterize_word(sys, q0, &signed(params, &word, index), params, &mut local)?;
                }
            }
            Ok(local)
        })
        .try_reduce(|| empty.clone(), |a, b| Ok(a.merge(b)))?;
    Ok(grid.merge(sampled))
}

/// Occupancy grid of sampled forward words from `q0`.
pub fn attainable_set(sys: &ControlSystem, q0: &DVector<f64>, params: &ReachParams) -> Result<ReachGrid> {
    sample_set(sys, q0, params, WordMode::Attainable)
}

/// Occupancy grid of sampled signed words from `q0`. Each sample rasterizes
/// the forward word of the same index and a copy with random signs, so the
/// orbit grid always contains the attainable grid of the same parameters.
pub fn orbit_set(sys: &ControlSystem, q0: &DVector<f64>, params: &ReachParams) -> Result<ReachGrid> {
    sample_set(sys, q0, params, WordMode::Orbit)
}

#[derive(Debug, Clone)]
enum Node {
    Field(usize),
    /// `[fields[i], node]`.
    Bracket(usize, Box<Node>),
}

fn eval_node(fields: &[&dyn VectorField], node: &Node, x: &DVector<f64>) -> Result<DVector<f64>> {
    match node {
        Node::Field(i) => fields[*i].eval(x),
        Node::Bracket(i, inner) => {
            let f = |y: &DVector<f64>| fields[*i].eval(y);
            let g = |y: &DVector<f64>| eval_node(fields, inner, y);
            Ok(jacobian(&g, x)? * f(x)? - jacobian(&f, x)? * g(x)?)
        }
    }
}

fn jacobian(f: &dyn Fn(&DVector<f64>) -> Result<DVector<f64>>, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = x.len();
    let mut jac = DMatrix::zeros(n, n);
    let mut xp = x.clone();
    let mut xm = x.clone();
    for k in 0..n {
        xp[k] = x[k] + BRACKET_STEP;
        xm[k] = x[k] - BRACKET_STEP;
        jac.set_column(k, &((f(&xp)? - f(&xm)?) / (2.0 * BRACKET_STEP)));
        xp[k] = x[k];
        xm[k] = x[k];
    }
    Ok(jac)
}

/// Rank at `x` of the span of the fields and their iterated brackets
/// `[f_i, b]` up to `depth` (depth 1: the fields alone). Brackets
/// `[f, g] = Dg·f − Df·g` use central-difference Jacobians.
pub fn lie_rank(fields: &[&dyn VectorField], x: &DVector<f64>, depth: usize) -> Result<usize> {
    if depth == 0 {
        return invalid("depth must be at least 1");
    }
    let Some(first) = fields.first() else {
        return Ok(0);
    };
    let n = first.dim();
    if fields.iter().any(|f| f.dim() != n) || x.len() != n {
        return invalid("fields and point must share one dimension");
    }
    let mut level: Vec<Node> = (0..fields.len()).map(Node::Field).collect();
    let mut values: Vec<DVector<f64>> = level.iter().map(|node| eval_node(fields, node, x)).collect::<Result<_>>()?;
    for _ in 1..depth {
        if matrix_rank(&values, n) == n {
            break;
        }
        level = (0..fields.len())
            .flat_map(|i| level.iter().map(move |node| Node::Bracket(i, Box::new(node.clone()))))
            .collect();
        for node in &level {
            values.push(eval_node(fields, node, x)?);
        }
    }
    Ok(matrix_rank(&values, n))
}

fn matrix_rank(values: &[DVector<f64>], n: usize) -> usize {
    let mut m = DMatrix::zeros(n, values.len());
    for (j, v) in values.iter().enumerate() {
        m.set_column(j, v);
    }
    numerical_rank(&m, LIE_RANK_TOLERANCE)
}

/// Report of [`compare_grid`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridComparison {
    pub cells_compared: usize,
    pub cells_excluded: usize,
    pub false_positive_rate: f64,
    pub false_negative_rate: f64,
    pub agreement: f64,
}

/// A planar region used as ground truth for occupancy grids.
pub trait RegionOracle {
    fn contains(&self, x: f64, y: f64) -> bool;
    /// Distance from `(x, y)` to the region boundary.
    fn boundary_distance(&self, x: f64, y: f64) -> f64;
}

/// The closed cone `{y ≥ slope·|x|}` with apex at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeOracle {
    pub slope: f64,
}

impl RegionOracle for ConeOracle {
    fn contains(&self, x: f64, y: f64) -> bool {
        y >= self.slope * x.abs()
    }

    fn boundary_distance(&self, x: f64, y: f64) -> f64 {
        let ray = |dx: f64| {
            let norm = (dx * dx + self.slope * self.slope).sqrt();
            let (ux, uy) = (dx / norm, self.slope / norm);
            let t = (x * ux + y * uy).max(0.0);
            ((x - t * ux).powi(2) + (y - t * uy).powi(2)).sqrt()
        };
        ray(1.0).min(ray(-1.0))
    }
}

/// The whole plane (`true`) or the empty set (`false`); no boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantOracle(pub bool);

impl RegionOracle for ConstantOracle {
    fn contains(&self, _x: f64, _y: f64) -> bool {
        self.0
    }

    fn boundary_distance(&self, _x: f64, _y: f64) -> f64 {
        f64::INFINITY
    }
}

/// Cell-centre comparison of a grid against a region, skipping cells whose
/// centre lies within `band` of the region boundary. Rates are relative to the
/// compared cells outside (false positives) or inside (false negatives) the
/// region.
pub fn compare_grid(grid: &ReachGrid, oracle: &dyn RegionOracle, band: f64) -> GridComparison {
    let (mut tp, mut tn, mut fp, mut fneg, mut excluded) = (0usize, 0usize, 0usize, 0usize, 0usize);
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let (x, y) = grid.cell_center(i, j);
            if oracle.boundary_distance(x, y) <= band {
                excluded += 1;
                continue;
            }
            match (grid.occupied(i, j), oracle.contains(x, y)) {
                (true, true) => tp += 1,
                (false, false) => tn += 1,
                (true, false) => fp += 1,
                (false, true) => fneg += 1,
            }
        }
    }
    let compared = tp + tn + fp + fneg;
    let rate = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    GridComparison {
        cells_compared: compared,
        cells_excluded: excluded,
        false_positive_rate: rate(fp, fp + tn),
        false_negative_rate: rate(fneg, fneg + tp),
        agreement: if compared == 0 { 1.0 } else { (tp + tn) as f64 / compared as f64 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{scenario, ScenarioName};

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_vec(xs.to_vec())
    }

    fn cone_params(samples: usize, seed: u64) -> ReachParams {
        ReachParams {
            horizon: 6.0,
            max_letters: 4,
            samples,
            window: Window::new(-2.0, 2.0, -0.25, 2.75).unwrap(),
            resolution: 0.05,
            seed,
            step: 1e-2,
        }
    }

    #[test]
    fn cone_generators_and_words() {
        let sys = ControlSystem::from_scene(scenario(ScenarioName::ConeR2), DEFAULT_FAN).unwrap();
        let expected = [v(&[1.0, 0.5]), v(&[-1.0, 0.5])];
        for (g, e) in sys.generators().iter().zip(&expected) {
            let Generator::Constant(c) = g else { panic!("cone generators are constant") };
            assert!((c - e).amax() < 1e-12);
        }
        let w = Word::new(vec![(0, 1.0), (1, 1.0)], WordMode::Attainable).unwrap();
        assert!((apply_word(&sys, &v(&[0.0, 0.0]), &w, 1e-3).unwrap() - v(&[0.0, 1.0])).amax() < 1e-12);
        let empty = Word::new(vec![], WordMode::Attainable).unwrap();
        assert_eq!(apply_word(&sys, &v(&[0.3, 0.1]), &empty, 1e-3).unwrap(), v(&[0.3, 0.1]));
        assert!(Word::new(vec![(0, -1.0)], WordMode::Attainable).is_err());
        assert!(Word::new(vec![(0, -1.0)], WordMode::Orbit).is_ok());
        let bad = Word { letters: vec![(5, 1.0)], mode: WordMode::Attainable };
        assert!(apply_word(&sys, &v(&[0.0, 0.0]), &bad, 1e-3).is_err());

        let torus = ControlSystem::from_scene(scenario(ScenarioName::Torus), DEFAULT_FAN).unwrap();
        let w = Word::new(vec![(0, 2.0)], WordMode::Attainable).unwrap();
        let end = apply_word(&torus, &v(&[0.0, 0.0]), &w, 1e-3).unwrap();
        assert!(end.iter().all(|c| c.abs() < 1e-12 || (c - 1.0).abs() < 1e-12));
    }

    #[test]
    fn lifted_generators_follow_geodesics() {
        let sys = ControlSystem::from_scene(scenario(ScenarioName::SinWindR3), 4).unwrap();
        assert!(matches!(sys.generators()[0], Generator::Lifted { .. }));
        let w = Word::new(vec![(0, std::f64::consts::PI)], WordMode::Attainable).unwrap();
        let end = apply_word(&sys, &v(&[0.0, 0.0, 0.0]), &w, 1e-3).unwrap();
        let t = std::f64::consts::PI;
        assert!((end - v(&[t, 0.0, 3.0 * t / 8.0])).amax() < 1e-5);
    }

    #[test]
    fn uncertified_generators_are_rejected() {
        let cone = scenario(ScenarioName::ConeR2);
        assert!(matches!(ControlSystem::new(cone.clone(), vec![Generator::Constant(v(&[0.0, 1.0]))]), Err(GeomError::Precondition(_))));
        assert!(matches!(ControlSystem::new(cone.clone(), vec![Generator::Constant(v(&[2.0, 1.0]))]), Err(GeomError::Precondition(_))));
        assert!(ControlSystem::new(cone, vec![]).is_err());
        assert!(ControlSystem::new(scenario(ScenarioName::Euclidean), vec![Generator::Lifted { base_dir: v(&[1.0]) }]).is_err());
    }

    #[test]
    fn zero_samples_mark_only_the_start() {
        let sys = ControlSystem::from_scene(scenario(ScenarioName::ConeR2), DEFAULT_FAN).unwrap();
        let g = attainable_set(&sys, &v(&[0.0, 0.0]), &cone_params(0, 1)).unwrap();
        assert_eq!(g.occupied_cells(), 1);
        assert!(g.occupied(40, 5));
    }

    #[test]
    fn grids_are_deterministic_and_monotone_in_samples() {
        let sys = ControlSystem::from_scene(scenario(ScenarioName::ConeR2), DEFAULT_FAN).unwrap();
        let q0 = v(&[0.0, 0.0]);
        let a = attainable_set(&sys, &q0, &cone_params(3000, 7)).unwrap();
        let b = attainable_set(&sys, &q0, &cone_params(3000, 7)).unwrap();
        assert_eq!(a, b);
        let small = attainable_set(&sys, &q0, &cone_params(1000, 7)).unwrap();
        assert!(small.is_subset_of(&a));
        let orbit = orbit_set(&sys, &q0, &cone_params(3000, 7)).unwrap();
        assert!(a.is_subset_of(&orbit));
        // Cells below the cone are reached only with negative durations.
        let below = (0..orbit.nx).any(|i| (0..orbit.ny).any(|j| orbit.occupied(i, j) && !a.occupied(i, j)));
        assert!(below);
        let threads = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let serial = threads.install(|| attainable_set(&sys, &q0, &cone_params(3000, 7)).unwrap());
        assert_eq!(serial, a);
    }

    #[test]
    fn attainable_cells_stay_in_the_cone() {
        let sys = ControlSystem::from_scene(scenario(ScenarioName::ConeR2), DEFAULT_FAN).unwrap();
        let g = attainable_set(&sys, &v(&[0.0, 0.0]), &cone_params(5000, 3)).unwrap();
        for j in 0..g.ny {
            for i in 0..g.nx {
                if g.occupied(i, j) {
                    let (x, y) = g.cell_center(i, j);
                    assert!(y + 0.5 * g.resolution >= 0.5 * (x.abs() - 0.5 * g.resolution) - g.resolution);
                }
            }
        }
    }

    #[test]
    fn horizon_monotonicity_holds_statistically() {
        let sys = ControlSystem::from_scene(scenario(ScenarioName::ConeR2), DEFAULT_FAN).unwrap();
        let q0 = v(&[0.0, 0.0]);
        let mut short = cone_params(20000, 11);
        short.horizon = 3.0;
        let long = cone_params(20000, 11);
        let a = attainable_set(&sys, &q0, &short).unwrap();
        let b = attainable_set(&sys, &q0, &long).unwrap();
        let missing = (0..a.counts.len()).filter(|&c| a.counts[c] > 0 && b.counts[c] == 0).count();
        assert!((missing as f64) <= 0.01 * a.occupied_cells() as f64, "{missing} cells lost");
    }

    #[test]
    fn single_field_orbit_is_a_band() {
        let sys = ControlSystem::new(scenario(ScenarioName::Euclidean), vec![Generator::Constant(v(&[1.0, 0.0]))]).unwrap();
        let params = ReachParams { window: Window::new(-2.0, 2.0, -2.0, 2.0).unwrap(), ..cone_params(500, 1) };
        let g = orbit_set(&sys, &v(&[0.0, 0.0]), &params).unwrap();
        let rows: std::collections::BTreeSet<usize> =
            (0..g.ny).filter(|&j| (0..g.nx).any(|i| g.occupied(i, j))).collect();
        assert_eq!(rows.len(), 1);
    }

    #[test]
    fn lie_ranks() {
        let sys = ControlSystem::from_scene(scenario(ScenarioName::ConeR2), DEFAULT_FAN).unwrap();
        let fields = sys.fields();
        let refs: Vec<&dyn VectorField> = fields.iter().map(|f| f as &dyn VectorField).collect();
        assert_eq!(lie_rank(&refs, &v(&[0.3, 0.2]), 1).unwrap(), 2);
        assert_eq!(lie_rank(&refs[..1], &v(&[0.3, 0.2]), 5).unwrap(), 1);
        let dx = FnField::new(2, |_x: &DVector<f64>| v(&[1.0, 0.0]));
        let xdy = FnField::new(2, |x: &DVector<f64>| v(&[0.0, x[0]]));
        let pair: [&dyn VectorField; 2] = [&dx, &xdy];
        assert_eq!(lie_rank(&pair, &v(&[0.0, 0.0]), 1).unwrap(), 1);
        assert_eq!(lie_rank(&pair, &v(&[0.0, 0.0]), 2).unwrap(), 2);
        assert!(lie_rank(&pair, &v(&[0.0, 0.0]), 0).is_err());
        let lifted = ControlSystem::from_scene(scenario(ScenarioName::SinWindR3), 4).unwrap();
        let fields = lifted.fields();
        let refs: Vec<&dyn VectorField> = fields.iter().map(|f| f as &dyn VectorField).collect();
        assert_eq!(lie_rank(&refs, &v(&[0.4, 0.0, 0.0]), 2).unwrap(), 3);
    }

    #[test]
    fn grid_comparisons() {
        let grid = ReachGrid::new(Window::new(-1.0, 1.0, -1.0, 1.0).unwrap(), 0.1).unwrap();
        let r = compare_grid(&grid, &ConstantOracle(false), 0.2);
        assert_eq!(r.agreement, 1.0);
        let r = compare_grid(&grid, &ConstantOracle(true), 0.2);
        assert_eq!(r.agreement, 0.0);
        assert_eq!(r.false_negative_rate, 1.0);
        let cone = ConeOracle { slope: 0.5 };
        assert!(cone.contains(0.0, 1.0) && !cone.contains(0.0, -0.1));
        assert!((cone.boundary_distance(0.0, -1.0) - 1.0).abs() < 1e-12);
        assert!(cone.boundary_distance(2.0, 1.0) < 1e-12);
    }

    #[test]
    fn bad_parameters() {
        let sys = ControlSystem::from_scene(scenario(ScenarioName::ConeR2), DEFAULT_FAN).unwrap();
        let q0 = v(&[0.0, 0.0]);
        assert!(attainable_set(&sys, &q0, &ReachParams { horizon: 0.0, ..cone_params(10, 1) }).is_err());
        assert!(attainable_set(&sys, &q0, &ReachParams { max_letters: 0, ..cone_params(10, 1) }).is_err());
        assert!(Window::new(1.0, 0.0, 0.0, 1.0).is_err());
        assert!(ReachGrid::new(Window::new(0.0, 1.0, 0.0, 1.0).unwrap(), 0.0).is_err());
        let outside = attainable_set(&sys, &v(&[5.0, 5.0]), &cone_params(10, 1)).unwrap();
        assert_eq!(outside.occupied_cells(), 0);
    }
}
