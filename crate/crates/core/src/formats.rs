//! On-disk formats: trajectory, grid and field CSV, triple and scenario JSON.
//!
//! Floats are written with 17 significant digits (`{:.16e}`), so every value
//! survives a write/parse cycle bit for bit and parse-then-write reproduces
//! an emitted file byte for byte.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::control::ReachGrid;
use crate::error::{GeomError, Result};
use crate::geodesic::{PhaseState, Trajectory};
use crate::jacobi::{JacobiField, JacobiTriple, TripleName, DEFAULT_WINDOW};
use crate::scene::{scenario_with, ScenarioName, ScenarioParams, Scene};

fn parse_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(GeomError::Parse(msg.into()))
}

pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_float(field: &str, line: usize, column: &str) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| GeomError::Parse(format!("line {line}: column {column}: '{field}' is not a number")))?;
    if !v.is_finite() {
        return parse_err(format!("line {line}: column {column}: non-finite value"));
    }
    Ok(v)
}

/// A time series of paired vectors, the common shape of trajectory
/// (`t,x1..xn,v1..vn`) and field (`t,J1..Jn,dJ1..dJn`) files.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSeries {
    pub times: Vec<f64>,
    pub first: Vec<DVector<f64>>,
    pub second: Vec<DVector<f64>>,
}

impl PairedSeries {
    pub fn dim(&self) -> usize {
        self.first.first().map_or(0, |v| v.len())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

fn series_header(n: usize, a: &str, b: &str) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=n).map(|i| format!("{a}{i}")));
    cols.extend((1..=n).map(|i| format!("{b}{i}")));
    cols.join(",")
}

fn write_series(series: &PairedSeries, a: &str, b: &str) -> String {
    let n = series.dim();
    let mut out = series_header(n, a, b);
    out.push('\n');
    for k in 0..series.len() {
        let mut row = vec![format_float(series.times[k])];
        row.extend(series.first[k].iter().map(|&x| format_float(x)));
        row.extend(series.second[k].iter().map(|&x| format_float(x)));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn parse_series(text: &str, a: &str, b: &str) -> Result<PairedSeries> {
    let mut lines = text.lines().enumerate();
    let Some((_, header)) = lines.next() else {
        return parse_err("empty file");
    };
    let cols: Vec<&str> = header.trim_end_matches('\r').split(',').collect();
    if cols.len() < 3 || cols.len() % 2 == 0 {
        return parse_err(format!("header must be t,{a}1..{a}n,{b}1..{b}n"));
    }
    let n = (cols.len() - 1) / 2;
    if header.trim_end_matches('\r') != series_header(n, a, b) {
        return parse_err(format!("header must be {}", series_header(n, a, b)));
    }
    let mut series = PairedSeries { times: Vec::new(), first: Vec::new(), second: Vec::new() };
    for (idx, line) in lines {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return parse_err(format!("line {}: expected {} columns, found {}", idx + 1, cols.len(), fields.len()));
        }
        let vals = fields
            .iter()
            .zip(&cols)
            .map(|(f, c)| parse_float(f, idx + 1, c))
            .collect::<Result<Vec<f64>>>()?;
        series.times.push(vals[0]);
        series.first.push(DVector::from_column_slice(&vals[1..=n]));
        series.second.push(DVector::from_column_slice(&vals[n + 1..]));
    }
    if series.is_empty() {
        return parse_err("no data rows");
    }
    Ok(series)
}

/// Trajectory CSV with header `t,x1..xn,v1..vn`.
pub fn trajectory_to_csv(traj: &Trajectory) -> String {
    let series = PairedSeries {
        times: traj.times.clone(),
        first: traj.states.iter().map(|s| s.x.clone()).collect(),
        second: traj.states.iter().map(|s| s.v.clone()).collect(),
    };
    if series.is_empty() {
        return "t\n".to_string();
    }
    write_series(&series, "x", "v")
}

/// Parses a trajectory CSV; the result is never marked truncated.
pub fn parse_trajectory_csv(text: &str) -> Result<Trajectory> {
    let series = parse_series(text, "x", "v")?;
    let states = series.first.into_iter().zip(series.second).map(|(x, v)| PhaseState { x, v }).collect();
    Ok(Trajectory { times: series.times, states, truncated: false })
}

/// Field CSV with header `t,J1..Jn,dJ1..dJn`, one row per grid point of the field.
pub fn field_to_csv(field: &JacobiField) -> String {
    let series = PairedSeries {
        times: (0..field.len()).map(|k| field.time(k)).collect(),
        first: (0..field.len()).map(|k| field.value_at_index(k)).collect(),
        second: (0..field.len()).map(|k| field.derivative_at_index(k)).collect(),
    };
    write_series(&series, "J", "dJ")
}

pub fn series_to_field_csv(series: &PairedSeries) -> String {
    write_series(series, "J", "dJ")
}

pub fn parse_field_csv(text: &str) -> Result<PairedSeries> {
    parse_series(text, "J", "dJ")
}

/// One row of a grid CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridRow {
    pub i: usize,
    pub j: usize,
    pub x_center: f64,
    pub y_center: f64,
    pub occupied: bool,
    pub samples: u64,
}

pub const GRID_HEADER: &str = "i,j,x_center,y_center,occupied,samples";

/// Grid CSV rows in row-major order (`j` outer, `i` inner).
pub fn grid_rows(grid: &ReachGrid) -> Vec<GridRow> {
    let mut rows = Vec::with_capacity(grid.nx * grid.ny);
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let (x_center, y_center) = grid.cell_center(i, j);
            rows.push(GridRow { i, j, x_center, y_center, occupied: grid.occupied(i, j), samples: grid.count(i, j) });
        }
    }
    rows
}

pub fn grid_to_csv(grid: &ReachGrid) -> String {
    rows_to_csv(&grid_rows(grid))
}

pub fn rows_to_csv(rows: &[GridRow]) -> String {
    let mut out = String::from(GRID_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.i,
            r.j,
            format_float(r.x_center),
            format_float(r.y_center),
            u8::from(r.occupied),
            r.samples
        ));
    }
    out
}

/// Parses a grid CSV; `occupied` must agree with `samples > 0`.
pub fn parse_grid_csv(text: &str) -> Result<Vec<GridRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end_matches('\r') == GRID_HEADER => {}
        _ => return parse_err(format!("header must be {GRID_HEADER}")),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let ln = idx + 1;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return parse_err(format!("line {ln}: expected 6 columns, found {}", f.len()));
        }
        let int = |s: &str, col: &str| -> Result<u64> {
            s.trim().parse().map_err(|_| GeomError::Parse(format!("line {ln}: column {col}: '{s}' is not a count")))
        };
        let occupied = match f[4].trim() {
            "0" => false,
            "1" => true,
            other => return parse_err(format!("line {ln}: column occupied: '{other}' must be 0 or 1")),
        };
        let row = GridRow {
            i: int(f[0], "i")? as usize,
            j: int(f[1], "j")? as usize,
            x_center: parse_float(f[2], ln, "x_center")?,
            y_center: parse_float(f[3], ln, "y_center")?,
            occupied,
            samples: int(f[5], "samples")?,
        };
        if row.occupied != (row.samples > 0) {
            return parse_err(format!("line {ln}: occupied disagrees with samples"));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Curvature of a triple file: a catalog name or a constant diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CurvatureSpec {
    Named(String),
    Diagonal { diag: Vec<f64> },
}

/// Triple/subspace file: `{ "n", "R", "domain", "basis" }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripleSpec {
    pub n: usize,
    #[serde(rename = "R")]
    pub r: CurvatureSpec,
    #[serde(default = "default_domain")]
    pub domain: [f64; 2],
    #[serde(default)]
    pub basis: Vec<Vec<f64>>,
}

fn default_domain() -> [f64; 2] {
    [DEFAULT_WINDOW.0, DEFAULT_WINDOW.1]
}

impl TripleSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| GeomError::Parse(format!("triple file: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("triple spec serializes")
    }

    /// The triple and the basis of initial conditions.
    pub fn build(&self) -> Result<(JacobiTriple, Vec<DVector<f64>>)> {
        let domain = (self.domain[0], self.domain[1]);
        let triple = match &self.r {
            CurvatureSpec::Named(name) => JacobiTriple::catalog(name.parse::<TripleName>()?, Some(self.n), domain)?,
            CurvatureSpec::Diagonal { diag } => {
                if diag.len() != self.n {
                    return Err(GeomError::InvalidInput(format!(
                        "R.diag has {} entries, expected n = {}",
                        diag.len(),
                        self.n
                    )));
                }
                JacobiTriple::constant(nalgebra::DMatrix::from_diagonal(&DVector::from_column_slice(diag)), domain)?
            }
        };
        let mut basis = Vec::with_capacity(self.basis.len());
        for (k, b) in self.basis.iter().enumerate() {
            if b.len() != 2 * self.n {
                return Err(GeomError::InvalidInput(format!(
                    "basis[{k}] has {} entries, expected 2n = {}",
                    b.len(),
                    2 * self.n
                )));
            }
            if b.iter().any(|x| !x.is_finite()) {
                return Err(GeomError::InvalidInput(format!("basis[{k}] is not finite")));
            }
            basis.push(DVector::from_column_slice(b));
        }
        Ok((triple, basis))
    }
}

/// Scenario override file: `{ "name", "params": { ... } }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioOverride {
    pub name: String,
    #[serde(default)]
    pub params: ScenarioParams,
}

impl ScenarioOverride {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| GeomError::Parse(format!("scenario file: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario override serializes")
    }

    pub fn build(&self) -> Result<Scene> {
        scenario_with(self.name.parse::<ScenarioName>()?, &self.params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::Window;
    use crate::jacobi::solve_jacobi;
    use proptest::prelude::*;

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![-1e6..1e6f64, Just(0.0), Just(-0.0), Just(1e-300), Just(f64::MAX), Just(f64::MIN_POSITIVE)]
    }

    proptest! {
        #[test]
        fn trajectory_csv_round_trips(n in 1usize..4, rows in prop::collection::vec(prop::collection::vec(finite(), 7), 0..20)) {
            let traj = Trajectory {
                times: rows.iter().map(|r| r[0]).collect(),
                states: rows
                    .iter()
                    .map(|r| PhaseState { x: DVector::from_column_slice(&r[1..=n]), v: DVector::from_column_slice(&r[4..4 + n]) })
                    .collect(),
                truncated: false,
            };
            let text = trajectory_to_csv(&traj);
            if rows.is_empty() {
                prop_assert!(parse_trajectory_csv(&text).is_err());
            } else {
                let back = parse_trajectory_csv(&text).unwrap();
                prop_assert_eq!(&back.times.iter().map(|t| t.to_bits()).collect::<Vec<_>>(), &traj.times.iter().map(|t| t.to_bits()).collect::<Vec<_>>());
                prop_assert_eq!(trajectory_to_csv(&back), text);
            }
        }

        #[test]
        fn grid_csv_round_trips(res in 0.05..1.0f64, marks in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 0..50)) {
            let mut grid = ReachGrid::new(Window::new(-1.0, 1.0, -1.0, 1.0).unwrap(), res).unwrap();
            for (x, y) in marks {
                grid.mark(x, y);
            }
            let text = grid_to_csv(&grid);
            let rows = parse_grid_csv(&text).unwrap();
            prop_assert_eq!(&rows, &grid_rows(&grid));
            prop_assert_eq!(rows_to_csv(&rows), text);
        }

        #[test]
        fn triple_json_round_trips(n in 1usize..4, diag in prop::collection::vec(-2.0..2.0f64, 3), b in 0.5..20.0f64) {
            let spec = TripleSpec {
                n,
                r: CurvatureSpec::Diagonal { diag: diag[..n].to_vec() },
                domain: [0.0, b],
                basis: vec![vec![0.25; 2 * n]],
            };
            let back = TripleSpec::from_json(&spec.to_json()).unwrap();
            prop_assert_eq!(&back, &spec);
            prop_assert_eq!(back.to_json(), spec.to_json());
            prop_assert!(spec.build().is_ok());
        }
    }

    #[test]
    fn field_csv_round_trips() {
        let (triple, basis) = TripleSpec::from_json(r#"{"n": 2, "R": "sphere", "domain": [0, 1], "basis": [[0, 0, 1, 0]]}"#)
            .unwrap()
            .build()
            .unwrap();
        let field = solve_jacobi(&triple, &basis[0], 0.01).unwrap();
        let text = field_to_csv(&field);
        assert!(text.starts_with("t,J1,J2,dJ1,dJ2\n"));
        let series = parse_field_csv(&text).unwrap();
        assert_eq!(series.len(), 101);
        assert_eq!(series_to_field_csv(&series), text);
        assert!((series.first[100][0] - 1.0_f64.sin()).abs() < 1e-10);
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        assert!(parse_trajectory_csv("").is_err());
        assert!(parse_trajectory_csv("t,x1,v2\n").is_err());
        assert!(parse_trajectory_csv("t,x1,v1").is_err());
        assert!(parse_field_csv("t,J1,dJ1\n\n").is_err());
        assert!(parse_trajectory_csv("t,x1,v1\n1,2\n").is_err());
        assert!(parse_trajectory_csv("t,x1,v1\n1,2,inf\n").is_err());
        assert!(parse_grid_csv("i,j\n").is_err());
        assert!(parse_grid_csv(&format!("{GRID_HEADER}\n0,0,0.5,0.5,1,0\n")).is_err());
        assert!(parse_grid_csv(&format!("{GRID_HEADER}\n0,0,0.5,0.5,2,1\n")).is_err());
        assert!(TripleSpec::from_json(r#"{"n": 2, "R": "flat", "extra": 1}"#).is_err());
        let spec = TripleSpec::from_json(r#"{"n": 3, "R": "hopf"}"#).unwrap();
        assert_eq!(spec.domain, [0.0, DEFAULT_WINDOW.1]);
        assert!(spec.build().is_err());
        let spec = TripleSpec::from_json(r#"{"n": 2, "R": {"diag": [1]}, "basis": []}"#).unwrap();
        assert!(spec.build().is_err());
        let spec = TripleSpec::from_json(r#"{"n": 1, "R": "flat", "basis": [[1, 2, 3]]}"#).unwrap();
        assert!(spec.build().is_err());
    }

    #[test]
    fn scenario_overrides() {
        let o = ScenarioOverride::from_json(r#"{"name": "cone_r2", "params": {"wind": 0.25}}"#).unwrap();
        assert_eq!(o.params.wind, Some(0.25));
        assert_eq!(ScenarioOverride::from_json(&o.to_json()).unwrap(), o);
        assert_eq!(o.build().unwrap().name(), "cone_r2");
        assert!(ScenarioOverride::from_json(r#"{"name": "cone_r2", "params": {"speed": 1}}"#).is_err());
        assert!(ScenarioOverride::from_json(r#"{"name": "nowhere"}"#).unwrap().build().is_err());
        assert!(ScenarioOverride::from_json(r#"{"name": "sphere2", "params": {"wind": 0.1}}"#).unwrap().build().is_err());
    }
}
