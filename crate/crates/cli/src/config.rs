//! Run configuration: JSON config files and command-line flags share one set
//! of keys (`snake_case` in JSON, `--kebab-case` on the command line).

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use finsler_core::control::Window;
use finsler_core::formats::{ScenarioOverride, TripleSpec};
use finsler_core::jacobi::{hopf_line, JacobiTriple, TripleName, DEFAULT_FIELD_STEP, DEFAULT_SCAN_STEP, DEFAULT_WINDOW};
use finsler_core::scene::{scenario_by_name, Scene};
use finsler_core::Vector;
use serde::{Deserialize, Serialize};

/// A configuration problem, tagged with the offending key.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { field: field.into(), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid '{}': {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

type ConfigResult<T> = Result<T, ConfigError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CommandName {
    Geodesic,
    Reach,
    Orbit,
    Lierank,
    Jacobi,
    Check,
    ScenarioList,
}

impl CommandName {
    pub fn as_str(self) -> &'static str {
        match self {
            CommandName::Geodesic => "geodesic",
            CommandName::Reach => "reach",
            CommandName::Orbit => "orbit",
            CommandName::Lierank => "lierank",
            CommandName::Jacobi => "jacobi",
            CommandName::Check => "check",
            CommandName::ScenarioList => "scenario-list",
        }
    }

    /// Keys that apply to the command, besides `command`, `config` and `threads`.
    fn keys(self) -> &'static [&'static str] {
        match self {
            CommandName::Geodesic => &["scenario", "scenario_file", "x0", "v0", "T", "step", "zermelo", "out", "svg"],
            CommandName::Reach | CommandName::Orbit => &[
                "scenario",
                "scenario_file",
                "q0",
                "horizon",
                "letters",
                "samples",
                "window",
                "res",
                "seed",
                "step",
                "fan",
                "out",
                "svg",
            ],
            CommandName::Lierank => &["scenario", "scenario_file", "x", "depth", "fan"],
            CommandName::Jacobi => &["triple", "n", "step", "scan_step", "tolerance", "out"],
            CommandName::Check => &["suite"],
            CommandName::ScenarioList => &[],
        }
    }
}

impl fmt::Display for CommandName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Every configuration key, all optional. Flags and config files both
/// produce one of these; [`RawConfig::overlay`] lets flags win.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<CommandName>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario_file: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v0: Option<Vec<f64>>,
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zermelo: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q0: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub letters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub res: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fan: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub triple: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scan_step: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub suite: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub svg: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

macro_rules! overlay_fields {
    ($self:ident, $base:ident; $($f:ident),*) => {
        RawConfig { $($f: $self.$f.or($base.$f)),* }
    };
}

impl RawConfig {
    pub fn from_json(text: &str) -> ConfigResult<Self> {
        serde_json::from_str(text).map_err(|e| ConfigError::new("config", e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> ConfigResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Keys of `self` win over keys of `base`.
    pub fn overlay(self, base: RawConfig) -> RawConfig {
        overlay_fields!(self, base; command, scenario, scenario_file, x0, v0, duration, step, zermelo, q0, horizon,
            letters, samples, window, res, seed, fan, x, depth, triple, n, scan_step, tolerance, suite, out, svg, threads)
    }

    fn set_keys(&self) -> Vec<&'static str> {
        let mut keys = Vec::new();
        let mut push = |set: bool, k: &'static str| {
            if set {
                keys.push(k);
            }
        };
        push(self.scenario.is_some(), "scenario");
        push(self.scenario_file.is_some(), "scenario_file");
        push(self.x0.is_some(), "x0");
        push(self.v0.is_some(), "v0");
        push(self.duration.is_some(), "T");
        push(self.step.is_some(), "step");
        push(self.zermelo.is_some(), "zermelo");
        push(self.q0.is_some(), "q0");
        push(self.horizon.is_some(), "horizon");
        push(self.letters.is_some(), "letters");
        push(self.samples.is_some(), "samples");
        push(self.window.is_some(), "window");
        push(self.res.is_some(), "res");
        push(self.seed.is_some(), "seed");
        push(self.fan.is_some(), "fan");
        push(self.x.is_some(), "x");
        push(self.depth.is_some(), "depth");
        push(self.triple.is_some(), "triple");
        push(self.n.is_some(), "n");
        push(self.scan_step.is_some(), "scan_step");
        push(self.tolerance.is_some(), "tolerance");
        push(self.suite.is_some(), "suite");
        push(self.out.is_some(), "out");
        push(self.svg.is_some(), "svg");
        keys
    }
}

/// Comma-separated list of numbers, as used by vector-valued flags.
pub fn parse_list(field: &str, text: &str) -> ConfigResult<Vec<f64>> {
    text.split(',')
        .map(|s| {
            f64::from_str(s.trim()).map_err(|_| ConfigError::new(field, format!("'{s}' is not a number in '{text}'")))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct GeodesicConfig {
    pub scene: Scene,
    pub x0: Vector,
    pub v0: Vector,
    pub duration: f64,
    pub step: f64,
    pub zermelo: bool,
    pub out: Option<PathBuf>,
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct ReachConfig {
    pub scene: Scene,
    pub q0: Vector,
    pub horizon: f64,
    pub letters: usize,
    pub samples: usize,
    pub window: Window,
    pub res: f64,
    pub seed: u64,
    pub step: f64,
    pub fan: usize,
    pub out: Option<PathBuf>,
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct LieRankConfig {
    pub scene: Scene,
    pub x: Vector,
    pub depth: usize,
    pub fan: usize,
}

#[derive(Debug, Clone)]
pub struct JacobiConfig {
    pub triple: JacobiTriple,
    pub basis: Vec<Vector>,
    pub step: f64,
    pub scan_step: f64,
    pub tolerance: f64,
    pub out: Option<PathBuf>,
}

/// A validated run.
#[derive(Debug, Clone)]
pub enum RunConfig {
    Geodesic(GeodesicConfig),
    Reach(ReachConfig),
    Orbit(ReachConfig),
    LieRank(LieRankConfig),
    Jacobi(JacobiConfig),
    Check { suite: String },
    ScenarioList,
}

pub const DEFAULT_HORIZON: f64 = 6.0;
pub const DEFAULT_LETTERS: usize = 4;
pub const DEFAULT_SAMPLES: usize = 100_000;
pub const DEFAULT_RESOLUTION: f64 = 0.05;
pub const DEFAULT_REACH_STEP: f64 = 1e-2;
pub const DEFAULT_DEPTH: usize = 2;
pub const DEFAULT_TOLERANCE: f64 = 1e-6;

fn positive(field: &str, v: f64) -> ConfigResult<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::new(field, format!("must be positive and finite, got {v}")))
    }
}

fn at_least_one(field: &str, v: usize) -> ConfigResult<usize> {
    if v >= 1 {
        Ok(v)
    } else {
        Err(ConfigError::new(field, "must be at least 1"))
    }
}

fn required<T>(field: &str, v: Option<T>, command: CommandName) -> ConfigResult<T> {
    v.ok_or_else(|| ConfigError::new(field, format!("required by {command}")))
}

fn vector(field: &str, v: Vec<f64>, dim: usize) -> ConfigResult<Vector> {
    if v.len() != dim {
        return Err(ConfigError::new(field, format!("expected {dim} components, got {}", v.len())));
    }
    if v.iter().any(|c| !c.is_finite()) {
        return Err(ConfigError::new(field, "components must be finite"));
    }
    Ok(Vector::from_vec(v))
}

fn load_scene(raw: &RawConfig, command: CommandName) -> ConfigResult<Scene> {
    match (&raw.scenario, &raw.scenario_file) {
        (Some(_), Some(_)) => Err(ConfigError::new("scenario_file", "give either scenario or scenario_file, not both")),
        (Some(name), None) => scenario_by_name(name).map_err(|e| ConfigError::new("scenario", e.to_string())),
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ConfigError::new("scenario_file", format!("cannot read {}: {e}", path.display())))?;
            ScenarioOverride::from_json(&text)
                .and_then(|o| o.build())
                .map_err(|e| ConfigError::new("scenario_file", e.to_string()))
        }
        (None, None) => Err(ConfigError::new("scenario", format!("required by {command}"))),
    }
}

fn load_triple(raw: &RawConfig) -> ConfigResult<(JacobiTriple, Vec<Vector>)> {
    let source = required("triple", raw.triple.clone(), CommandName::Jacobi)?;
    let path = Path::new(&source);
    if let (false, Ok(name)) = (path.exists(), source.parse::<TripleName>()) {
        let triple = JacobiTriple::catalog(name, raw.n, DEFAULT_WINDOW).map_err(|e| ConfigError::new("n", e.to_string()))?;
        let n = triple.n();
        let basis = if name == TripleName::Hopf {
            vec![hopf_line()]
        } else {
            (0..n).map(|i| Vector::from_fn(2 * n, |k, _| if k == n + i { 1.0 } else { 0.0 })).collect()
        };
        return Ok((triple, basis));
    }
    if raw.n.is_some() {
        return Err(ConfigError::new("n", "only applies to catalog triple names"));
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new("triple", format!("'{source}' is neither a catalog name nor a readable file: {e}")))?;
    TripleSpec::from_json(&text).and_then(|s| s.build()).map_err(|e| ConfigError::new("triple", e.to_string()))
}

impl RunConfig {
    /// Validate a merged raw configuration.
    pub fn from_raw(raw: RawConfig) -> ConfigResult<RunConfig> {
        let command = raw.command.ok_or_else(|| ConfigError::new("command", "no command given"))?;
        let allowed = command.keys();
        if let Some(extra) = raw.set_keys().into_iter().find(|k| !allowed.contains(k)) {
            return Err(ConfigError::new(extra, format!("does not apply to {command}")));
        }
        if let Some(t) = raw.threads {
            at_least_one("threads", t)?;
        }
        match command {
            CommandName::Geodesic => {
                let scene = load_scene(&raw, command)?;
                let dim = scene.dim();
                let duration = required("T", raw.duration, command)?;
                if !duration.is_finite() || duration == 0.0 {
                    return Err(ConfigError::new("T", "must be finite and nonzero"));
                }
                Ok(RunConfig::Geodesic(GeodesicConfig {
                    x0: vector("x0", required("x0", raw.x0, command)?, dim)?,
                    v0: vector("v0", required("v0", raw.v0, command)?, dim)?,
                    duration,
                    step: positive("step", raw.step.unwrap_or(finsler_core::geodesic::DEFAULT_STEP))?,
                    zermelo: raw.zermelo.unwrap_or(false),
                    out: raw.out,
                    svg: raw.svg,
                    scene,
                }))
            }
            CommandName::Reach | CommandName::Orbit => {
                let scene = load_scene(&raw, command)?;
                let dim = scene.dim();
                let w = raw.window.unwrap_or_else(|| vec![-2.0, 2.0, -2.0, 2.0]);
                if w.len() != 4 {
                    return Err(ConfigError::new("window", "expected xmin,xmax,ymin,ymax"));
                }
                let window = Window::new(w[0], w[1], w[2], w[3]).map_err(|e| ConfigError::new("window", e.to_string()))?;
                let cfg = ReachConfig {
                    q0: vector("q0", raw.q0.unwrap_or_else(|| vec![0.0; dim]), dim)?,
                    horizon: positive("horizon", raw.horizon.unwrap_or(DEFAULT_HORIZON))?,
                    letters: at_least_one("letters", raw.letters.unwrap_or(DEFAULT_LETTERS))?,
                    samples: raw.samples.unwrap_or(DEFAULT_SAMPLES),
                    window,
                    res: positive("res", raw.res.unwrap_or(DEFAULT_RESOLUTION))?,
                    seed: raw.seed.unwrap_or(0),
                    step: positive("step", raw.step.unwrap_or(DEFAULT_REACH_STEP))?,
                    fan: at_least_one("fan", raw.fan.unwrap_or(finsler_core::control::DEFAULT_FAN))?,
                    out: raw.out,
                    svg: raw.svg,
                    scene,
                };
                Ok(if command == CommandName::Reach { RunConfig::Reach(cfg) } else { RunConfig::Orbit(cfg) })
            }
            CommandName::Lierank => {
                let scene = load_scene(&raw, command)?;
                let dim = scene.dim();
                Ok(RunConfig::LieRank(LieRankConfig {
                    x: vector("x", raw.x.unwrap_or_else(|| scene.probe_points(1)[0].as_slice().to_vec()), dim)?,
                    depth: at_least_one("depth", raw.depth.unwrap_or(DEFAULT_DEPTH))?,
                    fan: at_least_one("fan", raw.fan.unwrap_or(finsler_core::control::DEFAULT_FAN))?,
                    scene,
                }))
            }
            CommandName::Jacobi => {
                let (triple, basis) = load_triple(&raw)?;
                Ok(RunConfig::Jacobi(JacobiConfig {
                    triple,
                    basis,
                    step: positive("step", raw.step.unwrap_or(DEFAULT_FIELD_STEP))?,
                    scan_step: positive("scan_step", raw.scan_step.unwrap_or(DEFAULT_SCAN_STEP))?,
                    tolerance: positive("tolerance", raw.tolerance.unwrap_or(DEFAULT_TOLERANCE))?,
                    out: raw.out,
                }))
            }
            CommandName::Check => {
                let suite = raw.suite.unwrap_or_else(|| "paper".into());
                if suite != "paper" {
                    return Err(ConfigError::new("suite", format!("unknown suite '{suite}'; available: paper")));
                }
                Ok(RunConfig::Check { suite })
            }
            CommandName::ScenarioList => Ok(RunConfig::ScenarioList),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(json: &str) -> RawConfig {
        RawConfig::from_json(json).unwrap()
    }

    #[test]
    fn flags_win_over_file() {
        let file = raw(r#"{"command": "reach", "scenario": "cone_r2", "seed": 3, "samples": 10}"#);
        let flags = RawConfig { seed: Some(9), ..Default::default() };
        let merged = flags.overlay(file);
        assert_eq!(merged.seed, Some(9));
        assert_eq!(merged.samples, Some(10));
        assert_eq!(merged.command, Some(CommandName::Reach));
    }

    #[test]
    fn raw_config_round_trips() {
        let r = raw(r#"{"command": "geodesic", "scenario": "sin_wind_r3", "x0": [0, 0, 0], "v0": [1, 0, 0.25], "T": 6.2832}"#);
        assert_eq!(RawConfig::from_json(&r.to_json()).unwrap(), r);
        assert!(RawConfig::from_json(r#"{"command": "geodesic", "speed": 2}"#).is_err());
    }

    #[test]
    fn validation_names_the_field() {
        let err = |json: &str| RunConfig::from_raw(raw(json)).unwrap_err().field;
        assert_eq!(err(r#"{"command": "reach", "scenario": "cone_r2", "res": -1}"#), "res");
        assert_eq!(err(r#"{"command": "reach", "scenario": "cone_r2", "window": [1, 0, 0, 1]}"#), "window");
        assert_eq!(err(r#"{"command": "geodesic", "scenario": "cone_r2", "x0": [0, 0], "v0": [1, 0]}"#), "T");
        assert_eq!(err(r#"{"command": "geodesic", "scenario": "cone_r2", "x0": [0], "v0": [1, 0], "T": 1}"#), "x0");
        assert_eq!(err(r#"{"command": "geodesic", "scenario": "mars", "x0": [0], "v0": [1, 0], "T": 1}"#), "scenario");
        assert_eq!(err(r#"{"command": "lierank", "scenario": "cone_r2", "horizon": 3}"#), "horizon");
        assert_eq!(err(r#"{"command": "check", "suite": "other"}"#), "suite");
        assert_eq!(err(r#"{"command": "jacobi", "triple": "hopf", "n": 3}"#), "n");
        assert_eq!(err(r#"{"scenario": "cone_r2"}"#), "command");
    }

    #[test]
    fn catalog_triples_get_default_bases() {
        match RunConfig::from_raw(raw(r#"{"command": "jacobi", "triple": "sphere", "n": 3}"#)).unwrap() {
            RunConfig::Jacobi(j) => {
                assert_eq!(j.triple.n(), 3);
                assert_eq!(j.basis.len(), 3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn lists_parse() {
        assert_eq!(parse_list("window", "-2,2,-0.25,2.75").unwrap(), vec![-2.0, 2.0, -0.25, 2.75]);
        assert_eq!(parse_list("x0", "1,a").unwrap_err().field, "x0");
    }
}
