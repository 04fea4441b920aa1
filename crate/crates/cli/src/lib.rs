//! Command-line front end: flag and config-file parsing, dispatch to the
//! geometry kernels, CSV and SVG emission.

pub mod config;
pub mod run;
pub mod svg;

use std::path::PathBuf;

use clap::Parser;

use crate::config::{parse_list, CommandName, ConfigError, RawConfig, RunConfig};
use crate::run::{dispatch, RunError};

/// Environment variable consulted when `--threads` is not given.
pub const THREADS_ENV: &str = "FINSLER_REACH_THREADS";

#[derive(Debug, Parser)]
#[command(name = "finsler", version, about = "Finsler geodesics, attainable sets and Jacobi triples")]
pub struct Cli {
    /// Command to run (may also come from the config file).
    #[arg(value_enum)]
    pub command: Option<CommandName>,
    /// JSON file with the same keys as the flags; flags win on conflict.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Registry scenario name.
    #[arg(long)]
    pub scenario: Option<String>,
    /// Scenario override file `{"name": ..., "params": {...}}`.
    #[arg(long)]
    pub scenario_file: Option<PathBuf>,
    /// Initial point, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<String>,
    /// Initial velocity, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub v0: Option<String>,
    /// Integration time (negative integrates backwards).
    #[arg(long = "T", allow_hyphen_values = true)]
    pub duration: Option<f64>,
    /// Integration step.
    #[arg(long, allow_hyphen_values = true)]
    pub step: Option<f64>,
    /// Use the Zermelo construction for Killing winds.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub zermelo: Option<bool>,
    /// Start point of the control words, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub q0: Option<String>,
    /// Total duration of each sampled word.
    #[arg(long, allow_hyphen_values = true)]
    pub horizon: Option<f64>,
    /// Maximum number of letters per word.
    #[arg(long)]
    pub letters: Option<usize>,
    /// Number of sampled words.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Grid window `xmin,xmax,ymin,ymax`.
    #[arg(long, allow_hyphen_values = true)]
    pub window: Option<String>,
    /// Grid cell size.
    #[arg(long, allow_hyphen_values = true)]
    pub res: Option<f64>,
    /// Sampling seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of base directions lifted over a planar base.
    #[arg(long)]
    pub fan: Option<usize>,
    /// Evaluation point, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub x: Option<String>,
    /// Maximum bracket depth.
    #[arg(long)]
    pub depth: Option<usize>,
    /// Triple file or catalog name (flat, sphere, mixed, hopf).
    #[arg(long)]
    pub triple: Option<String>,
    /// Rank of a catalog triple.
    #[arg(long)]
    pub n: Option<usize>,
    /// Scan step for singular instants.
    #[arg(long, allow_hyphen_values = true)]
    pub scan_step: Option<f64>,
    /// Threshold for singular instants and Riccati checks.
    #[arg(long, allow_hyphen_values = true)]
    pub tolerance: Option<f64>,
    /// Check suite name.
    #[arg(long)]
    pub suite: Option<String>,
    /// Output CSV path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output SVG path.
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Worker threads for sampling (default: FINSLER_REACH_THREADS, then all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

impl Cli {
    /// The flags as a raw configuration.
    pub fn to_raw(&self) -> Result<RawConfig, ConfigError> {
        let list = |field: &str, v: &Option<String>| v.as_deref().map(|s| parse_list(field, s)).transpose();
        Ok(RawConfig {
            command: self.command,
            scenario: self.scenario.clone(),
            scenario_file: self.scenario_file.clone(),
            x0: list("x0", &self.x0)?,
            v0: list("v0", &self.v0)?,
            duration: self.duration,
            step: self.step,
            zermelo: self.zermelo,
            q0: list("q0", &self.q0)?,
            horizon: self.horizon,
            letters: self.letters,
            samples: self.samples,
            window: list("window", &self.window)?,
            res: self.res,
            seed: self.seed,
            fan: self.fan,
            x: list("x", &self.x)?,
            depth: self.depth,
            triple: self.triple.clone(),
            n: self.n,
            scan_step: self.scan_step,
            tolerance: self.tolerance,
            suite: self.suite.clone(),
            out: self.out.clone(),
            svg: self.svg.clone(),
            threads: self.threads,
        })
    }
}

fn thread_count(raw: &RawConfig) -> Result<Option<usize>, ConfigError> {
    if raw.threads.is_some() {
        return Ok(raw.threads);
    }
    match std::env::var(THREADS_ENV) {
        Ok(text) => match text.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(ConfigError::new(THREADS_ENV, format!("'{text}' is not a positive integer"))),
        },
        Err(_) => Ok(None),
    }
}

/// Parse, validate and run; returns the summary line.
pub fn execute(cli: &Cli) -> Result<String, RunError> {
    let flags = cli.to_raw()?;
    let raw = match &cli.config {
        Some(path) => flags.overlay(RawConfig::load(path)?),
        None => flags,
    };
    let threads = thread_count(&raw)?;
    let config = RunConfig::from_raw(raw)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| RunError::Io(format!("cannot start worker threads: {e}")))?;
    log::debug!("running with {} worker threads", pool.current_num_threads());
    pool.install(|| dispatch(config))
}
