//! Experiment config file. Every section rejects unknown keys.

use std::path::{Path, PathBuf};

use hidden_bandit::simulator::{Horizon, IndexPrecompute, PolicyKind};
use hidden_bandit::solver::{DEFAULT_GRID_POINTS, DEFAULT_MAX_ITERATIONS, DEFAULT_TOLERANCE};
use hidden_bandit::{ArmParams, SolverConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub arms: Vec<ArmParams>,
    pub beta: f64,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub subsidy: Option<f64>,
    #[serde(default)]
    pub subsidy_sweep: Option<SweepSection>,
    #[serde(default)]
    pub sim: Option<SimSection>,
    #[serde(default)]
    pub index: IndexSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub grid_points: usize,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            grid_points: DEFAULT_GRID_POINTS,
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub from: f64,
    pub to: f64,
    pub step: f64,
}

/// `"auto"` or a number of slots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HorizonSpec {
    Slots(usize),
    Keyword(AutoKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoKeyword {
    Auto,
}

impl From<HorizonSpec> for Horizon {
    fn from(h: HorizonSpec) -> Self {
        match h {
            HorizonSpec::Slots(t) => Horizon::Fixed(t),
            HorizonSpec::Keyword(AutoKeyword::Auto) => Horizon::Auto,
        }
    }
}

fn default_horizon() -> HorizonSpec {
    HorizonSpec::Keyword(AutoKeyword::Auto)
}

fn default_policies() -> Vec<PolicyKind> {
    vec![PolicyKind::Index, PolicyKind::Myopic]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub episodes: usize,
    pub seed: u64,
    #[serde(default = "default_horizon")]
    pub horizon: HorizonSpec,
    pub initial_pi: Vec<f64>,
    /// 1 for available, 0 for unavailable.
    pub initial_y: Vec<u8>,
    #[serde(default = "default_policies")]
    pub policies: Vec<PolicyKind>,
    /// Discount factors for `compare`; defaults to the top-level `beta`.
    #[serde(default)]
    pub betas: Option<Vec<f64>>,
    #[serde(default)]
    pub index_precompute: Option<IndexPrecompute>,
    /// Episodes per policy written as JSON lines by `simulate`.
    #[serde(default)]
    pub trace_episodes: usize,
}

fn default_beliefs() -> Vec<f64> {
    (0..=10).map(|k| k as f64 / 10.0).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexSection {
    /// Beliefs at which `index` evaluates every arm, for both availabilities.
    #[serde(default = "default_beliefs")]
    pub beliefs: Vec<f64>,
    #[serde(default = "default_w_tolerance")]
    pub w_tolerance: f64,
}

fn default_w_tolerance() -> f64 {
    1e-6
}

impl Default for IndexSection {
    fn default() -> Self {
        Self {
            beliefs: default_beliefs(),
            w_tolerance: default_w_tolerance(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

fn default_dir() -> PathBuf {
    PathBuf::from("bandit-out")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            formats: default_formats(),
        }
    }
}

impl ExperimentConfig {
    /// Parses `text` and checks everything that does not need a solve.
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.check_shape()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<u8>), ConfigError> {
        let bytes = std::fs::read(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let text = String::from_utf8_lossy(&bytes);
        Ok((Self::parse(&text, path)?, bytes))
    }

    fn check_shape(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.arms.is_empty() {
            return bad("config must list at least one arm".into());
        }
        if self.subsidy.is_some() && self.subsidy_sweep.is_some() {
            return bad("give either subsidy or subsidy_sweep, not both".into());
        }
        if let Some(s) = &self.subsidy_sweep {
            if !(s.step > 0.0) || !(s.from <= s.to) {
                return bad(format!("subsidy_sweep needs from <= to and step > 0, got {s:?}"));
            }
        }
        if let Some(sim) = &self.sim {
            let n = self.arms.len();
            if sim.initial_pi.len() != n || sim.initial_y.len() != n {
                return bad(format!(
                    "sim.initial_pi and sim.initial_y need {n} entries, got {} and {}",
                    sim.initial_pi.len(),
                    sim.initial_y.len()
                ));
            }
            if let Some(y) = sim.initial_y.iter().find(|&&y| y > 1) {
                return bad(format!("sim.initial_y entries must be 0 or 1, got {y}"));
            }
        }
        if self.output.formats.is_empty() {
            return bad("output.formats must not be empty".into());
        }
        Ok(())
    }

    pub fn solver_config(&self, beta: f64, w: f64) -> SolverConfig {
        SolverConfig {
            grid_points: self.solver.grid_points,
            tolerance: self.solver.tolerance,
            max_iterations: self.solver.max_iterations,
            beta,
            subsidy: w,
        }
    }
}
