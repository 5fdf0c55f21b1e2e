//! TOML experiment configuration. One file = one experiment; unknown keys
//! are rejected so typos fail loudly at validation time.

use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    GpBaseline,
    SaddleSolve,
    EkSweep,
    LangevinSweep,
    SpectrumSweep,
    PhaseRetrieval,
    Diagnostics,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    /// "cnn_linear" or "quad".
    pub kind: String,
    // cnn fields
    pub n_windows: Option<usize>,
    pub window: Option<usize>,
    pub channels: Option<usize>,
    pub sigma_a2: Option<f64>,
    // shared / quad fields
    pub sigma_w2: Option<f64>,
    pub d: Option<usize>,
    pub width: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataBlock {
    pub n_train: usize,
    #[serde(default)]
    pub n_test: usize,
    /// gaussian_unit | gaussian_1_over_d | hypersphere
    pub measure: String,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_true")]
    pub teacher_normalize: bool,
    /// Number of independent teacher/data seeds.
    #[serde(default = "default_one")]
    pub seeds: usize,
}

fn default_radius() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}
fn default_one() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    #[serde(default = "default_method")]
    pub method: String,
    pub sigma2: f64,
    #[serde(default)]
    pub anneal_from: Option<f64>,
    #[serde(default = "default_stages")]
    pub anneal_stages: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_damping")]
    pub damping: f64,
    /// cnn shift evaluation: resummed | series4 | series6
    #[serde(default = "default_shift_mode")]
    pub shift_mode: String,
}

fn default_method() -> String {
    "damped_fixed_point".into()
}
fn default_stages() -> usize {
    12
}
fn default_tol() -> f64 {
    1e-10
}
fn default_max_iter() -> usize {
    20_000
}
fn default_damping() -> f64 {
    0.5
}
fn default_shift_mode() -> String {
    "resummed".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LangevinBlock {
    /// Learning rate; omit for the stability-based automatic choice.
    #[serde(default)]
    pub eta: Option<f64>,
    pub sigma2: f64,
    pub steps: usize,
    #[serde(default)]
    pub burn_in: Option<usize>,
    #[serde(default = "default_thin")]
    pub thin: usize,
    pub n_seeds: usize,
}

fn default_thin() -> usize {
    10
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    /// Channel counts for C sweeps.
    #[serde(default)]
    pub channels: Vec<usize>,
    /// (n, S) pairs for paired sweeps (N = S).
    #[serde(default)]
    pub ns_pairs: Vec<(usize, usize)>,
    /// n/d ratios for the phase-retrieval threshold scan.
    #[serde(default)]
    pub n_over_d: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub output_dir: String,
    pub master_seed: u64,
    pub model: ModelBlock,
    pub data: DataBlock,
    #[serde(default)]
    pub solver: Option<SolverBlock>,
    #[serde(default)]
    pub langevin: Option<LangevinBlock>,
    #[serde(default)]
    pub sweep: SweepBlock,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("schema violation: {0}")]
    Schema(String),
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<(Self, String), ConfigError> {
        let raw = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig = toml::from_str(&raw)?;
        cfg.validate()?;
        Ok((cfg, raw))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match self.model.kind.as_str() {
            "cnn_linear" => {
                for (name, missing) in [
                    ("n_windows", self.model.n_windows.is_none()),
                    ("window", self.model.window.is_none()),
                    ("channels", self.model.channels.is_none()),
                    ("sigma_a2", self.model.sigma_a2.is_none()),
                    ("sigma_w2", self.model.sigma_w2.is_none()),
                ] {
                    if missing {
                        return Err(ConfigError::Schema(format!("cnn_linear model requires `{name}`")));
                    }
                }
            }
            "quad" => {
                for (name, missing) in [
                    ("d", self.model.d.is_none()),
                    ("width", self.model.width.is_none()),
                    ("sigma_w2", self.model.sigma_w2.is_none()),
                ] {
                    if missing {
                        return Err(ConfigError::Schema(format!("quad model requires `{name}`")));
                    }
                }
            }
            other => {
                return Err(ConfigError::Schema(format!(
                    "unknown model kind `{other}` (expected cnn_linear or quad)"
                )))
            }
        }
        match self.data.measure.as_str() {
            "gaussian_unit" | "gaussian_1_over_d" | "hypersphere" => {}
            other => return Err(ConfigError::Schema(format!("unknown measure `{other}`"))),
        }
        let needs_solver = matches!(
            self.experiment,
            ExperimentKind::SaddleSolve
                | ExperimentKind::PhaseRetrieval
                | ExperimentKind::Diagnostics
                | ExperimentKind::EkSweep
                | ExperimentKind::GpBaseline
        );
        if needs_solver && self.solver.is_none() {
            return Err(ConfigError::Schema("this experiment requires a [solver] block".into()));
        }
        let needs_langevin = matches!(
            self.experiment,
            ExperimentKind::LangevinSweep | ExperimentKind::SpectrumSweep
        );
        if needs_langevin && self.langevin.is_none() {
            return Err(ConfigError::Schema("this experiment requires a [langevin] block".into()));
        }
        if let Some(s) = &self.solver {
            match s.method.as_str() {
                "damped_fixed_point" | "newton_krylov" => {}
                other => return Err(ConfigError::Schema(format!("unknown solver method `{other}`"))),
            }
            match s.shift_mode.as_str() {
                "resummed" | "series4" | "series6" => {}
                other => return Err(ConfigError::Schema(format!("unknown shift mode `{other}`"))),
            }
            if s.sigma2 <= 0.0 {
                return Err(ConfigError::Schema("solver.sigma2 must be positive".into()));
            }
        }
        if let Some(l) = &self.langevin {
            if l.sigma2 <= 0.0 || l.steps == 0 || l.n_seeds == 0 {
                return Err(ConfigError::Schema("langevin block needs positive sigma2, steps, n_seeds".into()));
            }
            if let Some(b) = l.burn_in {
                if b >= l.steps {
                    return Err(ConfigError::Schema("langevin.burn_in must be below steps".into()));
                }
            }
        }
        Ok(())
    }
}
