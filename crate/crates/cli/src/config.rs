//! Run configuration files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::Value;
use switchgrid::export::LevelSelection;
use switchgrid::harness::{CounterexampleOracle, Entry, Perturbation};
use switchgrid::model::{Counterexample, PumpedStorage};
use switchgrid::{load_model, Error, GridSpec, ModelSpec, PenaltyLevel, PumpedStorageParams, Result, SchemeParams};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Model file, relative to the config file.
    pub model: Option<PathBuf>,
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub penalty: PenaltyConfig,
    #[serde(default)]
    pub scheme: SchemeConfig,
    pub simulation: Option<SimulationConfig>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub bounds: Vec<(f64, f64)>,
    pub points: Vec<usize>,
    #[serde(default)]
    pub time_steps: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyConfig {
    #[serde(default = "default_n")]
    pub n: u32,
    /// Levels for `converge` and `verify`; defaults to 1, 2, 4, …, n.
    #[serde(default)]
    pub ladder: Option<Vec<u32>>,
}

fn default_n() -> u32 {
    64
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig { n: default_n(), ladder: None }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    #[serde(default = "default_obstacle_tol")]
    pub obstacle_tol: f64,
    #[serde(default)]
    pub max_sweeps: Option<usize>,
    /// Switching tolerance of the extracted policy.
    #[serde(default = "default_policy_eps")]
    pub policy_eps: f64,
}

fn default_obstacle_tol() -> f64 {
    SchemeParams::default().obstacle_tol
}

fn default_policy_eps() -> f64 {
    1e-12
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig { obstacle_tol: default_obstacle_tol(), max_sweeps: None, policy_eps: default_policy_eps() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub paths: usize,
    #[serde(default)]
    pub dt_sim: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    pub start: StartConfig,
    #[serde(default)]
    pub write_paths: bool,
}

/// Start state; `regime` is one-based.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartConfig {
    #[serde(default)]
    pub t: f64,
    pub x: Vec<f64>,
    pub regime: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
    #[serde(default)]
    pub levels: LevelsConfig,
}

fn default_out() -> PathBuf {
    PathBuf::from("switchgrid-out")
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: default_out(), levels: LevelsConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum LevelsConfig {
    #[default]
    All,
    Initial,
    Stride(usize),
}

impl From<LevelsConfig> for LevelSelection {
    fn from(l: LevelsConfig) -> Self {
        match l {
            LevelsConfig::All => LevelSelection::All,
            LevelsConfig::Initial => LevelSelection::Initial,
            LevelsConfig::Stride(k) => LevelSelection::Stride(k),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "default_lookahead")]
    pub lookahead: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_dpp_factor")]
    pub dpp_factor: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_verify_obstacle_tol")]
    pub obstacle_tol: f64,
    #[serde(default = "default_oracle_tol")]
    pub oracle_tol: f64,
    #[serde(default)]
    pub perturb: Option<PerturbConfig>,
}

fn default_lookahead() -> usize {
    1
}
fn default_samples() -> usize {
    200
}
fn default_dpp_factor() -> f64 {
    2.0
}
fn default_eta() -> f64 {
    1.0
}
fn default_verify_obstacle_tol() -> f64 {
    1e-9
}
fn default_oracle_tol() -> f64 {
    0.05
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            lookahead: default_lookahead(),
            samples: default_samples(),
            dpp_factor: default_dpp_factor(),
            eta: default_eta(),
            seed: 0,
            obstacle_tol: default_verify_obstacle_tol(),
            oracle_tol: default_oracle_tol(),
            perturb: None,
        }
    }
}

/// Shift of one field entry before verification; `regime` is one-based.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbConfig {
    pub level: usize,
    pub node: usize,
    pub regime: usize,
    pub delta: f64,
}

impl PerturbConfig {
    pub fn to_perturbation(self) -> Result<Perturbation> {
        if self.regime == 0 {
            return Err(config_error("verify.perturb.regime is one-based"));
        }
        Ok(Perturbation { entry: Entry { level: self.level, node: self.node, regime: self.regime - 1 }, delta: self.delta })
    }
}

pub fn config_error(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl RunConfig {
    /// Reads a config file; a relative model path is resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| config_error(format!("config {}: {e}", path.display())))?;
        if let Some(model) = cfg.model.as_mut() {
            if model.is_relative() {
                if let Some(dir) = path.parent() {
                    *model = dir.join(&*model);
                }
            }
        }
        Ok(cfg)
    }

    pub fn penalty(&self) -> Result<PenaltyLevel> {
        PenaltyLevel::new(self.penalty.n)
    }

    /// The configured ladder, or 1, 2, 4, … up to and including `n`.
    pub fn ladder(&self) -> Result<Vec<PenaltyLevel>> {
        let levels = match &self.penalty.ladder {
            Some(l) => l.clone(),
            None => {
                let mut l = Vec::new();
                let mut k = 1u32;
                while k < self.penalty.n {
                    l.push(k);
                    k = k.saturating_mul(2);
                }
                l.push(self.penalty.n);
                l
            }
        };
        if levels.is_empty() {
            return Err(config_error("penalty.ladder is empty"));
        }
        if levels.windows(2).any(|w| w[1] < w[0]) {
            return Err(config_error(format!("penalty.ladder {levels:?} must be non-decreasing")));
        }
        levels.into_iter().map(PenaltyLevel::new).collect()
    }

    pub fn scheme_params(&self) -> Result<SchemeParams> {
        if !(self.scheme.obstacle_tol >= 0.0) {
            return Err(config_error("scheme.obstacle_tol must be nonnegative"));
        }
        Ok(SchemeParams { obstacle_tol: self.scheme.obstacle_tol, max_sweeps: self.scheme.max_sweeps })
    }
}

/// A loaded model with the defaults its file implies.
pub struct LoadedModel {
    pub spec: ModelSpec,
    pub default_grid: Option<GridSpec>,
    pub counterexample: Option<CounterexampleOracle>,
}

pub fn load(path: &Path) -> Result<LoadedModel> {
    let text = fs::read_to_string(path)
        .map_err(|e| config_error(format!("cannot read model file {}: {e}", path.display())))?;
    let spec = load_model(path)?;
    let raw: Value = serde_json::from_str(&text)?;
    let builtin = raw.pointer("/coefficients/builtin").and_then(Value::as_str);
    let param = |k: &str| raw.pointer(&format!("/coefficients/params/{k}")).and_then(Value::as_f64);
    let (default_grid, counterexample) = match builtin {
        Some("counterexample") => {
            let cost = param("cost").unwrap_or(spec.constants().min_cost);
            (Some(Counterexample::default_grid()), Some(CounterexampleOracle::new(spec.horizon(), cost)))
        }
        Some("pumped_storage") => {
            let defaults = PumpedStorageParams::default();
            let params = PumpedStorageParams {
                horizon: spec.horizon(),
                reversion: param("reversion").unwrap_or(defaults.reversion),
                mean_price: param("mean_price").unwrap_or(defaults.mean_price),
                price_vol: param("price_vol").unwrap_or(defaults.price_vol),
                switch_cost: param("switch_cost").unwrap_or(defaults.switch_cost),
            };
            let ps = PumpedStorage::new(
                param("level_max").unwrap_or(1.0),
                params,
                param("initial_level").unwrap_or(0.0),
                param("initial_price").unwrap_or(defaults.mean_price),
            )?;
            (Some(ps.default_grid()), None)
        }
        _ => (None, None),
    };
    Ok(LoadedModel { spec, default_grid, counterexample })
}

impl LoadedModel {
    pub fn grid_spec(&self, cfg: &RunConfig) -> Result<GridSpec> {
        match (&cfg.grid, &self.default_grid) {
            (Some(g), _) => Ok(GridSpec::new(g.bounds.clone(), g.points.clone(), g.time_steps)),
            (None, Some(g)) => Ok(g.clone()),
            (None, None) => Err(config_error("the config needs a grid for this model")),
        }
    }
}
