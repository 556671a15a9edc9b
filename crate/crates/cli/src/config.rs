//! The TOML run configuration. Every section carries its defaults, so a
//! partial file (or none) is completed before a run and the persisted copy
//! always spells out every value used.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use cts_core::eval::{Exp1Config, Exp2Config};
use cts_core::forecast::{ModelKind, TrainConfig};
use cts_core::graph::LagCorrection;
use cts_core::rng::Seed;
use cts_core::sampler::SplitRatios;
use cts_core::synthgen::SpecParams;
use cts_core::WindowSpec;

use crate::error::{CliError, Result};

pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub outdir: PathBuf,
    pub inputs: Inputs,
    pub generate: GenerateSection,
    pub discover: DiscoverSection,
    pub samples: SamplesSection,
    pub train: TrainSection,
    pub exp1: Exp1Config,
    pub exp2: Exp2Config,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            outdir: PathBuf::from("runs"),
            inputs: Inputs::default(),
            generate: GenerateSection::default(),
            discover: DiscoverSection::default(),
            samples: SamplesSection::default(),
            train: TrainSection::default(),
            exp1: Exp1Config::default(),
            exp2: Exp2Config::default(),
        }
    }
}

/// Files produced by earlier stages.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Inputs {
    pub data: Option<PathBuf>,
    pub graph: Option<PathBuf>,
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerateSection {
    pub vars: usize,
    pub steps: usize,
    pub max_lag: usize,
    pub cross_edges: usize,
    pub coeff_min: f64,
    pub coeff_max: f64,
    pub self_coeff_min: Option<f64>,
    pub self_coeff_max: Option<f64>,
    pub noise_std: f64,
}

impl Default for GenerateSection {
    fn default() -> Self {
        let p = SpecParams::default();
        Self {
            vars: p.n_vars,
            steps: 5000,
            max_lag: p.max_lag,
            cross_edges: p.cross_edges,
            coeff_min: p.coeff_range.0,
            coeff_max: p.coeff_range.1,
            self_coeff_min: None,
            self_coeff_max: None,
            noise_std: p.noise_std,
        }
    }
}

impl GenerateSection {
    pub fn params(&self) -> Result<SpecParams> {
        if self.vars < 2 {
            return Err(CliError::invalid(
                "generate.vars",
                format!("need at least 2 variables for cross edges, got {}", self.vars),
            ));
        }
        let self_coeff_range = match (self.self_coeff_min, self.self_coeff_max) {
            (None, None) => None,
            (Some(lo), Some(hi)) => Some((lo, hi)),
            _ => {
                return Err(CliError::invalid(
                    "generate.self_coeff_min",
                    "self_coeff_min and self_coeff_max must be given together",
                ))
            }
        };
        Ok(SpecParams {
            n_vars: self.vars,
            max_lag: self.max_lag,
            cross_edges: self.cross_edges,
            coeff_range: (self.coeff_min, self.coeff_max),
            self_coeff_range,
            noise_std: self.noise_std,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscoverSection {
    pub max_lag: usize,
    pub ar_order: usize,
    pub alpha: f64,
    pub correction: LagCorrection,
    /// Also export the p-value of every scanned lag.
    pub curves: bool,
}

impl Default for DiscoverSection {
    fn default() -> Self {
        Self {
            max_lag: 200,
            ar_order: 5,
            alpha: 0.01,
            correction: LagCorrection::default(),
            curves: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplesSection {
    pub context: usize,
    pub horizon: usize,
    pub stride: usize,
    pub scale_eps: f64,
    pub split: SplitRatios,
}

impl Default for SamplesSection {
    fn default() -> Self {
        Self {
            context: 30,
            horizon: 10,
            stride: 1,
            scale_eps: 0.0,
            split: SplitRatios::default(),
        }
    }
}

impl SamplesSection {
    pub fn window(&self) -> Result<WindowSpec> {
        Ok(WindowSpec::new(self.context, self.horizon, self.stride)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub model: ModelKind,
    /// Train and evaluate on synchronized pairs (otherwise non-synchronized).
    pub synchronized: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub ridge_lambda: f64,
    pub hidden_units: usize,
    pub mape_floor: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            model: ModelKind::Mlp,
            synchronized: true,
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            ridge_lambda: t.ridge_lambda,
            hidden_units: t.hidden_units,
            mape_floor: cts_core::eval::DEFAULT_MAPE_FLOOR,
        }
    }
}

impl TrainSection {
    pub fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            ridge_lambda: self.ridge_lambda,
            hidden_units: self.hidden_units,
            seed: Seed(seed).named("train", 0),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let err = |message: String| CliError::Config {
            path: path.to_path_buf(),
            message,
        };
        let value: toml::Value = toml::from_str(&text).map_err(|e| err(e.to_string()))?;
        // a second pass through the typed structs names the offending key
        serde_path_to_error::deserialize(value).map_err(|e| err(format!("at `{}`: {}", e.path(), e.inner())))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Short digest of the command and its effective config.
    pub fn run_id(&self, command: &str) -> Result<String> {
        let mut h = Sha256::new();
        h.update(command.as_bytes());
        h.update(b"\n");
        h.update(self.to_toml()?.as_bytes());
        Ok(hex::encode(&h.finalize()[..8]))
    }
}
