//! TOML experiment configuration: one sectioned file drives every command.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::compress::{CompressionMethod, DEFAULT_RELATIVE_TOL};
use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::model::{ImagingSetup, DEFAULT_DENSE_CAP_BYTES};
use crate::solver::Arch;
use crate::train::{AblationCell, AblationConfig, TrainConfig};

/// `[compress]` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompressSection {
    pub method: String,
    pub scheme: Option<String>,
    pub basis: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for CompressSection {
    fn default() -> Self {
        CompressSection {
            method: "omp".into(),
            scheme: None,
            basis: 32,
            tol: DEFAULT_RELATIVE_TOL,
            seed: 0,
        }
    }
}

impl CompressSection {
    pub fn method(&self) -> Result<CompressionMethod> {
        CompressionMethod::parse(&self.method, self.scheme.as_deref())
    }
}

/// `[network]` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub arch: Arch,
    pub blocks: usize,
    /// `analytic` or a random scheme name.
    pub init: String,
    pub init_seed: u64,
    pub shared: bool,
    /// Fixed regularization weight; calibrated on the validation set if absent.
    pub lambda: Option<f64>,
    pub train_forward: bool,
    pub train_transposed: bool,
    pub train_thresholds: bool,
}

impl Default for NetworkSection {
    fn default() -> Self {
        NetworkSection {
            arch: Arch::Cbc,
            blocks: 10,
            init: "analytic".into(),
            init_seed: 0,
            shared: true,
            lambda: None,
            train_forward: true,
            train_transposed: true,
            train_thresholds: true,
        }
    }
}

/// `[ablation]` section; training settings come from `[train]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSection {
    pub arch: Arch,
    pub basis: usize,
    pub shared: bool,
    pub blocks: Vec<usize>,
    pub inits: Vec<String>,
    pub forward_frozen: Vec<bool>,
    pub cells: Vec<AblationCell>,
}

impl Default for AblationSection {
    fn default() -> Self {
        let d = AblationConfig::default();
        AblationSection {
            arch: d.arch,
            basis: d.basis,
            shared: d.shared,
            blocks: d.blocks,
            inits: d.inits,
            forward_frozen: d.forward_frozen,
            cells: d.cells,
        }
    }
}

/// The whole configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Top-level seed; overrides per-section seeds when set.
    pub seed: Option<u64>,
    pub dense_cap_bytes: u64,
    pub setup: ImagingSetup,
    pub compress: CompressSection,
    pub network: NetworkSection,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub ablation: AblationSection,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: None,
            dense_cap_bytes: DEFAULT_DENSE_CAP_BYTES,
            setup: ImagingSetup::desk(),
            compress: CompressSection::default(),
            network: NetworkSection::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            ablation: AblationSection::default(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(seed) = cfg.seed {
            cfg.compress.seed = seed;
            cfg.network.init_seed = seed;
            cfg.train.seed = seed;
            cfg.eval.seed = seed;
        }
        cfg.setup.validate()?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn ablation_config(&self) -> AblationConfig {
        let a = &self.ablation;
        AblationConfig {
            arch: a.arch,
            basis: a.basis,
            shared: a.shared,
            blocks: a.blocks.clone(),
            inits: a.inits.clone(),
            forward_frozen: a.forward_frozen.clone(),
            cells: a.cells.clone(),
            train: self.train.clone(),
        }
    }
}
