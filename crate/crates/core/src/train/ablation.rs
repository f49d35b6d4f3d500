use serde::{Deserialize, Serialize};

use super::trainer::{calibrate_lambda, train_network, validation_set, TrainConfig, TrainRecord};
use crate::compress::{compress_model, CompressedModel, CompressionMethod, InitScheme, DEFAULT_RELATIVE_TOL};
use crate::error::{Error, Result};
use crate::model::{lipschitz, SliceConvModel, DEFAULT_DENSE_CAP_BYTES};
use crate::parallel::Parallelism;
use crate::rng::{derive_seed, Stream};
use crate::solver::{
    build_network, Arch, NetworkInit, NetworkSource, NetworkSpec, Trainability, UnrolledNet,
};

/// One ablation configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationCell {
    pub blocks: usize,
    /// `omp`, `svd`, `analytic`, or a random scheme (`xavier`, `kaiming`, `orthogonal`).
    pub init: String,
    pub forward_frozen: bool,
}

impl AblationCell {
    pub fn label(&self) -> String {
        format!(
            "blocks={}/init={}/forward={}",
            self.blocks,
            self.init,
            if self.forward_frozen { "frozen" } else { "trained" }
        )
    }
}

/// Ablation matrix: explicit `cells`, or the cross product of the lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub arch: Arch,
    pub basis: usize,
    pub shared: bool,
    pub blocks: Vec<usize>,
    pub inits: Vec<String>,
    pub forward_frozen: Vec<bool>,
    pub cells: Vec<AblationCell>,
    pub train: TrainConfig,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            arch: Arch::Cbc,
            basis: 32,
            shared: true,
            blocks: vec![10],
            inits: vec!["omp".into()],
            forward_frozen: vec![false],
            cells: Vec::new(),
            train: TrainConfig::default(),
        }
    }
}

impl AblationConfig {
    pub fn expand(&self) -> Vec<AblationCell> {
        if !self.cells.is_empty() {
            return self.cells.clone();
        }
        let mut out = Vec::new();
        for &blocks in &self.blocks {
            for init in &self.inits {
                for &forward_frozen in &self.forward_frozen {
                    out.push(AblationCell {
                        blocks,
                        init: init.clone(),
                        forward_frozen,
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub index: usize,
    pub cell: AblationCell,
    pub init_seed: u64,
    pub lambda: f64,
    pub lipschitz: f64,
    pub record: TrainRecord,
}

impl CellResult {
    pub fn final_val_loss(&self) -> f64 {
        self.record.final_val_loss()
    }
}

/// Resolve an init label into a compression method (for analytic factored
/// inits) or a random scheme.
enum InitChoice {
    Analytic(Option<CompressionMethod>),
    Random(InitScheme),
}

fn parse_init(arch: Arch, init: &str) -> Result<InitChoice> {
    match init.to_ascii_lowercase().as_str() {
        "omp" if arch == Arch::Cbc => Ok(InitChoice::Analytic(Some(CompressionMethod::Omp))),
        "svd" if arch == Arch::Cbc => Ok(InitChoice::Analytic(Some(CompressionMethod::Svd))),
        "analytic" if arch == Arch::Cbc => Ok(InitChoice::Analytic(Some(CompressionMethod::Omp))),
        "analytic" => Ok(InitChoice::Analytic(None)),
        other => match other.parse::<InitScheme>() {
            Ok(s) => Ok(InitChoice::Random(s)),
            Err(_) => Err(Error::Config(format!("init '{init}' is not valid for {arch}"))),
        },
    }
}

/// Build the untrained network of one ablation cell.
pub fn build_cell_network(
    model: &SliceConvModel,
    compressed: &mut Vec<(CompressionMethod, CompressedModel)>,
    cfg: &AblationConfig,
    cell: &AblationCell,
    init_seed: u64,
    lambda: f64,
) -> Result<(UnrolledNet, f64)> {
    let choice = parse_init(cfg.arch, &cell.init)?;
    let mut get = |method: CompressionMethod| -> Result<CompressedModel> {
        if let Some((_, c)) = compressed.iter().find(|(m, _)| *m == method) {
            return Ok(c.clone());
        }
        let c = compress_model(model, method, cfg.basis, DEFAULT_RELATIVE_TOL, init_seed)?;
        compressed.push((method, c.clone()));
        Ok(c)
    };
    let trainable = Trainability {
        forward: !cell.forward_frozen,
        ..Trainability::default()
    };
    let (init, comp) = match choice {
        InitChoice::Analytic(Some(m)) => (NetworkInit::Analytic, Some(get(m)?)),
        InitChoice::Analytic(None) => (NetworkInit::Analytic, None),
        InitChoice::Random(scheme) => (
            NetworkInit::Random {
                scheme,
                seed: init_seed,
            },
            (cfg.arch == Arch::Cbc).then(|| get(CompressionMethod::Omp)).transpose()?,
        ),
    };
    let l = match &comp {
        Some(c) => lipschitz(c, init_seed)?.value,
        None => lipschitz(model, init_seed)?.value,
    };
    let spec = NetworkSpec {
        arch: cfg.arch,
        num_blocks: cell.blocks,
        init,
        lambda,
        lipschitz: l,
        trainable,
        shared: cfg.shared,
        dense_cap_bytes: DEFAULT_DENSE_CAP_BYTES,
    };
    let source = match &comp {
        Some(c) => NetworkSource::Compressed(c),
        None => NetworkSource::Model(model),
    };
    Ok((build_network(&spec, source)?, l))
}

/// Train every cell. All cells share the training stream and validation set
/// of `cfg.train.seed`; random initializations draw from a per-cell seed.
/// A diverged cell is recorded with its partial curve.
pub fn run_ablation(model: &SliceConvModel, cfg: &AblationConfig, mode: Parallelism) -> Result<Vec<CellResult>> {
    let cells = cfg.expand();
    let val = validation_set(model, &cfg.train)?;
    let lambda = calibrate_lambda(model, &val)?;
    let mut cache = Vec::new();
    let mut out = Vec::with_capacity(cells.len());
    for (index, cell) in cells.into_iter().enumerate() {
        let init_seed = derive_seed(cfg.train.seed, Stream::Init, index as u64);
        let (net, l) = build_cell_network(model, &mut cache, cfg, &cell, init_seed, lambda)?;
        let outcome = train_network(&net, model, &cfg.train, mode)?;
        out.push(CellResult {
            index,
            cell,
            init_seed,
            lambda,
            lipschitz: l,
            record: outcome.record,
        });
    }
    Ok(out)
}

/// One row per cell.
pub fn ablation_summary_csv(results: &[CellResult]) -> String {
    let mut s = String::from("cell,blocks,init,forward_frozen,epochs,stop_reason,best_epoch,final_val_loss\n");
    for r in results {
        let reason = match r.record.stop_reason {
            super::trainer::StopReason::Early => "early".to_string(),
            super::trainer::StopReason::MaxEpochs => "max_epochs".to_string(),
            super::trainer::StopReason::Diverged { epoch, iteration } => {
                format!("diverged@{epoch}:{iteration}")
            }
        };
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.index,
            r.cell.blocks,
            r.cell.init,
            r.cell.forward_frozen,
            r.record.epoch_count(),
            reason,
            r.record.best_epoch.map_or(String::new(), |e| e.to_string()),
            r.final_val_loss()
        ));
    }
    s
}
