use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::data::{fixed_dataset, synthesize_indexed, DataConfig};
use super::optim::{optimizer_step, AdamConfig, AdamState};
use crate::error::{Error, Result};
use crate::model::{DataCube, LinearOperator, SliceConvModel};
use crate::parallel::{map_slice, Parallelism};
use crate::rng::{derive_seed, Stream};
use crate::solver::{batch_gradient, mse, network_predict, Arch, Trainability, UnrolledNet};

/// Training-loop settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub iters_per_epoch: usize,
    pub batch_size: usize,
    pub optimizer: String,
    pub learning_rate: f64,
    pub threshold_learning_rate: Option<f64>,
    /// Multiplies both learning rates once per epoch.
    pub lr_decay: f64,
    pub early_stopping: bool,
    pub early_stop_gamma: f64,
    pub early_stop_patience: usize,
    pub validation_set_size: usize,
    pub seed: u64,
    pub trainable: Option<Trainability>,
    /// Record epoch wall-clock times; off gives timing-free, reproducible CSVs.
    pub record_timing: bool,
    pub data: DataConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 400,
            iters_per_epoch: 100,
            batch_size: 8,
            optimizer: "adam".into(),
            learning_rate: 1e-4,
            threshold_learning_rate: None,
            lr_decay: 1.0,
            early_stopping: true,
            early_stop_gamma: 1e-6,
            early_stop_patience: 5,
            validation_set_size: 64,
            seed: 0,
            trainable: None,
            record_timing: true,
            data: DataConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iters_per_epoch == 0 || self.batch_size == 0 {
            return Err(Error::Config("iters_per_epoch and batch_size must be ≥ 1".into()));
        }
        if !(self.early_stop_gamma > 0.0) || self.early_stop_patience == 0 {
            return Err(Error::Config("early stopping needs gamma > 0 and patience ≥ 1".into()));
        }
        if self.validation_set_size == 0 {
            return Err(Error::Config("validation_set_size must be ≥ 1".into()));
        }
        if self.optimizer.to_ascii_lowercase() != "adam" {
            return Err(Error::Config(format!("unknown optimizer '{}'", self.optimizer)));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config("lr_decay must lie in (0, 1]".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            threshold_learning_rate: self.threshold_learning_rate,
            ..AdamConfig::default()
        }
    }

    /// Optimizer settings for `epoch` (1-based) after decay.
    pub fn adam_at(&self, epoch: usize) -> AdamConfig {
        let f = self.lr_decay.powi(epoch.saturating_sub(1) as i32);
        AdamConfig {
            learning_rate: self.learning_rate * f,
            threshold_learning_rate: self.threshold_learning_rate.map(|t| t * f),
            ..AdamConfig::default()
        }
    }
}

/// Relative-change stopping rule: fires once
/// `(L_k − L_{k−1}) / L_{k−1} < γ` has held for `patience` consecutive epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    gamma: f64,
    patience: usize,
    streak: usize,
    previous: Option<f64>,
}

impl EarlyStopping {
    pub fn new(gamma: f64, patience: usize) -> Self {
        EarlyStopping {
            gamma,
            patience,
            streak: 0,
            previous: None,
        }
    }

    /// Feed one validation loss; returns whether training should stop.
    pub fn observe(&mut self, loss: f64) -> bool {
        if let Some(prev) = self.previous {
            let delta = if prev == 0.0 {
                if loss == 0.0 { 0.0 } else { f64::INFINITY }
            } else {
                (loss - prev) / prev
            };
            if delta < self.gamma {
                self.streak += 1;
            } else {
                self.streak = 0;
            }
        }
        self.previous = Some(loss);
        self.streak >= self.patience
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum StopReason {
    Early,
    MaxEpochs,
    Diverged { epoch: usize, iteration: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub epochs: Vec<EpochRecord>,
    pub stop_reason: StopReason,
    pub best_epoch: Option<usize>,
    pub best_val_loss: Option<f64>,
    pub initial_val_loss: f64,
    pub config: TrainConfig,
}

impl TrainRecord {
    pub fn epoch_count(&self) -> usize {
        self.epochs.len()
    }

    /// Validation loss of the returned (best) parameters.
    pub fn final_val_loss(&self) -> f64 {
        self.best_val_loss.unwrap_or(self.initial_val_loss)
    }

    pub fn diverged(&self) -> bool {
        matches!(self.stop_reason, StopReason::Diverged { .. })
    }

    /// `epoch,train_loss,val_loss,wall_ms` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss,wall_ms\n");
        for e in &self.epochs {
            s.push_str(&format!("{},{},{},{}\n", e.epoch, e.train_loss, e.val_loss, e.wall_ms));
        }
        s
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "epochs": self.epoch_count(),
            "stop_reason": self.stop_reason,
            "best_epoch": self.best_epoch,
            "best_val_loss": self.best_val_loss,
            "initial_val_loss": self.initial_val_loss,
            "final_val_loss": self.final_val_loss(),
            "config": self.config,
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: UnrolledNet,
    pub record: TrainRecord,
}

/// Mean MSE of `net` over a dataset, reduced in dataset order.
pub fn dataset_loss(net: &UnrolledNet, set: &[(DataCube, Vec<f64>)], mode: Parallelism) -> Result<f64> {
    let parts = map_slice(set, mode, |(y, x)| network_predict(net, y).map(|e| mse(&e, x)));
    let mut total = 0.0;
    for p in parts {
        total += p?;
    }
    Ok(total / set.len().max(1) as f64)
}

/// The validation set used by [`train_network`] for `cfg`.
pub fn validation_set(model: &SliceConvModel, cfg: &TrainConfig) -> Result<Vec<(DataCube, Vec<f64>)>> {
    fixed_dataset(model, &cfg.data, cfg.seed, Stream::Validation, 0, cfg.validation_set_size)
}

/// `0.1 · mean_i ‖Aᵀ y_i‖_∞` over a dataset: a single regularization weight
/// for networks, matching the per-problem default on average.
pub fn calibrate_lambda(op: &dyn LinearOperator, set: &[(DataCube, Vec<f64>)]) -> Result<f64> {
    let mut total = 0.0;
    for (y, _) in set {
        total += crate::solver::default_lambda(op, &y.values)?;
    }
    Ok(total / set.len().max(1) as f64)
}

fn finite_gradients(g: &crate::solver::Gradients) -> bool {
    g.groups.iter().flatten().flatten().all(|v| v.is_finite())
}

/// Train `net` on freshly synthesized pairs from `model`.
///
/// The validation set is drawn once; the parameters with the lowest
/// validation loss are returned. A non-finite loss stops training with
/// [`StopReason::Diverged`].
pub fn train_network(
    net: &UnrolledNet,
    model: &SliceConvModel,
    cfg: &TrainConfig,
    mode: Parallelism,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if net.setup != model.setup {
        return Err(Error::InvalidSetup(
            "network and model were built for different setups".into(),
        ));
    }
    cfg.data.validate(model.num_pixels())?;
    let mut net = net.clone();
    if let Some(t) = cfg.trainable {
        net.trainable = t;
        if net.arch == Arch::Alista {
            net.trainable.forward = false;
            net.trainable.transposed = false;
        }
    }
    let initial = net.clone();
    let val = validation_set(model, cfg)?;
    let initial_val_loss = dataset_loss(&net, &val, mode)?;
    let mut state = AdamState::new(&net);
    let mut stopper = EarlyStopping::new(cfg.early_stop_gamma, cfg.early_stop_patience);
    let train_seed = derive_seed(cfg.seed, Stream::Data, 0);
    let mut best: Option<(usize, f64, UnrolledNet)> = None;
    let mut epochs = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;

    'outer: for epoch in 1..=cfg.max_epochs {
        let start = Instant::now();
        let adam = cfg.adam_at(epoch);
        let mut train_total = 0.0;
        for it in 0..cfg.iters_per_epoch {
            let first = (((epoch - 1) * cfg.iters_per_epoch + it) * cfg.batch_size) as u64;
            let batch = (0..cfg.batch_size as u64)
                .map(|b| synthesize_indexed(model, &cfg.data, train_seed, first + b).map(|(x, y)| (y, x.values)))
                .collect::<Result<Vec<_>>>()?;
            let (loss, grads) = batch_gradient(&net, &batch, mode)?;
            if !loss.is_finite() || !finite_gradients(&grads) {
                stop_reason = StopReason::Diverged { epoch, iteration: it };
                break 'outer;
            }
            optimizer_step(&mut net, &grads, &mut state, &adam);
            train_total += loss;
        }
        let val_loss = dataset_loss(&net, &val, mode)?;
        if !val_loss.is_finite() {
            stop_reason = StopReason::Diverged {
                epoch,
                iteration: cfg.iters_per_epoch,
            };
            break;
        }
        let wall_ms = if cfg.record_timing {
            start.elapsed().as_millis() as u64
        } else {
            0
        };
        epochs.push(EpochRecord {
            epoch,
            train_loss: train_total / cfg.iters_per_epoch as f64,
            val_loss,
            wall_ms,
        });
        if best.as_ref().is_none_or(|(_, b, _)| val_loss < *b) {
            best = Some((epoch, val_loss, net.clone()));
        }
        if cfg.early_stopping && stopper.observe(val_loss) {
            stop_reason = StopReason::Early;
            break;
        }
    }

    let (best_epoch, best_val_loss, out) = match best {
        Some((e, l, n)) => (Some(e), Some(l), n),
        None => (None, None, initial),
    };
    Ok(TrainOutcome {
        net: out,
        record: TrainRecord {
            epochs,
            stop_reason,
            best_epoch,
            best_val_loss,
            initial_val_loss,
            config: cfg.clone(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn early_stop_fires_on_the_patience_th_small_change() {
        let mut s = EarlyStopping::new(1e-6, 3);
        assert!(!s.observe(1.0));
        assert!(!s.observe(1.0));
        assert!(!s.observe(1.0));
        assert!(s.observe(1.0));
    }

    #[test]
    fn loss_increase_resets_patience() {
        let mut s = EarlyStopping::new(1e-6, 2);
        assert!(!s.observe(1.0));
        assert!(!s.observe(0.9));
        assert!(!s.observe(1.5));
        assert!(!s.observe(1.4));
        assert!(s.observe(1.3));
    }

    #[test]
    fn signed_change_counts_decreases() {
        let mut s = EarlyStopping::new(1e-6, 2);
        let seq = [10.0, 5.0, 2.0];
        let fired: Vec<bool> = seq.iter().map(|&l| s.observe(l)).collect();
        assert_eq!(fired, vec![false, false, true]);
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            TrainConfig { batch_size: 0, ..TrainConfig::default() },
            TrainConfig { early_stop_patience: 0, ..TrainConfig::default() },
            TrainConfig { early_stop_gamma: 0.0, ..TrainConfig::default() },
            TrainConfig { optimizer: "sgd".into(), ..TrainConfig::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err());
        }
        assert!(TrainConfig::default().validate().is_ok());
    }
}
