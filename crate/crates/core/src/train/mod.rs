//! Synthetic data, the optimizer, the training loop and the ablation runner.

mod ablation;
mod data;
mod optim;
mod trainer;

pub use ablation::{
    ablation_summary_csv, build_cell_network, run_ablation, AblationCell, AblationConfig,
    CellResult,
};
pub use data::{
    add_awgn, fixed_dataset, sample_reflectivity, synthesize_indexed, synthesize_pair,
    DataConfig, Snr, SNR_PRESETS_DB,
};
pub use optim::{optimizer_step, AdamConfig, AdamState};
pub use trainer::{
    calibrate_lambda, dataset_loss, train_network, validation_set, EarlyStopping, EpochRecord,
    StopReason, TrainConfig, TrainOutcome, TrainRecord,
};

/// Mean squared error over entries.
pub fn mse_loss(estimate: &[f64], truth: &[f64]) -> crate::Result<f64> {
    crate::error::check_len("mse_loss", truth.len(), estimate.len())?;
    Ok(crate::solver::mse(estimate, truth))
}
