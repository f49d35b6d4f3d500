use rand::seq::index::sample;

use super::network::UnrolledNet;
use super::unroll::{mse, network_predict, sample_gradient, Gradients};
use crate::error::{Error, Result};
use crate::model::DataCube;
use crate::rng::{stream_rng, Stream};

/// Outcome of a finite-difference gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_deviation: f64,
    /// No trainable scalar existed, so nothing was compared.
    pub vacuous: bool,
    pub passed: bool,
}

/// Deviation floor relative to the largest gradient magnitude; keeps
/// round-off on exactly-zero entries from dominating.
pub const DEVIATION_FLOOR: f64 = 1e-4;

/// Compare `analytic` against central differences of the sample loss.
/// At most `max_checks` entries are probed (a seeded subset when more exist).
pub fn gradient_check_against(
    net: &UnrolledNet,
    y: &DataCube,
    truth: &[f64],
    analytic: &Gradients,
    h: f64,
    tol: f64,
    max_checks: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {h}")));
    }
    let mut entries = Vec::new();
    for (gi, g) in analytic.groups.iter().enumerate() {
        if let Some(g) = g {
            entries.extend((0..g.len()).map(|j| (gi, j)));
        }
    }
    if entries.is_empty() {
        return Ok(GradCheckReport {
            checked: 0,
            max_deviation: 0.0,
            vacuous: true,
            passed: true,
        });
    }
    if entries.len() > max_checks {
        let mut rng = stream_rng(seed, Stream::Validation, 0);
        let mut picked: Vec<usize> = sample(&mut rng, entries.len(), max_checks).into_vec();
        picked.sort_unstable();
        entries = picked.into_iter().map(|i| entries[i]).collect();
    }
    let floor = DEVIATION_FLOOR * analytic.max_abs().max(1.0);
    let loss_at = |gi: usize, j: usize, delta: f64| -> Result<f64> {
        let mut probe = net.clone();
        probe.groups_mut()[gi].1[j] += delta;
        Ok(mse(&network_predict(&probe, y)?, truth))
    };
    let mut worst = 0.0f64;
    for &(gi, j) in &entries {
        let numeric = (loss_at(gi, j, h)? - loss_at(gi, j, -h)?) / (2.0 * h);
        let a = analytic.groups[gi].as_ref().unwrap()[j];
        let dev = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        worst = worst.max(dev);
    }
    Ok(GradCheckReport {
        checked: entries.len(),
        max_deviation: worst,
        vacuous: false,
        passed: worst < tol,
    })
}

/// Finite-difference check of [`sample_gradient`] on one training pair.
pub fn gradient_check(
    net: &UnrolledNet,
    y: &DataCube,
    truth: &[f64],
    h: f64,
    tol: f64,
    max_checks: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let (_, g) = sample_gradient(net, y, truth)?;
    gradient_check_against(net, y, truth, &g, h, tol, max_checks, seed)
}
