//! Reconstruction metrics, parameter/storage accounting and the benchmark
//! harness.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::model::{DataCube, LinearOperator, SliceConvModel};
use crate::parallel::{map_slice, Parallelism};
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::solver::{default_lambda, ista_solve, mse, network_predict, ParamCount, UnrolledNet};
use crate::train::{add_awgn, sample_reflectivity, DataConfig, Snr};

/// Reflectivity mean used to normalize PAE.
pub const DEFAULT_MU: f64 = 1250.0;
/// Paper evaluation set size.
pub const DEFAULT_EVAL_SET_SIZE: usize = 640;
/// Exact CSV header of benchmark tables.
pub const METRICS_CSV_HEADER: &str = "model,params,storage_bytes,condition,pae_percent,se_mean,eval_n,seed";

/// `√MSE / μ · 100`.
pub fn pae(estimate: &[f64], truth: &[f64], mu: f64) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(Error::InvalidArgument(format!("mu must be positive, got {mu}")));
    }
    check_len("pae", truth.len(), estimate.len())?;
    Ok(mse(estimate, truth).sqrt() / mu * 100.0)
}

/// Number of pixels where exactly one of `x̂`, `x` is nonzero.
pub fn se(estimate: &[f64], truth: &[f64]) -> Result<usize> {
    check_len("se", truth.len(), estimate.len())?;
    Ok(estimate
        .iter()
        .zip(truth)
        .filter(|(a, b)| (a.abs() > 0.0) != (b.abs() > 0.0))
        .count())
}

/// Trainable scalars; shared weights count once, frozen groups not at all.
pub fn count_params(net: &UnrolledNet) -> usize {
    net.param_count().total()
}

pub fn count_params_split(net: &UnrolledNet) -> ParamCount {
    net.param_count()
}

/// Size of the persisted network with scalars at `precision` bytes:
/// container preamble and header plus every stored scalar.
pub fn storage_bytes(net: &UnrolledNet, precision: usize) -> Result<usize> {
    Ok(crate::io::network_envelope_len(net)? + net.stored_scalars() * precision)
}

/// A reconstruction method under evaluation.
pub enum Candidate<'a> {
    Network {
        id: String,
        net: &'a UnrolledNet,
    },
    /// Classical ISTA; `lambda = None` uses the per-problem default.
    Ista {
        id: String,
        op: &'a dyn LinearOperator,
        iterations: usize,
        lambda: Option<f64>,
        lipschitz: f64,
    },
    /// Returns the ground truth; a fixture for the harness itself.
    Oracle { id: String },
}

impl Candidate<'_> {
    pub fn id(&self) -> &str {
        match self {
            Candidate::Network { id, .. } | Candidate::Ista { id, .. } | Candidate::Oracle { id } => id,
        }
    }

    fn reconstruct(&self, y: &DataCube, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Candidate::Network { net, .. } => network_predict(net, y),
            Candidate::Ista {
                op,
                iterations,
                lambda,
                lipschitz,
                ..
            } => {
                let lam = match lambda {
                    Some(l) => *l,
                    None => default_lambda(*op, &y.values)?,
                };
                Ok(ista_solve(&y.values, *op, lam, *lipschitz, *iterations, -1.0)?.x)
            }
            Candidate::Oracle { .. } => Ok(x.to_vec()),
        }
    }

    fn accounting(&self, precision: usize) -> Result<(usize, usize)> {
        match self {
            Candidate::Network { net, .. } => Ok((count_params(net), storage_bytes(net, precision)?)),
            _ => Ok((0, 0)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub set_size: usize,
    pub conditions: Vec<Snr>,
    pub seed: u64,
    pub mu: f64,
    pub precision: usize,
    /// Scatterer recipe; its `snr` field is ignored in favour of `conditions`.
    pub data: DataConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            set_size: DEFAULT_EVAL_SET_SIZE,
            conditions: vec![Snr::Noiseless, Snr::Db(20.0), Snr::Db(5.0)],
            seed: 0,
            mu: DEFAULT_MU,
            precision: 8,
            data: DataConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub model: String,
    pub params: usize,
    pub storage_bytes: usize,
    pub condition: String,
    pub pae_percent: f64,
    pub se_mean: f64,
    pub mse_mean: f64,
    pub eval_n: usize,
    pub seed: u64,
}

fn condition_tag(snr: Snr) -> u64 {
    match snr {
        Snr::Noiseless => 0,
        Snr::Db(v) => v.to_bits(),
    }
}

/// Frozen evaluation pairs for one condition. The reflectivity maps depend
/// only on `seed`, so every condition shares them; the noise stream is keyed
/// by the condition.
pub fn eval_dataset(
    model: &SliceConvModel,
    data: &DataConfig,
    snr: Snr,
    seed: u64,
    size: usize,
) -> Result<Vec<(DataCube, Vec<f64>)>> {
    let s = &model.setup;
    let base = derive_seed(seed, Stream::Evaluation, 0);
    let noise_base = derive_seed(base, Stream::Noise, condition_tag(snr));
    (0..size as u64)
        .map(|i| {
            let mut drng = stream_rng(base, Stream::Data, i);
            let mut nrng = stream_rng(noise_base, Stream::Noise, i);
            let x = sample_reflectivity(&mut drng, s.grid_nz, s.grid_nx, data)?;
            let clean = crate::model::forward_apply(model, &x)?;
            let y = add_awgn(&clean.values, snr, &mut nrng)?;
            Ok((DataCube::from_vec(clean.nt, clean.nc, y)?, x.values))
        })
        .collect()
}

/// Evaluate every candidate on identical frozen pairs per condition.
pub fn run_benchmark(
    model: &SliceConvModel,
    candidates: &[Candidate<'_>],
    cfg: &EvalConfig,
    mode: Parallelism,
) -> Result<Vec<MetricsRecord>> {
    if cfg.set_size == 0 {
        return Err(Error::Config("eval set size must be ≥ 1".into()));
    }
    for c in candidates {
        match c {
            Candidate::Network { id, net } if net.setup != model.setup => {
                return Err(Error::InvalidSetup(format!(
                    "network '{id}' was built for a different setup"
                )))
            }
            Candidate::Ista { id, op, .. }
                if op.input_len() != model.num_pixels() || op.output_len() != model.num_data() =>
            {
                return Err(Error::InvalidSetup(format!(
                    "operator of '{id}' has incompatible dimensions"
                )))
            }
            _ => {}
        }
    }
    let mut records = Vec::new();
    for &cond in &cfg.conditions {
        let set = eval_dataset(model, &cfg.data, cond, cfg.seed, cfg.set_size)?;
        for c in candidates {
            let per_pair = map_slice(&set, mode, |(y, x)| -> Result<(f64, usize, f64)> {
                let est = c.reconstruct(y, x)?;
                Ok((pae(&est, x, cfg.mu)?, se(&est, x)?, mse(&est, x)))
            });
            let (mut p, mut s, mut m) = (0.0, 0.0, 0.0);
            for r in per_pair {
                let (a, b, e) = r?;
                p += a;
                s += b as f64;
                m += e;
            }
            let n = set.len() as f64;
            let (params, storage) = c.accounting(cfg.precision)?;
            records.push(MetricsRecord {
                model: c.id().to_string(),
                params,
                storage_bytes: storage,
                condition: cond.label(),
                pae_percent: p / n,
                se_mean: s / n,
                mse_mean: m / n,
                eval_n: set.len(),
                seed: cfg.seed,
            });
        }
    }
    Ok(records)
}

/// Benchmark table with the fixed header.
pub fn metrics_csv(records: &[MetricsRecord]) -> String {
    let mut s = format!("{METRICS_CSV_HEADER}\n");
    for r in records {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.model, r.params, r.storage_bytes, r.condition, r.pae_percent, r.se_mean, r.eval_n, r.seed
        ));
    }
    s
}

/// Parse a table written by [`metrics_csv`]; `mse_mean` is not part of the
/// CSV and reads back as NaN.
pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == METRICS_CSV_HEADER => {}
        Some(h) => return Err(Error::Format(format!("unexpected metrics header '{h}'"))),
        None => return Ok(Vec::new()),
    }
    let bad = |l: &str| Error::Format(format!("malformed metrics row '{l}'"));
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 8 {
                return Err(bad(l));
            }
            Ok(MetricsRecord {
                model: f[0].to_string(),
                params: f[1].parse().map_err(|_| bad(l))?,
                storage_bytes: f[2].parse().map_err(|_| bad(l))?,
                condition: f[3].to_string(),
                pae_percent: f[4].parse().map_err(|_| bad(l))?,
                se_mean: f[5].parse().map_err(|_| bad(l))?,
                mse_mean: f64::NAN,
                eval_n: f[6].parse().map_err(|_| bad(l))?,
                seed: f[7].parse().map_err(|_| bad(l))?,
            })
        })
        .collect()
}

/// Concatenate tables, keeping the first row of every `(model, condition)`
/// pair; each dropped duplicate yields a warning.
pub fn merge_metrics(tables: Vec<Vec<MetricsRecord>>) -> (Vec<MetricsRecord>, Vec<String>) {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    let mut warnings = Vec::new();
    for r in tables.into_iter().flatten() {
        if seen.insert((r.model.clone(), r.condition.clone())) {
            out.push(r);
        } else {
            warnings.push(format!(
                "duplicate row for model '{}' under '{}' dropped",
                r.model, r.condition
            ));
        }
    }
    (out, warnings)
}
