use rand::seq::index::sample;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::{DataCube, ReflectivityMap, SliceConvModel};
use crate::rng::{derive_seed, stream_rng, Rng, Stream};

/// Paper SNR presets in dB.
pub const SNR_PRESETS_DB: [f64; 4] = [5.0, 10.0, 15.0, 20.0];

/// Noise condition: noiseless or a finite SNR in dB.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Snr {
    #[default]
    Noiseless,
    Db(f64),
}

impl Snr {
    /// Condition label used in tables: `noiseless` or the dB value.
    pub fn label(&self) -> String {
        match self {
            Snr::Noiseless => "noiseless".into(),
            Snr::Db(v) => format!("{v}dB"),
        }
    }
}

impl std::str::FromStr for Snr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        if t == "noiseless" || t == "inf" || t == "none" {
            return Ok(Snr::Noiseless);
        }
        let num = t.strip_suffix("db").unwrap_or(&t);
        let v: f64 = num
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("invalid SNR '{s}'")))?;
        if !v.is_finite() {
            return Err(Error::InvalidArgument(format!("invalid SNR '{s}'")));
        }
        Ok(Snr::Db(v))
    }
}

impl std::fmt::Display for Snr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label())
    }
}

impl Serialize for Snr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Snr::Noiseless => s.serialize_str("noiseless"),
            Snr::Db(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Snr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) if v.is_finite() => Ok(Snr::Db(v)),
            Repr::Num(v) => Err(serde::de::Error::custom(format!("invalid SNR {v}"))),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Generative recipe for synthetic training pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub min_scatterers: usize,
    pub max_scatterers: usize,
    pub amplitude_mean: f64,
    pub amplitude_variance: f64,
    pub snr: Snr,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            min_scatterers: 5,
            max_scatterers: 10,
            amplitude_mean: 1250.0,
            amplitude_variance: 250.0,
            snr: Snr::Noiseless,
        }
    }
}

impl DataConfig {
    pub fn validate(&self, num_pixels: usize) -> Result<()> {
        if self.min_scatterers > self.max_scatterers {
            return Err(Error::Config(format!(
                "scatterer range {}..{} is empty",
                self.min_scatterers, self.max_scatterers
            )));
        }
        if self.max_scatterers > num_pixels {
            return Err(Error::Config(format!(
                "up to {} scatterers requested but the grid has {num_pixels} pixels",
                self.max_scatterers
            )));
        }
        if !(self.amplitude_variance >= 0.0) || !self.amplitude_mean.is_finite() {
            return Err(Error::Config("amplitude distribution must be finite with variance ≥ 0".into()));
        }
        Ok(())
    }
}

/// Random sparse map: `n ~ U{min..max}` distinct pixels with
/// `N(mean, variance)` amplitudes.
pub fn sample_reflectivity(rng: &mut Rng, nz: usize, nx: usize, cfg: &DataConfig) -> Result<ReflectivityMap> {
    let ns = nz * nx;
    cfg.validate(ns)?;
    let n = rng.random_range(cfg.min_scatterers..=cfg.max_scatterers);
    let amp = Normal::new(cfg.amplitude_mean, cfg.amplitude_variance.sqrt())
        .map_err(|e| Error::Config(e.to_string()))?;
    let mut values = vec![0.0; ns];
    let mut pixels = sample(rng, ns, n).into_vec();
    pixels.sort_unstable();
    for p in pixels {
        values[p] = amp.sample(rng);
    }
    ReflectivityMap::from_vec(nz, nx, values)
}

/// i.i.d. Gaussian noise with variance `mean(y²) / 10^{snr/10}`.
pub fn add_awgn(y: &[f64], snr: Snr, rng: &mut Rng) -> Result<Vec<f64>> {
    let db = match snr {
        Snr::Noiseless => return Ok(y.to_vec()),
        Snr::Db(db) => db,
    };
    let power = y.iter().map(|v| v * v).sum::<f64>() / y.len().max(1) as f64;
    if !(power > 0.0) {
        return Err(Error::InvalidArgument(
            "signal power is zero; SNR is undefined".into(),
        ));
    }
    let sigma = (power / 10f64.powf(db / 10.0)).sqrt();
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(y.iter().map(|v| v + noise.sample(rng)).collect())
}

/// `(x, y)` with `y = A x` plus optional noise.
pub fn synthesize_pair(
    data_rng: &mut Rng,
    noise_rng: &mut Rng,
    model: &SliceConvModel,
    cfg: &DataConfig,
) -> Result<(ReflectivityMap, DataCube)> {
    let s = &model.setup;
    let x = sample_reflectivity(data_rng, s.grid_nz, s.grid_nx, cfg)?;
    let clean = crate::model::forward_apply(model, &x)?;
    let values = add_awgn(&clean.values, cfg.snr, noise_rng)?;
    Ok((x, DataCube::from_vec(clean.nt, clean.nc, values)?))
}

/// Pair number `index` of the dataset keyed by `seed`; data and noise draw
/// from separate streams.
pub fn synthesize_indexed(
    model: &SliceConvModel,
    cfg: &DataConfig,
    seed: u64,
    index: u64,
) -> Result<(ReflectivityMap, DataCube)> {
    let mut d = stream_rng(seed, Stream::Data, index);
    let mut n = stream_rng(seed, Stream::Noise, index);
    synthesize_pair(&mut d, &mut n, model, cfg)
}

/// A frozen set of `size` pairs keyed by `(seed, stream, tag)`.
pub fn fixed_dataset(
    model: &SliceConvModel,
    cfg: &DataConfig,
    seed: u64,
    stream: Stream,
    tag: u64,
    size: usize,
) -> Result<Vec<(DataCube, Vec<f64>)>> {
    let base = derive_seed(seed, stream, tag);
    (0..size as u64)
        .map(|i| synthesize_indexed(model, cfg, base, i).map(|(x, y)| (y, x.values)))
        .collect()
}
