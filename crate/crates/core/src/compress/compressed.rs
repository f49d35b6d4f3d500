use serde::{Deserialize, Serialize};

use super::decomposed::{decomposed_adjoint, decomposed_forward, FactorizedKernel};
use super::factor::{
    omp_select_basis, random_factorize, svd_factorize, FactorizationReport, InitScheme,
};
use crate::error::{Error, Result};
use crate::linalg::frobenius;
use crate::model::{
    accumulate, cube_to_slice_sums, slices_to_cube, DataCube, ImagingSetup, LinearOperator,
    SliceConvModel, SliceData, SliceGeometry,
};
use crate::parallel::{map_slice, Parallelism};

/// Basis budgets used for the compressed networks.
pub const BASIS_PRESETS: [usize; 3] = [16, 32, 64];

/// Default OMP stopping tolerance relative to `‖W‖_F`.
pub const DEFAULT_RELATIVE_TOL: f64 = 1e-6;

/// Factorization strategy for [`compress_model`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", content = "scheme", rename_all = "lowercase")]
pub enum CompressionMethod {
    Omp,
    Svd,
    Random(InitScheme),
}

impl CompressionMethod {
    pub fn parse(method: &str, scheme: Option<&str>) -> Result<Self> {
        match method.to_ascii_lowercase().as_str() {
            "omp" => Ok(CompressionMethod::Omp),
            "svd" => Ok(CompressionMethod::Svd),
            "random" => Ok(CompressionMethod::Random(scheme.unwrap_or("xavier").parse()?)),
            "xavier" | "kaiming" | "orthogonal" => {
                Ok(CompressionMethod::Random(method.parse()?))
            }
            other => Err(Error::InvalidArgument(format!("unknown compression method '{other}'"))),
        }
    }
}

impl std::fmt::Display for CompressionMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CompressionMethod::Omp => f.write_str("omp"),
            CompressionMethod::Svd => f.write_str("svd"),
            CompressionMethod::Random(s) => write!(f, "{s}"),
        }
    }
}

/// A compressed forward model: one [`FactorizedKernel`] per unique slice.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedModel {
    pub setup: ImagingSetup,
    pub slices: Vec<FactorizedKernel>,
    pub reports: Vec<FactorizationReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterCounts {
    pub before: usize,
    pub after: usize,
}

impl CompressedModel {
    pub fn geometries(&self) -> Vec<SliceGeometry> {
        self.slices.iter().map(|s| s.geometry.clone()).collect()
    }

    /// `Σ C_out·K` before and `Σ M·(K + C_out)` after compression.
    pub fn parameter_counts(&self) -> ParameterCounts {
        let before = self
            .slices
            .iter()
            .map(|s| s.geometry.channels * s.geometry.kernel_len)
            .sum();
        let after = self
            .slices
            .iter()
            .map(|s| s.num_basis() * (s.geometry.kernel_len + s.geometry.channels))
            .sum();
        ParameterCounts { before, after }
    }

    pub fn forward_slices(&self, x: &[f64], mode: Parallelism) -> Result<SliceData> {
        let out = map_slice(&self.slices, mode, |k| decomposed_forward(k, x));
        Ok(SliceData(out.into_iter().collect::<Result<Vec<_>>>()?))
    }

    /// Single-layer model with kernels `C · B`.
    pub fn recomposed(&self) -> SliceConvModel {
        SliceConvModel {
            setup: self.setup.clone(),
            slices: self.slices.iter().map(|s| s.recomposed()).collect(),
        }
    }
}

/// Factorize every slice of `model` independently. `relative_tol` scales
/// `‖W‖_F` per slice for the OMP stopping rule; `seed` drives random schemes.
pub fn compress_model(
    model: &SliceConvModel,
    method: CompressionMethod,
    basis: usize,
    relative_tol: f64,
    seed: u64,
) -> Result<CompressedModel> {
    let parts = map_slice(&model.slices, Parallelism::default(), |kernel| {
        let w = &kernel.weights;
        let g = &kernel.geometry;
        let (f, rep) = match method {
            CompressionMethod::Omp => omp_select_basis(w, basis, relative_tol * frobenius(w))?,
            CompressionMethod::Svd => svd_factorize(w, basis)?,
            CompressionMethod::Random(scheme) => {
                let slice_seed = crate::rng::derive_seed(seed, crate::rng::Stream::Init, g.offset as u64);
                let f = random_factorize(g.channels, g.kernel_len, basis, scheme, slice_seed)?;
                let err = frobenius(&(w - &f.recompose()));
                let rep = FactorizationReport {
                    residual_history: vec![err],
                    final_error: err,
                    compression_ratio: super::factor::compression_ratio(g.channels, g.kernel_len, basis),
                    rank_deficient: false,
                    note: Some(format!("random init ({scheme})")),
                };
                (f, rep)
            }
        };
        Ok::<_, crate::Error>((FactorizedKernel::new(g.clone(), f)?, rep))
    });
    let mut slices = Vec::with_capacity(parts.len());
    let mut reports = Vec::with_capacity(parts.len());
    for p in parts {
        let (s, r) = p?;
        slices.push(s);
        reports.push(r);
    }
    Ok(CompressedModel {
        setup: model.setup.clone(),
        slices,
        reports,
    })
}

impl LinearOperator for CompressedModel {
    fn input_len(&self) -> usize {
        self.setup.num_pixels()
    }

    fn output_len(&self) -> usize {
        self.setup.num_data()
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        crate::error::check_len("compressed apply", self.input_len(), x.len())?;
        let s = self.forward_slices(x, Parallelism::default())?;
        Ok(slices_to_cube(&s, self.setup.num_samples, self.setup.num_elements).values)
    }

    fn apply_adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        let cube = DataCube::from_vec(self.setup.num_samples, self.setup.num_elements, y.to_vec())?;
        let sums = cube_to_slice_sums(&cube, &self.geometries());
        let idx: Vec<usize> = (0..self.slices.len()).collect();
        let parts = map_slice(&idx, Parallelism::default(), |&d| {
            decomposed_adjoint(&self.slices[d], &sums.0[d])
        });
        let parts = parts.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(accumulate(parts, self.input_len()))
    }
}
