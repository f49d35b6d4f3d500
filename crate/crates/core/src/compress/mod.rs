//! Low-rank factorization of slice kernel banks and the two-stage
//! (basis convolution + `1 × 1` mixing) decomposed layers.

mod compressed;
mod decomposed;
mod factor;

pub use compressed::{
    compress_model, CompressedModel, CompressionMethod, ParameterCounts, BASIS_PRESETS,
    DEFAULT_RELATIVE_TOL,
};
pub use decomposed::{decomposed_adjoint, decomposed_forward, FactorizedKernel};
pub(crate) use factor::random_matrix;
pub use factor::{
    compression_ratio, factorization_error, least_squares_mixing, omp_select_basis,
    random_factorize, svd_factorize, Factorization, FactorizationReport, InitScheme, Method,
    DEGENERATE_ROW_TOL,
};
