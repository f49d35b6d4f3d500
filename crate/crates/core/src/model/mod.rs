//! Imaging physics and the analytic slice-wise convolutional forward model.

mod dense;
mod kernel;
mod operator;
mod setup;
mod slice_model;

pub use dense::{dense_operator, DenseOperator, DEFAULT_DENSE_CAP_BYTES};
pub(crate) use dense::check_cap;
pub use kernel::{slice_adjoint, slice_forward, SliceGeometry, SliceKernel};
pub use operator::{
    estimate_lipschitz, lipschitz, LinearOperator, LipschitzEstimate, ScaledIdentity,
    LIPSCHITZ_SAFETY, POWER_MAX_ITERS, POWER_TOL,
};
#[cfg(test)]
pub(crate) use operator::dot;
pub use setup::{DataCube, ImagingSetup, ReflectivityMap};
#[cfg(test)]
pub(crate) use setup::tiny_setup;
pub use slice_model::{
    adjoint_apply, adjoint_apply_with, build_slice_kernels, cube_to_slice_means,
    cube_to_slice_sums, forward_apply, forward_apply_with, slice_geometries, slices_to_cube,
    SliceConvModel, SliceData,
};
pub(crate) use slice_model::accumulate;
