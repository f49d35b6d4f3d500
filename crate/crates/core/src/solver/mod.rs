//! ISTA, soft-thresholding and the unrolled networks with their gradients.

mod gradcheck;
mod ista;
pub mod network;
mod shrink;
mod unroll;

pub use gradcheck::{gradient_check, gradient_check_against, GradCheckReport, DEVIATION_FLOOR};
pub use ista::{
    default_lambda, ista_solve, ista_step, lasso_objective, support, IstaPreset, IstaResult,
    ISTA_200, ISTA_500,
};
pub use network::{
    build_network, Arch, GroupKind, NetworkInit, NetworkSource, NetworkSpec, OperatorParams,
    ParamCount, ParamGroup, SliceParams, Trainability, UnrolledNet,
};
pub use shrink::soft_threshold;
pub use unroll::{
    batch_gradient, mse, network_backward, network_forward, network_predict, sample_gradient,
    BlockOperator, BlockTrace, ForwardTrace, Gradients, NetInput,
};
