use rand_distr::{Distribution, StandardNormal};

use super::setup::{DataCube, ReflectivityMap};
use super::slice_model::{adjoint_apply, forward_apply, SliceConvModel};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// A linear map on flat vectors together with its adjoint.
pub trait LinearOperator: Sync {
    fn input_len(&self) -> usize;
    fn output_len(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn apply_adjoint(&self, y: &[f64]) -> Result<Vec<f64>>;
}

impl LinearOperator for SliceConvModel {
    fn input_len(&self) -> usize {
        self.num_pixels()
    }

    fn output_len(&self) -> usize {
        self.num_data()
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let s = &self.setup;
        let map = ReflectivityMap::from_vec(s.grid_nz, s.grid_nx, x.to_vec())?;
        Ok(forward_apply(self, &map)?.values)
    }

    fn apply_adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        let s = &self.setup;
        let cube = DataCube::from_vec(s.num_samples, s.num_elements, y.to_vec())?;
        Ok(adjoint_apply(self, &cube)?.values)
    }
}

/// `α · I` on vectors of length `n`.
#[derive(Debug, Clone, Copy)]
pub struct ScaledIdentity {
    pub n: usize,
    pub alpha: f64,
}

impl LinearOperator for ScaledIdentity {
    fn input_len(&self) -> usize {
        self.n
    }

    fn output_len(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        crate::error::check_len("scaled identity", self.n, x.len())?;
        Ok(x.iter().map(|v| self.alpha * v).collect())
    }

    fn apply_adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.apply(y)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub const LIPSCHITZ_SAFETY: f64 = 1.01;
pub const POWER_TOL: f64 = 1e-8;
pub const POWER_MAX_ITERS: usize = 500;

/// Power-iteration estimate of the largest eigenvalue of `AᵀA`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzEstimate {
    /// Rayleigh quotient times [`LIPSCHITZ_SAFETY`].
    pub value: f64,
    pub rayleigh: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Power iteration on `AᵀA` from a seeded Gaussian start vector.
pub fn estimate_lipschitz(
    op: &dyn LinearOperator,
    max_iters: usize,
    tol: f64,
    seed: u64,
) -> Result<LipschitzEstimate> {
    if max_iters == 0 {
        return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
    }
    let n = op.input_len();
    let mut rng = stream_rng(seed, Stream::Power, 0);
    let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|e| *e /= nv);
    let mut estimate = 0.0;
    for it in 1..=max_iters {
        let w = op.apply_adjoint(&op.apply(&v)?)?;
        let rq = dot(&v, &w);
        let nw = norm(&w);
        if nw == 0.0 {
            return Err(Error::Numerical("operator maps the start vector to zero".into()));
        }
        let prev = estimate;
        estimate = rq;
        v = w.into_iter().map(|e| e / nw).collect();
        if it > 1 && (estimate - prev).abs() <= tol * estimate.abs() {
            return Ok(LipschitzEstimate {
                value: LIPSCHITZ_SAFETY * estimate,
                rayleigh: estimate,
                iterations: it,
                converged: true,
            });
        }
    }
    Ok(LipschitzEstimate {
        value: LIPSCHITZ_SAFETY * estimate,
        rayleigh: estimate,
        iterations: max_iters,
        converged: false,
    })
}

/// [`estimate_lipschitz`] with the default tolerance and iteration budget.
pub fn lipschitz(op: &dyn LinearOperator, seed: u64) -> Result<LipschitzEstimate> {
    estimate_lipschitz(op, POWER_MAX_ITERS, POWER_TOL, seed)
}
