use super::shrink::shrink;
use crate::error::{check_len, Error, Result};
use crate::model::LinearOperator;

/// Named fixed-iteration ISTA baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IstaPreset {
    pub name: &'static str,
    pub iterations: usize,
}

pub const ISTA_200: IstaPreset = IstaPreset {
    name: "ISTA-200",
    iterations: 200,
};
pub const ISTA_500: IstaPreset = IstaPreset {
    name: "ISTA-500",
    iterations: 500,
};

/// Scale-free default regularization weight `0.1 · ‖Aᵀy‖_∞`.
pub fn default_lambda(op: &dyn LinearOperator, y: &[f64]) -> Result<f64> {
    let aty = op.apply_adjoint(y)?;
    Ok(0.1 * aty.iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

/// `½‖Ax − y‖² + λ‖x‖₁`.
pub fn lasso_objective(x: &[f64], y: &[f64], op: &dyn LinearOperator, lambda: f64) -> Result<f64> {
    check_len("lasso_objective x", op.input_len(), x.len())?;
    check_len("lasso_objective y", op.output_len(), y.len())?;
    let ax = op.apply(x)?;
    let fit: f64 = ax.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    let l1: f64 = x.iter().map(|v| v.abs()).sum();
    Ok(0.5 * fit + lambda * l1)
}

/// `S_{λ/L}(x − (1/L) Aᵀ(Ax − y))`.
pub fn ista_step(
    x: &[f64],
    y: &[f64],
    op: &dyn LinearOperator,
    lambda: f64,
    lipschitz: f64,
) -> Result<Vec<f64>> {
    if !(lipschitz > 0.0) {
        return Err(Error::InvalidArgument(format!("Lipschitz constant must be positive, got {lipschitz}")));
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be non-negative, got {lambda}")));
    }
    check_len("ista_step x", op.input_len(), x.len())?;
    check_len("ista_step y", op.output_len(), y.len())?;
    let mut r = op.apply(x)?;
    r.iter_mut().zip(y).for_each(|(a, b)| *a -= b);
    let g = op.apply_adjoint(&r)?;
    let step = 1.0 / lipschitz;
    let theta = lambda / lipschitz;
    Ok(x.iter()
        .zip(&g)
        .map(|(xi, gi)| shrink(xi - step * gi, theta))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct IstaResult {
    pub x: Vec<f64>,
    /// Objective at the start point followed by one value per iteration.
    pub objective: Vec<f64>,
    pub iterations: usize,
}

/// Iterate [`ista_step`] from `x = 0` for at most `max_iters` iterations, or
/// until the relative objective change drops below `stop_tol`.
pub fn ista_solve(
    y: &[f64],
    op: &dyn LinearOperator,
    lambda: f64,
    lipschitz: f64,
    max_iters: usize,
    stop_tol: f64,
) -> Result<IstaResult> {
    let mut x = vec![0.0; op.input_len()];
    let mut objective = vec![lasso_objective(&x, y, op, lambda)?];
    let mut iterations = 0;
    for _ in 0..max_iters {
        x = ista_step(&x, y, op, lambda, lipschitz)?;
        iterations += 1;
        let f = lasso_objective(&x, y, op, lambda)?;
        let prev = *objective.last().unwrap();
        objective.push(f);
        let change = if prev == 0.0 {
            (f - prev).abs()
        } else {
            (f - prev).abs() / prev
        };
        if change < stop_tol {
            break;
        }
    }
    Ok(IstaResult {
        x,
        objective,
        iterations,
    })
}

/// Number of entries where `x` is nonzero.
pub fn support(x: &[f64]) -> Vec<usize> {
    x.iter()
        .enumerate()
        .filter_map(|(i, v)| (*v != 0.0).then_some(i))
        .collect()
}
