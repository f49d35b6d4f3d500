use ndarray::Array2;

use super::factor::{Factorization, Method};
use crate::error::{check_len, shape_err, Result};
use crate::model::{SliceGeometry, SliceKernel};

/// A slice layer replaced by a basis convolution followed by a `1 × 1`
/// mixing convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorizedKernel {
    pub geometry: SliceGeometry,
    /// `M × K`
    pub basis: Array2<f64>,
    /// `C_out × M`
    pub mixing: Array2<f64>,
    pub selected_rows: Vec<usize>,
    pub method: Method,
}

impl FactorizedKernel {
    pub fn new(geometry: SliceGeometry, f: Factorization) -> Result<Self> {
        let m = f.basis.nrows();
        if f.basis.ncols() != geometry.kernel_len
            || f.mixing.dim() != (geometry.channels, m)
        {
            return Err(shape_err(
                "factorized kernel",
                format!("B Mx{}, C {}xM", geometry.kernel_len, geometry.channels),
                format!(
                    "B {}x{}, C {}x{}",
                    f.basis.nrows(),
                    f.basis.ncols(),
                    f.mixing.nrows(),
                    f.mixing.ncols()
                ),
            ));
        }
        Ok(FactorizedKernel {
            geometry,
            basis: f.basis,
            mixing: f.mixing,
            selected_rows: f.selected_rows,
            method: f.method,
        })
    }

    pub fn num_basis(&self) -> usize {
        self.basis.nrows()
    }

    /// The equivalent single-layer kernel with weights `C · B`.
    pub fn recomposed(&self) -> SliceKernel {
        SliceKernel {
            geometry: self.geometry.clone(),
            weights: self.mixing.dot(&self.basis),
        }
    }
}

/// Basis responses `z[j, τ] = Σ_k B[j, k] x[τ·S − k + P]`, then `y = C z`.
pub fn decomposed_forward(fk: &FactorizedKernel, x: &[f64]) -> Result<Array2<f64>> {
    check_len("decomposed_forward input", fk.geometry.input_len, x.len())?;
    let z = fk.basis.dot(&fk.geometry.gather(x));
    Ok(fk.mixing.dot(&z))
}

/// `z' = Cᵀ y`, then the transposed basis convolution.
pub fn decomposed_adjoint(fk: &FactorizedKernel, y: &Array2<f64>) -> Result<Vec<f64>> {
    fk.geometry.check_output("decomposed_adjoint input", y)?;
    let z = fk.mixing.t().dot(y);
    let win = fk.basis.t().dot(&z);
    let mut out = vec![0.0; fk.geometry.input_len];
    fk.geometry.scatter_add(win.view(), 1.0, &mut out);
    Ok(out)
}
