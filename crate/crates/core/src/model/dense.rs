use ndarray::Array2;

use super::operator::LinearOperator;
use super::slice_model::SliceConvModel;
use crate::error::{check_len, Error, Result};

/// Default cap on materialized dense matrices: 1 GiB of `f64` entries.
pub const DEFAULT_DENSE_CAP_BYTES: u64 = 1 << 30;

pub(crate) fn check_cap(rows: usize, cols: usize, cap_bytes: u64) -> Result<()> {
    let needed = rows as u64 * cols as u64 * 8;
    if needed > cap_bytes {
        return Err(Error::MemoryCap {
            needed,
            cap: cap_bytes,
        });
    }
    Ok(())
}

/// Materialize `A` (`N_d × N_s`) column by column: column `j` is
/// `vec(forward_apply(e_j))`.
pub fn dense_operator(model: &SliceConvModel, cap_bytes: u64) -> Result<Array2<f64>> {
    let nd = model.num_data();
    let ns = model.num_pixels();
    check_cap(nd, ns, cap_bytes)?;
    let mut a = Array2::zeros((nd, ns));
    let mut e = vec![0.0; ns];
    for j in 0..ns {
        e[j] = 1.0;
        let col = model.apply(&e)?;
        a.column_mut(j).assign(&ndarray::Array1::from(col));
        e[j] = 0.0;
    }
    Ok(a)
}

/// Dense matrix as a [`LinearOperator`].
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator(pub Array2<f64>);

impl LinearOperator for DenseOperator {
    fn input_len(&self) -> usize {
        self.0.ncols()
    }

    fn output_len(&self) -> usize {
        self.0.nrows()
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("dense apply", self.0.ncols(), x.len())?;
        Ok(self.0.dot(&ndarray::ArrayView1::from(x)).to_vec())
    }

    fn apply_adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len("dense adjoint", self.0.nrows(), y.len())?;
        Ok(self.0.t().dot(&ndarray::ArrayView1::from(y)).to_vec())
    }
}
