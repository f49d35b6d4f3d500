//! Small dense linear-algebra helpers bridging `ndarray` storage and the
//! `nalgebra` decompositions.

use nalgebra::DMatrix;
use ndarray::Array2;

pub(crate) fn to_na(a: &Array2<f64>) -> DMatrix<f64> {
    let (r, c) = a.dim();
    DMatrix::from_fn(r, c, |i, j| a[[i, j]])
}

pub(crate) fn from_na(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Thin SVD with singular values sorted in decreasing order.
pub struct SortedSvd {
    /// `rows × r`
    pub u: Array2<f64>,
    pub sigma: Vec<f64>,
    /// `r × cols`
    pub vt: Array2<f64>,
}

pub fn svd(a: &Array2<f64>) -> SortedSvd {
    let m = to_na(a);
    let dec = m.svd(true, true);
    let u = dec.u.expect("u requested");
    let vt = dec.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..dec.singular_values.len()).collect();
    order.sort_by(|&i, &j| {
        dec.singular_values[j]
            .partial_cmp(&dec.singular_values[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let r = order.len();
    let (rows, cols) = a.dim();
    let mut uo = Array2::zeros((rows, r));
    let mut vto = Array2::zeros((r, cols));
    let mut sigma = Vec::with_capacity(r);
    for (dst, &src) in order.iter().enumerate() {
        sigma.push(dec.singular_values[src]);
        for i in 0..rows {
            uo[[i, dst]] = u[(i, src)];
        }
        for j in 0..cols {
            vto[[dst, j]] = vt[(src, j)];
        }
    }
    SortedSvd { u: uo, sigma, vt: vto }
}

/// Result of a minimum-norm least-squares solve.
pub struct LstsqSolution {
    pub x: Array2<f64>,
    pub rank: usize,
}

/// Minimum-norm solution of `a · x ≈ b` via an SVD pseudo-inverse.
///
/// Singular values below `max(rows, cols) · ε · σ_max` are treated as zero.
pub fn lstsq(a: &Array2<f64>, b: &Array2<f64>) -> LstsqSolution {
    let dec = svd(a);
    let smax = dec.sigma.first().copied().unwrap_or(0.0);
    let (rows, cols) = a.dim();
    let cutoff = rows.max(cols) as f64 * f64::EPSILON * smax;
    let rank = dec.sigma.iter().filter(|&&s| s > cutoff).count();
    // x = V Σ⁺ Uᵀ b
    let mut utb = dec.u.t().dot(b);
    for (k, mut row) in utb.rows_mut().into_iter().enumerate() {
        let s = dec.sigma[k];
        if s > cutoff {
            row.mapv_inplace(|v| v / s);
        } else {
            row.fill(0.0);
        }
    }
    LstsqSolution {
        x: dec.vt.t().dot(&utb),
        rank,
    }
}

pub fn frobenius(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}
