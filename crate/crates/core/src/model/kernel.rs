use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, shape_err, Result};

/// Index metadata of one strided `Conv1D` slice layer.
///
/// Output `τ` of channel `i` reads input entries `τ · stride − k + padding`
/// for `k ∈ [0, kernel_len)`. Reads outside `[0, input_len)` are zero.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceGeometry {
    pub offset: usize,
    pub channels: usize,
    pub kernel_len: usize,
    pub stride: usize,
    pub padding: usize,
    pub input_len: usize,
    pub output_len: usize,
    /// 1 for the centre slice, 2 for a symmetric pair of off-diagonal slices.
    pub multiplicity: usize,
}

impl SliceGeometry {
    /// Contiguous valid `k` range `[lo, hi)` for output index `tau`, plus the
    /// input index read at `k = lo`.
    #[inline]
    fn valid_range(&self, tau: usize) -> Option<(usize, usize, usize)> {
        let base = (tau * self.stride + self.padding) as isize;
        let n_in = self.input_len as isize;
        let lo = (base - (n_in - 1)).max(0);
        let hi = (base + 1).min(self.kernel_len as isize);
        if lo >= hi {
            return None;
        }
        Some((lo as usize, hi as usize, (base - lo) as usize))
    }

    /// Input index read by output `tau` at tap `k`, if it is in range.
    pub fn input_index(&self, tau: usize, k: usize) -> Option<usize> {
        let idx = (tau * self.stride + self.padding) as isize - k as isize;
        (idx >= 0 && idx < self.input_len as isize).then_some(idx as usize)
    }

    /// Unfold `x` into the `kernel_len × output_len` window matrix
    /// `X[k, τ] = x[τ·S − k + P]`.
    pub fn gather(&self, x: &[f64]) -> Array2<f64> {
        debug_assert_eq!(x.len(), self.input_len);
        let mut win = Array2::zeros((self.kernel_len, self.output_len));
        for tau in 0..self.output_len {
            if let Some((lo, hi, start)) = self.valid_range(tau) {
                for (j, k) in (lo..hi).enumerate() {
                    win[[k, tau]] = x[start - j];
                }
            }
        }
        win
    }

    /// Transpose of [`gather`](Self::gather): `out[τ·S − k + P] += scale · win[k, τ]`.
    pub fn scatter_add(&self, win: ArrayView2<f64>, scale: f64, out: &mut [f64]) {
        debug_assert_eq!(win.dim(), (self.kernel_len, self.output_len));
        debug_assert_eq!(out.len(), self.input_len);
        for tau in 0..self.output_len {
            if let Some((lo, hi, start)) = self.valid_range(tau) {
                for (j, k) in (lo..hi).enumerate() {
                    out[start - j] += scale * win[[k, tau]];
                }
            }
        }
    }

    pub fn check_output(&self, context: &'static str, y: &Array2<f64>) -> Result<()> {
        if y.dim() != (self.channels, self.output_len) {
            return Err(shape_err(
                context,
                format!("{}x{}", self.channels, self.output_len),
                format!("{}x{}", y.nrows(), y.ncols()),
            ));
        }
        Ok(())
    }
}

/// Per-slice kernel bank `W` (`channels × kernel_len`) with its geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceKernel {
    pub geometry: SliceGeometry,
    pub weights: Array2<f64>,
}

impl SliceKernel {
    pub fn new(geometry: SliceGeometry, weights: Array2<f64>) -> Result<Self> {
        if weights.dim() != (geometry.channels, geometry.kernel_len) {
            return Err(shape_err(
                "slice kernel weights",
                format!("{}x{}", geometry.channels, geometry.kernel_len),
                format!("{}x{}", weights.nrows(), weights.ncols()),
            ));
        }
        Ok(SliceKernel { geometry, weights })
    }

    pub fn multiplicity(&self) -> usize {
        self.geometry.multiplicity
    }
}

/// `y[i, τ] = Σ_k w[i, k] · x[τ·S − k + P]`.
pub fn slice_forward(kernel: &SliceKernel, x: &[f64]) -> Result<Array2<f64>> {
    check_len("slice_forward input", kernel.geometry.input_len, x.len())?;
    Ok(kernel.weights.dot(&kernel.geometry.gather(x)))
}

/// Transposed convolution with the same weights; exact adjoint of
/// [`slice_forward`].
pub fn slice_adjoint(kernel: &SliceKernel, y: &Array2<f64>) -> Result<Vec<f64>> {
    kernel.geometry.check_output("slice_adjoint input", y)?;
    let win = kernel.weights.t().dot(y);
    let mut out = vec![0.0; kernel.geometry.input_len];
    kernel.geometry.scatter_add(win.view(), 1.0, &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};

    fn geom(k: usize, s: usize, p: usize, n_in: usize, t_out: usize, c: usize) -> SliceGeometry {
        SliceGeometry {
            offset: 0,
            channels: c,
            kernel_len: k,
            stride: s,
            padding: p,
            input_len: n_in,
            output_len: t_out,
            multiplicity: 1,
        }
    }

    fn random_kernel(rng: &mut impl Rng, g: SliceGeometry) -> SliceKernel {
        let w = Array2::from_shape_fn((g.channels, g.kernel_len), |_| rng.random_range(-1.0..1.0));
        SliceKernel::new(g, w).unwrap()
    }

    /// Explicit banded matrix `T` with `(T x)[i·T_out + τ] = y[i, τ]`.
    fn toeplitz_oracle(kernel: &SliceKernel) -> Array2<f64> {
        let g = &kernel.geometry;
        let mut t = Array2::zeros((g.channels * g.output_len, g.input_len));
        for i in 0..g.channels {
            for tau in 0..g.output_len {
                for k in 0..g.kernel_len {
                    let idx = (tau * g.stride + g.padding) as isize - k as isize;
                    if idx >= 0 && (idx as usize) < g.input_len {
                        t[[i * g.output_len + tau, idx as usize]] += kernel.weights[[i, k]];
                    }
                }
            }
        }
        t
    }

    #[test]
    fn identity_kernel() {
        let k = SliceKernel::new(geom(1, 1, 0, 5, 5, 1), array![[1.0]]).unwrap();
        let x = vec![1.0, -2.0, 3.0, 4.5, 0.25];
        let y = slice_forward(&k, &x).unwrap();
        assert_eq!(y.row(0).to_vec(), x);
        let back = slice_adjoint(&k, &y).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn zero_in_zero_out() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let k = random_kernel(&mut rng, geom(3, 2, 1, 7, 4, 2));
        let y = slice_forward(&k, &[0.0; 7]).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
        let x = slice_adjoint(&k, &Array2::zeros((2, 4))).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matches_toeplitz_assembly() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let k = random_kernel(&mut rng, geom(2, 1, 0, 4, 4, 3));
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = slice_forward(&k, &x).unwrap();
        let t = toeplitz_oracle(&k);
        let ty = t.dot(&ndarray::Array1::from(x));
        for i in 0..3 {
            for tau in 0..4 {
                assert!((y[[i, tau]] - ty[i * 4 + tau]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn strided_padded_matches_toeplitz() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let k = random_kernel(&mut rng, geom(5, 3, 4, 9, 4, 2));
        let x: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = slice_forward(&k, &x).unwrap();
        let ty = toeplitz_oracle(&k).dot(&ndarray::Array1::from(x));
        for i in 0..2 {
            for tau in 0..4 {
                assert!((y[[i, tau]] - ty[i * 4 + tau]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn dot_product_identity() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for trial in 0..50 {
            let g = geom(
                1 + trial % 6,
                1 + trial % 3,
                trial % 4,
                5 + trial % 7,
                1 + trial % 5,
                1 + trial % 4,
            );
            let k = random_kernel(&mut rng, g.clone());
            let x: Vec<f64> = (0..g.input_len).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = Array2::from_shape_fn((g.channels, g.output_len), |_| rng.random_range(-1.0..1.0));
            let lhs: f64 = (&slice_forward(&k, &x).unwrap() * &y).sum();
            let ax = slice_adjoint(&k, &y).unwrap();
            let rhs: f64 = x.iter().zip(&ax).map(|(a, b)| a * b).sum();
            let scale = lhs.abs().max(rhs.abs()).max(1e-300);
            assert!((lhs - rhs).abs() / scale < 1e-12, "trial {trial}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let k = SliceKernel::new(geom(1, 1, 0, 5, 5, 1), array![[1.0]]).unwrap();
        assert!(slice_forward(&k, &[1.0; 4]).is_err());
        assert!(slice_adjoint(&k, &Array2::zeros((1, 4))).is_err());
        assert!(SliceKernel::new(geom(2, 1, 0, 5, 5, 1), array![[1.0]]).is_err());
    }
}
