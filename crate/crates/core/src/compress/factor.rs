use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use ndarray::Array2;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::linalg::{frobenius, from_na, lstsq, svd};
use crate::rng::{stream_rng, Stream};

/// How a basis/mixing pair was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Omp,
    Svd,
    Random,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Omp => "omp",
            Method::Svd => "svd",
            Method::Random => "random",
        })
    }
}

/// Random initialization schemes for the ablation baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitScheme {
    Xavier,
    Kaiming,
    Orthogonal,
}

impl FromStr for InitScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "xavier" | "glorot" => Ok(InitScheme::Xavier),
            "kaiming" | "he" => Ok(InitScheme::Kaiming),
            "orthogonal" => Ok(InitScheme::Orthogonal),
            other => Err(Error::InvalidArgument(format!("unknown init scheme '{other}'"))),
        }
    }
}

impl fmt::Display for InitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitScheme::Xavier => "xavier",
            InitScheme::Kaiming => "kaiming",
            InitScheme::Orthogonal => "orthogonal",
        })
    }
}

impl InitScheme {
    /// Nominal entry variance for a `rows × cols` matrix (`fan_in = cols`,
    /// `fan_out = rows`). Orthogonal matrices have no fixed entry variance.
    pub fn nominal_variance(self, rows: usize, cols: usize) -> Option<f64> {
        match self {
            InitScheme::Xavier => Some(2.0 / (rows + cols) as f64),
            InitScheme::Kaiming => Some(2.0 / cols as f64),
            InitScheme::Orthogonal => None,
        }
    }
}

/// `W ≈ C · B` with `B` (`M × K`) and `C` (`C_out × M`).
#[derive(Debug, Clone, PartialEq)]
pub struct Factorization {
    pub basis: Array2<f64>,
    pub mixing: Array2<f64>,
    /// Rows of `W` copied into `B` (OMP only).
    pub selected_rows: Vec<usize>,
    pub method: Method,
}

impl Factorization {
    pub fn rank(&self) -> usize {
        self.basis.nrows()
    }

    pub fn recompose(&self) -> Array2<f64> {
        self.mixing.dot(&self.basis)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorizationReport {
    /// `‖W − CB‖_F` after each basis increment.
    pub residual_history: Vec<f64>,
    pub final_error: f64,
    /// `(C_out · K) / (M · (K + C_out))`.
    pub compression_ratio: f64,
    /// The mixing solve hit a rank-deficient `BBᵀ` and used the pseudo-inverse.
    pub rank_deficient: bool,
    pub note: Option<String>,
}

pub fn compression_ratio(channels: usize, kernel_len: usize, basis: usize) -> f64 {
    (channels * kernel_len) as f64 / (basis * (kernel_len + channels)) as f64
}

/// `‖W − CB‖_F`.
pub fn factorization_error(w: &Array2<f64>, b: &Array2<f64>, c: &Array2<f64>) -> Result<f64> {
    if c.ncols() != b.nrows() || c.nrows() != w.nrows() || b.ncols() != w.ncols() {
        return Err(shape_err(
            "factorization_error",
            format!("C {}x·, B ·x{}", w.nrows(), w.ncols()),
            format!("C {}x{}, B {}x{}", c.nrows(), c.ncols(), b.nrows(), b.ncols()),
        ));
    }
    Ok(frobenius(&(w - &c.dot(b))))
}

/// Least-squares mixing `C = argmin ‖W − CB‖_F`, i.e. `WBᵀ(BBᵀ)⁻¹` when `B`
/// has full row rank. Solved through an SVD of `Bᵀ`; returns `C` and the
/// numerical rank of `B`.
pub fn least_squares_mixing(w: &Array2<f64>, b: &Array2<f64>) -> Result<(Array2<f64>, usize)> {
    if b.ncols() != w.ncols() {
        return Err(shape_err("least_squares_mixing", w.ncols(), b.ncols()));
    }
    if b.iter().all(|&v| v == 0.0) {
        return Err(Error::InvalidArgument("basis matrix is all zero".into()));
    }
    let sol = lstsq(&b.t().to_owned(), &w.t().to_owned());
    Ok((sol.x.t().to_owned(), sol.rank))
}

/// Relative post-projection norm below which a candidate row is treated as
/// already spanned.
pub const DEGENERATE_ROW_TOL: f64 = 1e-12;

/// Greedy row selection: pick the unselected row `j` maximizing
/// `E_j = Σ_i ⟨R_i, W_j⟩²`, refit `C` by least squares, update `R = W − CB`.
/// Stops at `max_basis` rows or once `‖R‖_F ≤ residual_tol`.
pub fn omp_select_basis(
    w: &Array2<f64>,
    max_basis: usize,
    residual_tol: f64,
) -> Result<(Factorization, FactorizationReport)> {
    let (c_out, k) = w.dim();
    if max_basis == 0 || max_basis > c_out {
        return Err(Error::InvalidArgument(format!(
            "basis budget must be in [1, {c_out}], got {max_basis}"
        )));
    }
    let w_norm = frobenius(w);
    if w_norm == 0.0 {
        return Err(Error::InvalidArgument("kernel bank is all zero".into()));
    }
    let mut selected: Vec<usize> = Vec::with_capacity(max_basis);
    let mut residual = w.clone();
    let mut mixing = Array2::zeros((c_out, 0));
    let mut basis = Array2::zeros((0, k));
    let mut history = Vec::with_capacity(max_basis);
    let mut rank_deficient = false;
    let mut note = None;

    while selected.len() < max_basis {
        // corr[i, j] = ⟨R_i, W_j⟩
        let corr = residual.dot(&w.t());
        let mut best: Option<(usize, f64)> = None;
        for j in 0..c_out {
            if selected.contains(&j) {
                continue;
            }
            // Row j of R is W_j minus its projection onto span(B).
            let proj_norm = residual.row(j).dot(&residual.row(j)).sqrt();
            if proj_norm < DEGENERATE_ROW_TOL * w_norm {
                continue;
            }
            let energy: f64 = corr.column(j).iter().map(|v| v * v).sum();
            if best.is_none_or(|(_, e)| energy > e) {
                best = Some((j, energy));
            }
        }
        let Some((j_star, _)) = best else {
            note = Some(format!(
                "remaining rows lie in the span of the selected basis; stopped at {} of {max_basis}",
                selected.len()
            ));
            break;
        };
        selected.push(j_star);
        basis = Array2::from_shape_fn((selected.len(), k), |(r, c)| w[[selected[r], c]]);
        let (c_mat, rank) = least_squares_mixing(w, &basis)?;
        rank_deficient |= rank < selected.len();
        mixing = c_mat;
        residual = w - &mixing.dot(&basis);
        let err = frobenius(&residual);
        history.push(err);
        if err <= residual_tol {
            break;
        }
    }
    let final_error = history.last().copied().unwrap_or(w_norm);
    let m = selected.len();
    Ok((
        Factorization {
            basis,
            mixing,
            selected_rows: selected,
            method: Method::Omp,
        },
        FactorizationReport {
            residual_history: history,
            final_error,
            compression_ratio: compression_ratio(c_out, k, m),
            rank_deficient,
            note,
        },
    ))
}

/// Truncated SVD: `B = V_Mᵀ` (orthonormal rows), `C = U_M Σ_M`.
pub fn svd_factorize(w: &Array2<f64>, basis: usize) -> Result<(Factorization, FactorizationReport)> {
    let (c_out, k) = w.dim();
    if basis == 0 {
        return Err(Error::InvalidArgument("basis budget must be at least 1".into()));
    }
    let dec = svd(w);
    let full = dec.sigma.len();
    let m = basis.min(full);
    let note = (basis > full).then(|| {
        format!("requested {basis} basis filters but the matrix has only {full} singular values; factorization is exact")
    });
    let b = dec.vt.slice(ndarray::s![..m, ..]).to_owned();
    let mut c = dec.u.slice(ndarray::s![.., ..m]).to_owned();
    for (j, mut col) in c.columns_mut().into_iter().enumerate() {
        col *= dec.sigma[j];
    }
    // Eckart–Young tails for every prefix length.
    let history: Vec<f64> = (1..=m)
        .map(|r| dec.sigma[r..].iter().map(|s| s * s).sum::<f64>().sqrt())
        .collect();
    let final_error = factorization_error(w, &b, &c)?;
    Ok((
        Factorization {
            basis: b,
            mixing: c,
            selected_rows: Vec::new(),
            method: Method::Svd,
        },
        FactorizationReport {
            residual_history: history,
            final_error,
            compression_ratio: compression_ratio(c_out, k, m),
            rank_deficient: false,
            note,
        },
    ))
}

pub(crate) fn random_matrix(rows: usize, cols: usize, scheme: InitScheme, seed: u64, index: u64) -> Array2<f64> {
    let mut rng = stream_rng(seed, Stream::Init, index);
    match scheme.nominal_variance(rows, cols) {
        Some(var) => {
            let normal = Normal::new(0.0, var.sqrt()).expect("finite variance");
            Array2::from_shape_fn((rows, cols), |_| normal.sample(&mut rng))
        }
        None => {
            // Orthonormalize the longer dimension of a Gaussian draw.
            let (long, short) = if rows >= cols { (rows, cols) } else { (cols, rows) };
            let normal = Normal::new(0.0, 1.0).unwrap();
            let g = DMatrix::from_fn(long, short, |_, _| normal.sample(&mut rng));
            let q = from_na(&g.qr().q());
            if rows >= cols {
                q
            } else {
                q.t().as_standard_layout().into_owned()
            }
        }
    }
}

/// Seeded random `B` (`M × K`) and `C` (`C_out × M`).
pub fn random_factorize(
    channels: usize,
    kernel_len: usize,
    basis: usize,
    scheme: InitScheme,
    seed: u64,
) -> Result<Factorization> {
    if basis == 0 || basis > channels {
        return Err(Error::InvalidArgument(format!(
            "basis budget must be in [1, {channels}], got {basis}"
        )));
    }
    if scheme == InitScheme::Orthogonal && basis > kernel_len {
        return Err(Error::InvalidArgument(format!(
            "orthogonal basis needs M ≤ K, got M = {basis}, K = {kernel_len}"
        )));
    }
    Ok(Factorization {
        basis: random_matrix(basis, kernel_len, scheme, seed, 0),
        mixing: random_matrix(channels, basis, scheme, seed, 1),
        selected_rows: Vec::new(),
        method: Method::Random,
    })
}
