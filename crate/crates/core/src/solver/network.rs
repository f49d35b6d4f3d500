use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::compress::{random_factorize, random_matrix, CompressedModel, InitScheme};
use crate::error::{Error, Result};
use crate::model::{dense_operator, ImagingSetup, SliceConvModel, SliceGeometry};
use crate::rng::{derive_seed, Stream};

/// Unrolled network families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Mlp,
    Alista,
    Bc,
    Cbc,
}

impl std::str::FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "mlp" | "lista" | "mlplista" => Ok(Arch::Mlp),
            "alista" => Ok(Arch::Alista),
            "bc" | "bclista" => Ok(Arch::Bc),
            "cbc" | "cbclista" => Ok(Arch::Cbc),
            _ => Err(Error::InvalidArgument(format!("unknown architecture '{s}'"))),
        }
    }
}

impl std::fmt::Display for Arch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Arch::Mlp => "mlp",
            Arch::Alista => "alista",
            Arch::Bc => "bc",
            Arch::Cbc => "cbc",
        })
    }
}

/// Which parameter families receive gradient updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trainability {
    pub forward: bool,
    pub transposed: bool,
    pub thresholds: bool,
}

impl Default for Trainability {
    fn default() -> Self {
        Trainability {
            forward: true,
            transposed: true,
            thresholds: true,
        }
    }
}

/// Weights of one slice layer.
#[derive(Debug, Clone, PartialEq)]
pub enum SliceParams {
    /// `C_out × K`
    Full(Array2<f64>),
    /// `basis: M × K`, `mixing: C_out × M`
    Factored {
        basis: Array2<f64>,
        mixing: Array2<f64>,
    },
}

impl SliceParams {
    /// `y = P(win)` for a `K × T` window.
    pub(crate) fn apply(&self, win: &Array2<f64>) -> Array2<f64> {
        match self {
            SliceParams::Full(w) => w.dot(win),
            SliceParams::Factored { basis, mixing } => mixing.dot(&basis.dot(win)),
        }
    }

    /// `Pᵀ r`, a `K × T` window.
    pub(crate) fn apply_t(&self, r: &Array2<f64>) -> Array2<f64> {
        match self {
            SliceParams::Full(w) => w.t().dot(r),
            SliceParams::Factored { basis, mixing } => basis.t().dot(&mixing.t().dot(r)),
        }
    }

    pub(crate) fn zeros_like(&self) -> SliceParams {
        match self {
            SliceParams::Full(w) => SliceParams::Full(Array2::zeros(w.dim())),
            SliceParams::Factored { basis, mixing } => SliceParams::Factored {
                basis: Array2::zeros(basis.dim()),
                mixing: Array2::zeros(mixing.dim()),
            },
        }
    }

    /// Backward of [`apply`](Self::apply): accumulates weight gradients into
    /// `acc` (if given) and returns the window gradient.
    pub(crate) fn backward_apply(
        &self,
        win: &Array2<f64>,
        gy: &Array2<f64>,
        acc: Option<&mut SliceParams>,
    ) -> Array2<f64> {
        match self {
            SliceParams::Full(w) => {
                if let Some(SliceParams::Full(dw)) = acc {
                    *dw += &gy.dot(&win.t());
                }
                w.t().dot(gy)
            }
            SliceParams::Factored { basis, mixing } => {
                let gz = mixing.t().dot(gy);
                if let Some(SliceParams::Factored {
                    basis: db,
                    mixing: dc,
                }) = acc
                {
                    let z = basis.dot(win);
                    *dc += &gy.dot(&z.t());
                    *db += &gz.dot(&win.t());
                }
                basis.t().dot(&gz)
            }
        }
    }

    /// Backward of [`apply_t`](Self::apply_t) given the output window
    /// gradient `gwin`; returns the gradient with respect to `r`.
    pub(crate) fn backward_apply_t(
        &self,
        r: &Array2<f64>,
        gwin: &Array2<f64>,
        acc: Option<&mut SliceParams>,
    ) -> Array2<f64> {
        match self {
            SliceParams::Full(w) => {
                if let Some(SliceParams::Full(dw)) = acc {
                    *dw += &r.dot(&gwin.t());
                }
                w.dot(gwin)
            }
            SliceParams::Factored { basis, mixing } => {
                let gz = basis.dot(gwin);
                if let Some(SliceParams::Factored {
                    basis: db,
                    mixing: dc,
                }) = acc
                {
                    let z = mixing.t().dot(r);
                    *db += &z.dot(&gwin.t());
                    *dc += &r.dot(&gz.t());
                }
                mixing.dot(&gz)
            }
        }
    }

    pub(crate) fn arrays(&self) -> Vec<&Array2<f64>> {
        match self {
            SliceParams::Full(w) => vec![w],
            SliceParams::Factored { basis, mixing } => vec![basis, mixing],
        }
    }

    pub(crate) fn arrays_mut(&mut self) -> Vec<&mut Array2<f64>> {
        match self {
            SliceParams::Full(w) => vec![w],
            SliceParams::Factored { basis, mixing } => vec![basis, mixing],
        }
    }
}

/// Operator weights of one block (or of all blocks when shared).
#[derive(Debug, Clone, PartialEq)]
pub enum OperatorParams {
    /// `x' = S_θ(W1 x + W2 y)`; `w1: N_s × N_s`, `w2: N_s × N_d`.
    Dense { w1: Array2<f64>, w2: Array2<f64> },
    /// Per-slice forward and transposed convolution weights.
    Conv {
        forward: Vec<SliceParams>,
        transposed: Vec<SliceParams>,
    },
}

impl OperatorParams {
    pub(crate) fn zeros_like(&self) -> OperatorParams {
        match self {
            OperatorParams::Dense { w1, w2 } => OperatorParams::Dense {
                w1: Array2::zeros(w1.dim()),
                w2: Array2::zeros(w2.dim()),
            },
            OperatorParams::Conv {
                forward,
                transposed,
            } => OperatorParams::Conv {
                forward: forward.iter().map(SliceParams::zeros_like).collect(),
                transposed: transposed.iter().map(SliceParams::zeros_like).collect(),
            },
        }
    }

    /// Arrays tagged with their family, in canonical order.
    pub(crate) fn arrays(&self) -> Vec<(GroupKind, &Array2<f64>)> {
        match self {
            OperatorParams::Dense { w1, w2 } => {
                vec![(GroupKind::Forward, w1), (GroupKind::Transposed, w2)]
            }
            OperatorParams::Conv {
                forward,
                transposed,
            } => forward
                .iter()
                .flat_map(|p| p.arrays().into_iter().map(|a| (GroupKind::Forward, a)))
                .chain(
                    transposed
                        .iter()
                        .flat_map(|p| p.arrays().into_iter().map(|a| (GroupKind::Transposed, a))),
                )
                .collect(),
        }
    }

    pub(crate) fn arrays_mut(&mut self) -> Vec<(GroupKind, &mut Array2<f64>)> {
        match self {
            OperatorParams::Dense { w1, w2 } => {
                vec![(GroupKind::Forward, w1), (GroupKind::Transposed, w2)]
            }
            OperatorParams::Conv {
                forward,
                transposed,
            } => {
                let mut out: Vec<(GroupKind, &mut Array2<f64>)> = Vec::new();
                for p in forward.iter_mut() {
                    out.extend(p.arrays_mut().into_iter().map(|a| (GroupKind::Forward, a)));
                }
                for p in transposed.iter_mut() {
                    out.extend(p.arrays_mut().into_iter().map(|a| (GroupKind::Transposed, a)));
                }
                out
            }
        }
    }
}

/// Family of a parameter group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupKind {
    Forward,
    Transposed,
    Threshold,
}

/// How the network weights were initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NetworkInit {
    /// Weights taken from the forward model (or its compression).
    Analytic,
    /// Weights drawn from `scheme`; forward and transposed paths start equal.
    Random { scheme: InitScheme, seed: u64 },
}

/// Where the analytic weights and the slice geometry come from.
#[derive(Debug, Clone, Copy)]
pub enum NetworkSource<'a> {
    Model(&'a SliceConvModel),
    Compressed(&'a CompressedModel),
}

impl NetworkSource<'_> {
    fn setup(&self) -> &ImagingSetup {
        match self {
            NetworkSource::Model(m) => &m.setup,
            NetworkSource::Compressed(c) => &c.setup,
        }
    }

    fn geometries(&self) -> Vec<SliceGeometry> {
        match self {
            NetworkSource::Model(m) => m.geometries(),
            NetworkSource::Compressed(c) => c.geometries(),
        }
    }
}

/// Everything [`build_network`] needs besides the source model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub arch: Arch,
    pub num_blocks: usize,
    pub init: NetworkInit,
    pub lambda: f64,
    pub lipschitz: f64,
    pub trainable: Trainability,
    pub shared: bool,
    pub dense_cap_bytes: u64,
}

/// An unrolled ISTA network.
///
/// Conv blocks compute `r = F x − y`, `u = Σ_d m_d T_d r_d`,
/// `x' = S_θ(x − η u)` with `η = 1/L`; dense blocks compute
/// `x' = S_θ(W1 x + W2 y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnrolledNet {
    pub arch: Arch,
    pub num_blocks: usize,
    pub setup: ImagingSetup,
    pub geometry: Vec<SliceGeometry>,
    /// One entry when `shared`, otherwise one per block.
    pub operators: Vec<OperatorParams>,
    pub thresholds: Vec<f64>,
    pub step: f64,
    pub lambda: f64,
    pub lipschitz: f64,
    pub trainable: Trainability,
    pub shared: bool,
    pub init: NetworkInit,
    /// Compression method and basis size for factored networks.
    pub compression: Option<(String, usize)>,
}

/// Read-only view of one parameter group.
#[derive(Debug, Clone, Copy)]
pub struct ParamGroup<'a> {
    pub kind: GroupKind,
    pub trainable: bool,
    pub values: &'a [f64],
}

/// Trainable scalars split by family; shared weights count once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCount {
    pub operator: usize,
    pub thresholds: usize,
}

impl ParamCount {
    pub fn total(&self) -> usize {
        self.operator + self.thresholds
    }
}

fn standard(a: Array2<f64>) -> Array2<f64> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

/// Construct an unrolled network.
///
/// Analytic init copies the model kernels (or the compressed factors) into
/// both the forward and the transposed path and sets every threshold to
/// `λ/L`. ALISTA always freezes its operator weights.
pub fn build_network(spec: &NetworkSpec, source: NetworkSource<'_>) -> Result<UnrolledNet> {
    if !(spec.lipschitz > 0.0) || !spec.lipschitz.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "Lipschitz constant must be positive, got {}",
            spec.lipschitz
        )));
    }
    if !(spec.lambda >= 0.0) || !spec.lambda.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "lambda must be non-negative, got {}",
            spec.lambda
        )));
    }
    let setup = source.setup().clone();
    let geometry = source.geometries();
    let step = 1.0 / spec.lipschitz;
    let theta = spec.lambda / spec.lipschitz;
    let mut trainable = spec.trainable;
    let mut compression = None;

    let base = match (spec.arch, spec.init, source) {
        (Arch::Mlp, NetworkInit::Analytic, NetworkSource::Model(m)) => {
            let a = dense_operator(m, spec.dense_cap_bytes)?;
            let ata = a.t().dot(&a);
            let n = ata.nrows();
            let w1 = Array2::from_shape_fn((n, n), |(i, j)| {
                let id = if i == j { 1.0 } else { 0.0 };
                id - step * ata[[i, j]]
            });
            let w2 = standard(a.t().mapv(|v| step * v));
            OperatorParams::Dense { w1, w2 }
        }
        (Arch::Mlp, NetworkInit::Random { scheme, seed }, _) => {
            let ns = setup.num_pixels();
            let nd = setup.num_data();
            crate::model::check_cap(ns, ns + nd, spec.dense_cap_bytes)?;
            OperatorParams::Dense {
                w1: standard(random_matrix(ns, ns, scheme, seed, 0)),
                w2: standard(random_matrix(ns, nd, scheme, seed, 1)),
            }
        }
        (Arch::Alista | Arch::Bc, NetworkInit::Analytic, NetworkSource::Model(m)) => {
            let w: Vec<SliceParams> = m
                .slices
                .iter()
                .map(|s| SliceParams::Full(standard(s.weights.clone())))
                .collect();
            OperatorParams::Conv {
                forward: w.clone(),
                transposed: w,
            }
        }
        (Arch::Bc, NetworkInit::Random { scheme, seed }, _) => {
            let w = geometry
                .iter()
                .map(|g| {
                    Ok(SliceParams::Full(standard(random_matrix(
                        g.channels,
                        g.kernel_len,
                        scheme,
                        seed,
                        g.offset as u64,
                    ))))
                })
                .collect::<Result<Vec<_>>>()?;
            OperatorParams::Conv {
                forward: w.clone(),
                transposed: w,
            }
        }
        (Arch::Cbc, init, NetworkSource::Compressed(c)) => {
            let m = c.slices.iter().map(|s| s.num_basis()).max().unwrap_or(0);
            compression = Some((
                c.slices
                    .first()
                    .map(|s| s.method.to_string())
                    .unwrap_or_default(),
                m,
            ));
            let w = c
                .slices
                .iter()
                .map(|s| match init {
                    NetworkInit::Analytic => Ok(SliceParams::Factored {
                        basis: standard(s.basis.clone()),
                        mixing: standard(s.mixing.clone()),
                    }),
                    NetworkInit::Random { scheme, seed } => {
                        let g = &s.geometry;
                        let f = random_factorize(
                            g.channels,
                            g.kernel_len,
                            s.num_basis(),
                            scheme,
                            derive_seed(seed, Stream::Init, g.offset as u64),
                        )?;
                        Ok(SliceParams::Factored {
                            basis: standard(f.basis),
                            mixing: standard(f.mixing),
                        })
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            OperatorParams::Conv {
                forward: w.clone(),
                transposed: w,
            }
        }
        (Arch::Alista, NetworkInit::Random { .. }, _) => {
            return Err(Error::InvalidSetup(
                "alista uses fixed analytic weights; random init is not defined".into(),
            ))
        }
        (Arch::Cbc, _, NetworkSource::Model(_)) => {
            return Err(Error::InvalidSetup(
                "cbc requires a compressed model as its source".into(),
            ))
        }
        (arch, NetworkInit::Analytic, NetworkSource::Compressed(_)) => {
            return Err(Error::InvalidSetup(format!(
                "analytic {arch} init requires the full forward model"
            )))
        }
    };
    if spec.arch == Arch::Alista {
        trainable.forward = false;
        trainable.transposed = false;
    }
    let copies = if spec.shared { 1 } else { spec.num_blocks.max(1) };
    Ok(UnrolledNet {
        arch: spec.arch,
        num_blocks: spec.num_blocks,
        setup,
        geometry,
        operators: vec![base; copies],
        thresholds: vec![theta; spec.num_blocks],
        step,
        lambda: spec.lambda,
        lipschitz: spec.lipschitz,
        trainable,
        shared: spec.shared,
        init: spec.init,
        compression,
    })
}

impl UnrolledNet {
    /// Operator weights used by block `k`.
    pub fn block_operator(&self, k: usize) -> &OperatorParams {
        if self.shared {
            &self.operators[0]
        } else {
            &self.operators[k]
        }
    }

    pub(crate) fn kind_trainable(&self, kind: GroupKind) -> bool {
        match kind {
            GroupKind::Forward => self.trainable.forward,
            GroupKind::Transposed => self.trainable.transposed,
            GroupKind::Threshold => self.trainable.thresholds,
        }
    }

    /// All parameter groups in canonical order: operator arrays of each
    /// operator set, then the thresholds.
    pub fn groups(&self) -> Vec<ParamGroup<'_>> {
        let mut out: Vec<ParamGroup<'_>> = self
            .operators
            .iter()
            .flat_map(|op| op.arrays())
            .map(|(kind, a)| ParamGroup {
                kind,
                trainable: self.kind_trainable(kind),
                values: a.as_slice().expect("standard layout"),
            })
            .collect();
        out.push(ParamGroup {
            kind: GroupKind::Threshold,
            trainable: self.trainable.thresholds,
            values: &self.thresholds,
        });
        out
    }

    /// Mutable counterpart of [`groups`](Self::groups).
    pub fn groups_mut(&mut self) -> Vec<(GroupKind, &mut [f64])> {
        let mut out: Vec<(GroupKind, &mut [f64])> = self
            .operators
            .iter_mut()
            .flat_map(|op| op.arrays_mut())
            .map(|(kind, a)| (kind, a.as_slice_mut().expect("standard layout")))
            .collect();
        out.push((GroupKind::Threshold, self.thresholds.as_mut_slice()));
        out
    }

    /// Number of trainable scalars.
    pub fn param_count(&self) -> ParamCount {
        let mut c = ParamCount {
            operator: 0,
            thresholds: 0,
        };
        for g in self.groups().iter().filter(|g| g.trainable) {
            match g.kind {
                GroupKind::Threshold => c.thresholds += g.values.len(),
                _ => c.operator += g.values.len(),
            }
        }
        c
    }

    /// Every stored scalar, trainable or not.
    pub fn stored_scalars(&self) -> usize {
        self.groups().iter().map(|g| g.values.len()).sum()
    }
}
