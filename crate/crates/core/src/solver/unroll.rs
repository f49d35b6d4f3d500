use ndarray::{Array1, Array2};

use super::network::{GroupKind, OperatorParams, SliceParams, UnrolledNet};
use super::shrink::shrink;
use crate::error::{check_len, Error, Result};
use crate::model::{
    accumulate, cube_to_slice_means, cube_to_slice_sums, slices_to_cube, DataCube,
    LinearOperator, SliceData, SliceGeometry,
};
use crate::parallel::{map_slice, Parallelism};

/// Network input prepared from a data cube.
#[derive(Debug, Clone, PartialEq)]
pub enum NetInput {
    /// Symmetrized slice data for conv blocks.
    Slices(SliceData),
    /// Vectorized cube for dense blocks.
    Cube(Vec<f64>),
}

impl NetInput {
    pub fn from_cube(net: &UnrolledNet, y: &DataCube) -> Result<Self> {
        let s = &net.setup;
        if y.nt != s.num_samples || y.nc != s.num_elements {
            return Err(crate::error::shape_err(
                "network input",
                format!("{}x{}x{}", s.num_samples, s.num_elements, s.num_elements),
                format!("{}x{}x{}", y.nt, y.nc, y.nc),
            ));
        }
        Ok(match net.block_operator(0) {
            OperatorParams::Dense { .. } => NetInput::Cube(y.values.clone()),
            OperatorParams::Conv { .. } => NetInput::Slices(cube_to_slice_means(y, &net.geometry)),
        })
    }
}

/// Intermediates of one block kept for the backward pass.
#[derive(Debug, Clone)]
pub struct BlockTrace {
    pub input: Vec<f64>,
    /// Slice residuals `F x − y` (conv blocks only).
    pub residual: Option<SliceData>,
    /// Pre-activation `v`.
    pub pre: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub blocks: Vec<BlockTrace>,
}

fn forward_slices(
    geoms: &[SliceGeometry],
    params: &[SliceParams],
    x: &[f64],
    y: &SliceData,
) -> SliceData {
    SliceData(
        geoms
            .iter()
            .zip(params)
            .zip(&y.0)
            .map(|((g, p), yd)| p.apply(&g.gather(x)) - yd)
            .collect(),
    )
}

fn transposed_sum(geoms: &[SliceGeometry], params: &[SliceParams], r: &SliceData) -> Vec<f64> {
    let n = geoms.first().map_or(0, |g| g.input_len);
    let parts = geoms
        .iter()
        .zip(params)
        .zip(&r.0)
        .map(|((g, p), rd)| {
            let win = p.apply_t(rd);
            let mut out = vec![0.0; n];
            g.scatter_add(win.view(), g.multiplicity as f64, &mut out);
            out
        })
        .collect();
    accumulate(parts, n)
}

fn dense_pre(w1: &Array2<f64>, w2: &Array2<f64>, x: &[f64], y: &[f64]) -> Vec<f64> {
    let a = w1.dot(&Array1::from(x.to_vec()));
    let b = w2.dot(&Array1::from(y.to_vec()));
    (a + b).to_vec()
}

/// Run all blocks from `x = 0`. Returns the estimate and, if requested, the
/// trace needed by [`network_backward`].
pub fn network_forward(
    net: &UnrolledNet,
    input: &NetInput,
    keep_trace: bool,
) -> Result<(Vec<f64>, Option<ForwardTrace>)> {
    let ns = net.setup.num_pixels();
    let mut x = vec![0.0; ns];
    let mut blocks = Vec::new();
    for k in 0..net.num_blocks {
        let theta = net.thresholds[k];
        let (pre, residual) = match (net.block_operator(k), input) {
            (OperatorParams::Dense { w1, w2 }, NetInput::Cube(y)) => {
                check_len("dense block data", w2.ncols(), y.len())?;
                (dense_pre(w1, w2, &x, y), None)
            }
            (
                OperatorParams::Conv {
                    forward,
                    transposed,
                },
                NetInput::Slices(y),
            ) => {
                let r = forward_slices(&net.geometry, forward, &x, y);
                let u = transposed_sum(&net.geometry, transposed, &r);
                let v: Vec<f64> = x.iter().zip(&u).map(|(xi, ui)| xi - net.step * ui).collect();
                (v, Some(r))
            }
            _ => {
                return Err(Error::InvalidArgument(
                    "network input kind does not match the block type".into(),
                ))
            }
        };
        let next: Vec<f64> = pre.iter().map(|&v| shrink(v, theta)).collect();
        if keep_trace {
            blocks.push(BlockTrace {
                input: std::mem::replace(&mut x, next),
                residual,
                pre,
            });
        } else {
            x = next;
        }
    }
    Ok((x, keep_trace.then_some(ForwardTrace { blocks })))
}

/// Convenience: prepare the input from a cube and run the network.
pub fn network_predict(net: &UnrolledNet, y: &DataCube) -> Result<Vec<f64>> {
    let input = NetInput::from_cube(net, y)?;
    Ok(network_forward(net, &input, false)?.0)
}

/// Gradients aligned with [`UnrolledNet::groups`]; `None` for frozen groups.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub groups: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn zeros_like(net: &UnrolledNet) -> Self {
        Gradients {
            groups: net
                .groups()
                .iter()
                .map(|g| g.trainable.then(|| vec![0.0; g.values.len()]))
                .collect(),
        }
    }

    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.groups.iter_mut().zip(&other.groups) {
            if let (Some(a), Some(b)) = (a, b) {
                a.iter_mut().zip(b).for_each(|(p, q)| *p += scale * q);
            }
        }
    }

    /// Number of scalars carrying a gradient entry.
    pub fn len(&self) -> usize {
        self.groups.iter().flatten().map(|g| g.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn max_abs(&self) -> f64 {
        self.groups
            .iter()
            .flatten()
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Backpropagate `grad_out = ∂loss/∂x̂` through the recorded trace.
pub fn network_backward(
    net: &UnrolledNet,
    input: &NetInput,
    trace: &ForwardTrace,
    grad_out: &[f64],
) -> Result<Gradients> {
    check_len("network_backward gradient", net.setup.num_pixels(), grad_out.len())?;
    if trace.blocks.len() != net.num_blocks {
        return Err(Error::InvalidArgument("trace does not match the network".into()));
    }
    let train_f = net.trainable.forward;
    let train_t = net.trainable.transposed;
    let mut acc: Vec<OperatorParams> = net.operators.iter().map(|o| o.zeros_like()).collect();
    let mut dtheta = vec![0.0; net.num_blocks];
    let mut g = grad_out.to_vec();

    for k in (0..net.num_blocks).rev() {
        let bt = &trace.blocks[k];
        let theta = net.thresholds[k];
        let mut gv = vec![0.0; g.len()];
        let mut dt = 0.0;
        for i in 0..g.len() {
            let v = bt.pre[i];
            if v.abs() > theta {
                gv[i] = g[i];
                dt -= v.signum() * g[i];
            }
        }
        dtheta[k] = dt;
        let slot = if net.shared { 0 } else { k };
        let acc_k = &mut acc[slot];
        g = match (net.block_operator(k), input, acc_k) {
            (OperatorParams::Dense { w1, .. }, NetInput::Cube(y), OperatorParams::Dense { w1: d1, w2: d2 }) => {
                let gva = Array1::from(gv.clone());
                if train_f {
                    let xa = Array1::from(bt.input.clone());
                    for i in 0..gv.len() {
                        if gv[i] != 0.0 {
                            d1.row_mut(i).scaled_add(gv[i], &xa);
                        }
                    }
                }
                if train_t {
                    let ya = ndarray::ArrayView1::from(y.as_slice());
                    for i in 0..gv.len() {
                        if gv[i] != 0.0 {
                            d2.row_mut(i).scaled_add(gv[i], &ya);
                        }
                    }
                }
                w1.t().dot(&gva).to_vec()
            }
            (
                OperatorParams::Conv {
                    forward,
                    transposed,
                },
                NetInput::Slices(_),
                OperatorParams::Conv {
                    forward: df,
                    transposed: dtr,
                },
            ) => {
                let r = bt.residual.as_ref().expect("conv trace carries residuals");
                let gu: Vec<f64> = gv.iter().map(|v| -net.step * v).collect();
                let mut gx = gv;
                for (d, geo) in net.geometry.iter().enumerate() {
                    let gwin = geo.gather(&gu) * geo.multiplicity as f64;
                    let gr = transposed[d].backward_apply_t(
                        &r.0[d],
                        &gwin,
                        train_t.then_some(&mut dtr[d]),
                    );
                    let xwin = geo.gather(&bt.input);
                    let gxwin =
                        forward[d].backward_apply(&xwin, &gr, train_f.then_some(&mut df[d]));
                    geo.scatter_add(gxwin.view(), 1.0, &mut gx);
                }
                gx
            }
            _ => {
                return Err(Error::InvalidArgument(
                    "network input kind does not match the block type".into(),
                ))
            }
        };
    }

    let mut groups: Vec<Option<Vec<f64>>> = acc
        .iter()
        .flat_map(|o| o.arrays())
        .map(|(kind, a)| {
            net.kind_trainable(kind)
                .then(|| a.as_slice().expect("standard layout").to_vec())
        })
        .collect();
    groups.push(net.kind_trainable(GroupKind::Threshold).then_some(dtheta));
    Ok(Gradients { groups })
}

/// `‖x̂ − x‖² / N_s`.
pub fn mse(estimate: &[f64], truth: &[f64]) -> f64 {
    let n = truth.len().max(1) as f64;
    estimate
        .iter()
        .zip(truth)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n
}

/// Loss and gradient of one training pair.
pub fn sample_gradient(
    net: &UnrolledNet,
    y: &DataCube,
    truth: &[f64],
) -> Result<(f64, Gradients)> {
    check_len("training target", net.setup.num_pixels(), truth.len())?;
    let input = NetInput::from_cube(net, y)?;
    let (est, trace) = network_forward(net, &input, true)?;
    let n = truth.len() as f64;
    let grad: Vec<f64> = est
        .iter()
        .zip(truth)
        .map(|(a, b)| 2.0 * (a - b) / n)
        .collect();
    let grads = network_backward(net, &input, &trace.expect("trace requested"), &grad)?;
    Ok((mse(&est, truth), grads))
}

/// Mean loss and mean gradient over a batch. Per-sample results are summed
/// in batch order, so both execution modes agree bit for bit.
pub fn batch_gradient(
    net: &UnrolledNet,
    batch: &[(DataCube, Vec<f64>)],
    mode: Parallelism,
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let parts = map_slice(batch, mode, |(y, x)| sample_gradient(net, y, x));
    let scale = 1.0 / batch.len() as f64;
    let mut total = Gradients::zeros_like(net);
    let mut loss = 0.0;
    for p in parts {
        let (l, g) = p?;
        loss += l;
        total.add_scaled(&g, scale);
    }
    Ok((loss * scale, total))
}

/// The measurement operator realized by block `k`'s conv weights: forward
/// path for `apply`, transposed path for `apply_adjoint`, both in the cube
/// domain.
pub struct BlockOperator<'a> {
    net: &'a UnrolledNet,
    forward: &'a [SliceParams],
    transposed: &'a [SliceParams],
}

impl<'a> BlockOperator<'a> {
    pub fn new(net: &'a UnrolledNet, k: usize) -> Result<Self> {
        match net.block_operator(k) {
            OperatorParams::Conv {
                forward,
                transposed,
            } => Ok(BlockOperator {
                net,
                forward,
                transposed,
            }),
            OperatorParams::Dense { .. } => Err(Error::InvalidArgument(
                "dense blocks have no convolutional operator".into(),
            )),
        }
    }
}

impl LinearOperator for BlockOperator<'_> {
    fn input_len(&self) -> usize {
        self.net.setup.num_pixels()
    }

    fn output_len(&self) -> usize {
        self.net.setup.num_data()
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("block operator input", self.input_len(), x.len())?;
        let s = SliceData(
            self.net
                .geometry
                .iter()
                .zip(self.forward)
                .map(|(g, p)| p.apply(&g.gather(x)))
                .collect(),
        );
        Ok(slices_to_cube(&s, self.net.setup.num_samples, self.net.setup.num_elements).values)
    }

    fn apply_adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        let cube = DataCube::from_vec(
            self.net.setup.num_samples,
            self.net.setup.num_elements,
            y.to_vec(),
        )?;
        let sums = cube_to_slice_sums(&cube, &self.net.geometry);
        let n = self.input_len();
        let parts = self
            .net
            .geometry
            .iter()
            .zip(self.transposed)
            .zip(&sums.0)
            .map(|((g, p), sd)| {
                let mut out = vec![0.0; n];
                g.scatter_add(p.apply_t(sd).view(), 1.0, &mut out);
                out
            })
            .collect();
        Ok(accumulate(parts, n))
    }
}
