use std::path::Path;

use serde::{Deserialize, Serialize};

use super::container::{Block, Container};
use crate::compress::{CompressedModel, FactorizationReport, FactorizedKernel, Method};
use crate::error::{Error, Result};
use crate::model::{DataCube, ImagingSetup, ReflectivityMap, SliceConvModel, SliceGeometry, SliceKernel};
use crate::solver::{Arch, NetworkInit, OperatorParams, SliceParams, Trainability, UnrolledNet};

pub const KIND_MODEL: &str = "model";
pub const KIND_COMPRESSED: &str = "compressed";
pub const KIND_NETWORK: &str = "network";
pub const KIND_CUBE: &str = "cube";
pub const KIND_REFLECTIVITY: &str = "reflectivity";

fn to_meta<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    serde_json::to_value(v).map_err(|e| Error::Format(e.to_string()))
}

fn from_meta<T: for<'de> Deserialize<'de>>(v: &serde_json::Value) -> Result<T> {
    serde_json::from_value(v.clone()).map_err(|e| Error::Format(format!("metadata: {e}")))
}

fn take_blocks(c: &Container, n: usize) -> Result<std::slice::Iter<'_, Block>> {
    if c.blocks.len() != n {
        return Err(Error::Format(format!(
            "'{}' artifact declares {} blocks, expected {n}",
            c.kind,
            c.blocks.len()
        )));
    }
    Ok(c.blocks.iter())
}

#[derive(Serialize, Deserialize)]
struct ModelMeta {
    setup: ImagingSetup,
    slices: Vec<SliceGeometry>,
}

pub fn model_to_container(m: &SliceConvModel) -> Result<Container> {
    let meta = ModelMeta {
        setup: m.setup.clone(),
        slices: m.geometries(),
    };
    let blocks = m
        .slices
        .iter()
        .map(|s| Block::matrix(format!("slice{}.weights", s.geometry.offset), &s.weights))
        .collect();
    Ok(Container::new(KIND_MODEL, to_meta(&meta)?, blocks))
}

pub fn model_from_container(c: &Container) -> Result<SliceConvModel> {
    c.expect_kind(KIND_MODEL)?;
    let meta: ModelMeta = from_meta(&c.meta)?;
    let mut it = take_blocks(c, meta.slices.len())?;
    let slices = meta
        .slices
        .into_iter()
        .map(|g| SliceKernel::new(g, it.next().unwrap().to_matrix()?))
        .collect::<Result<Vec<_>>>()?;
    Ok(SliceConvModel {
        setup: meta.setup,
        slices,
    })
}

#[derive(Serialize, Deserialize)]
struct CompressedSlice {
    geometry: SliceGeometry,
    selected_rows: Vec<usize>,
    method: Method,
}

#[derive(Serialize, Deserialize)]
struct CompressedMeta {
    setup: ImagingSetup,
    slices: Vec<CompressedSlice>,
    reports: Vec<FactorizationReport>,
}

pub fn compressed_to_container(m: &CompressedModel) -> Result<Container> {
    let meta = CompressedMeta {
        setup: m.setup.clone(),
        slices: m
            .slices
            .iter()
            .map(|s| CompressedSlice {
                geometry: s.geometry.clone(),
                selected_rows: s.selected_rows.clone(),
                method: s.method,
            })
            .collect(),
        reports: m.reports.clone(),
    };
    let mut blocks = Vec::new();
    for s in &m.slices {
        let d = s.geometry.offset;
        blocks.push(Block::matrix(format!("slice{d}.basis"), &s.basis));
        blocks.push(Block::matrix(format!("slice{d}.mixing"), &s.mixing));
    }
    Ok(Container::new(KIND_COMPRESSED, to_meta(&meta)?, blocks))
}

pub fn compressed_from_container(c: &Container) -> Result<CompressedModel> {
    c.expect_kind(KIND_COMPRESSED)?;
    let meta: CompressedMeta = from_meta(&c.meta)?;
    let mut it = take_blocks(c, 2 * meta.slices.len())?;
    let slices = meta
        .slices
        .into_iter()
        .map(|s| {
            let basis = it.next().unwrap().to_matrix()?;
            let mixing = it.next().unwrap().to_matrix()?;
            FactorizedKernel::new(
                s.geometry,
                crate::compress::Factorization {
                    basis,
                    mixing,
                    selected_rows: s.selected_rows,
                    method: s.method,
                },
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CompressedModel {
        setup: meta.setup,
        slices,
        reports: meta.reports,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Layout {
    Dense,
    Full,
    Factored,
}

#[derive(Serialize, Deserialize)]
struct NetworkMeta {
    arch: Arch,
    num_blocks: usize,
    shared: bool,
    trainable: Trainability,
    init: NetworkInit,
    compression: Option<(String, usize)>,
    step: f64,
    lambda: f64,
    lipschitz: f64,
    layout: Layout,
    operator_sets: usize,
    setup: ImagingSetup,
    geometry: Vec<SliceGeometry>,
}

fn network_layout(net: &UnrolledNet) -> Layout {
    match net.operators.first() {
        Some(OperatorParams::Dense { .. }) => Layout::Dense,
        Some(OperatorParams::Conv { forward, .. }) => match forward.first() {
            Some(SliceParams::Factored { .. }) => Layout::Factored,
            _ => Layout::Full,
        },
        None => Layout::Full,
    }
}

fn network_meta(net: &UnrolledNet) -> Result<serde_json::Value> {
    to_meta(&NetworkMeta {
        arch: net.arch,
        num_blocks: net.num_blocks,
        shared: net.shared,
        trainable: net.trainable,
        init: net.init,
        compression: net.compression.clone(),
        step: net.step,
        lambda: net.lambda,
        lipschitz: net.lipschitz,
        layout: network_layout(net),
        operator_sets: net.operators.len(),
        setup: net.setup.clone(),
        geometry: net.geometry.clone(),
    })
}

fn slice_blocks(prefix: &str, params: &[SliceParams], out: &mut Vec<Block>) {
    for (d, p) in params.iter().enumerate() {
        match p {
            SliceParams::Full(w) => out.push(Block::matrix(format!("{prefix}{d}.weights"), w)),
            SliceParams::Factored { basis, mixing } => {
                out.push(Block::matrix(format!("{prefix}{d}.basis"), basis));
                out.push(Block::matrix(format!("{prefix}{d}.mixing"), mixing));
            }
        }
    }
}

fn network_blocks(net: &UnrolledNet) -> Vec<Block> {
    let mut blocks = Vec::new();
    for (o, op) in net.operators.iter().enumerate() {
        match op {
            OperatorParams::Dense { w1, w2 } => {
                blocks.push(Block::matrix(format!("op{o}.w1"), w1));
                blocks.push(Block::matrix(format!("op{o}.w2"), w2));
            }
            OperatorParams::Conv {
                forward,
                transposed,
            } => {
                slice_blocks(&format!("op{o}.forward"), forward, &mut blocks);
                slice_blocks(&format!("op{o}.transposed"), transposed, &mut blocks);
            }
        }
    }
    blocks.push(Block::vector("thresholds", &net.thresholds));
    blocks
}

/// Header and block order mirror [`UnrolledNet::groups`].
pub fn network_to_container(net: &UnrolledNet) -> Result<Container> {
    Ok(Container::new(KIND_NETWORK, network_meta(net)?, network_blocks(net)))
}

/// Preamble plus header length of the persisted network.
pub fn network_envelope_len(net: &UnrolledNet) -> Result<usize> {
    network_to_container(net)?.envelope_len()
}

pub fn network_from_container(c: &Container) -> Result<UnrolledNet> {
    c.expect_kind(KIND_NETWORK)?;
    let meta: NetworkMeta = from_meta(&c.meta)?;
    let nslices = meta.geometry.len();
    let per_set = match meta.layout {
        Layout::Dense => 2,
        Layout::Full => 2 * nslices,
        Layout::Factored => 4 * nslices,
    };
    let mut it = take_blocks(c, per_set * meta.operator_sets + 1)?;
    let read_slices = |it: &mut std::slice::Iter<'_, Block>| -> Result<Vec<SliceParams>> {
        (0..nslices)
            .map(|_| {
                Ok(match meta.layout {
                    Layout::Factored => SliceParams::Factored {
                        basis: it.next().unwrap().to_matrix()?,
                        mixing: it.next().unwrap().to_matrix()?,
                    },
                    _ => SliceParams::Full(it.next().unwrap().to_matrix()?),
                })
            })
            .collect()
    };
    let mut operators = Vec::with_capacity(meta.operator_sets);
    for _ in 0..meta.operator_sets {
        operators.push(match meta.layout {
            Layout::Dense => OperatorParams::Dense {
                w1: it.next().unwrap().to_matrix()?,
                w2: it.next().unwrap().to_matrix()?,
            },
            _ => {
                let forward = read_slices(&mut it)?;
                let transposed = read_slices(&mut it)?;
                OperatorParams::Conv {
                    forward,
                    transposed,
                }
            }
        });
    }
    let thresholds = it.next().unwrap().data.clone();
    if thresholds.len() != meta.num_blocks {
        return Err(Error::Format("threshold count does not match block count".into()));
    }
    Ok(UnrolledNet {
        arch: meta.arch,
        num_blocks: meta.num_blocks,
        setup: meta.setup,
        geometry: meta.geometry,
        operators,
        thresholds,
        step: meta.step,
        lambda: meta.lambda,
        lipschitz: meta.lipschitz,
        trainable: meta.trainable,
        shared: meta.shared,
        init: meta.init,
        compression: meta.compression,
    })
}

#[derive(Serialize, Deserialize)]
struct CubeMeta {
    nt: usize,
    nc: usize,
}

pub fn cube_to_container(y: &DataCube) -> Container {
    Container::new(
        KIND_CUBE,
        serde_json::json!({"nt": y.nt, "nc": y.nc}),
        vec![Block {
            name: "values".into(),
            shape: vec![y.nt, y.nc, y.nc],
            data: y.values.clone(),
        }],
    )
}

pub fn cube_from_container(c: &Container) -> Result<DataCube> {
    c.expect_kind(KIND_CUBE)?;
    let meta: CubeMeta = from_meta(&c.meta)?;
    let mut it = take_blocks(c, 1)?;
    DataCube::from_vec(meta.nt, meta.nc, it.next().unwrap().data.clone())
}

#[derive(Serialize, Deserialize)]
struct MapMeta {
    nz: usize,
    nx: usize,
}

/// Stored as an `nx × nz` block (columns outermost), matching the flat order.
pub fn reflectivity_to_container(x: &ReflectivityMap) -> Container {
    Container::new(
        KIND_REFLECTIVITY,
        serde_json::json!({"nz": x.nz, "nx": x.nx}),
        vec![Block {
            name: "values".into(),
            shape: vec![x.nx, x.nz],
            data: x.values.clone(),
        }],
    )
}

pub fn reflectivity_from_container(c: &Container) -> Result<ReflectivityMap> {
    c.expect_kind(KIND_REFLECTIVITY)?;
    let meta: MapMeta = from_meta(&c.meta)?;
    let mut it = take_blocks(c, 1)?;
    ReflectivityMap::from_vec(meta.nz, meta.nx, it.next().unwrap().data.clone())
}

/// Any artifact this crate writes.
#[derive(Debug, Clone)]
pub enum Artifact {
    Model(SliceConvModel),
    Compressed(CompressedModel),
    Network(Box<UnrolledNet>),
    Cube(DataCube),
    Reflectivity(ReflectivityMap),
}

impl Artifact {
    pub fn from_container(c: &Container) -> Result<Self> {
        Ok(match c.kind.as_str() {
            KIND_MODEL => Artifact::Model(model_from_container(c)?),
            KIND_COMPRESSED => Artifact::Compressed(compressed_from_container(c)?),
            KIND_NETWORK => Artifact::Network(Box::new(network_from_container(c)?)),
            KIND_CUBE => Artifact::Cube(cube_from_container(c)?),
            KIND_REFLECTIVITY => Artifact::Reflectivity(reflectivity_from_container(c)?),
            other => return Err(Error::Format(format!("unknown artifact kind '{other}'"))),
        })
    }

    pub fn to_container(&self) -> Result<Container> {
        match self {
            Artifact::Model(m) => model_to_container(m),
            Artifact::Compressed(m) => compressed_to_container(m),
            Artifact::Network(n) => network_to_container(n),
            Artifact::Cube(y) => Ok(cube_to_container(y)),
            Artifact::Reflectivity(x) => Ok(reflectivity_to_container(x)),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Artifact::Model(_) => KIND_MODEL,
            Artifact::Compressed(_) => KIND_COMPRESSED,
            Artifact::Network(_) => KIND_NETWORK,
            Artifact::Cube(_) => KIND_CUBE,
            Artifact::Reflectivity(_) => KIND_REFLECTIVITY,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::read(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container()?.write(path)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.to_container()?.to_bytes()
    }
}
