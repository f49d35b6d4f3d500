use ndarray::Array2;

use super::kernel::{slice_adjoint, slice_forward, SliceGeometry, SliceKernel};
use super::setup::{DataCube, ImagingSetup, ReflectivityMap};
use crate::error::{check_len, shape_err, Error, Result};
use crate::parallel::{map_slice, Parallelism};

/// Analytic slice-wise convolutional forward model: one [`SliceKernel`] per
/// unique transmitter/receiver offset `d = 0 … N_c − 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceConvModel {
    pub setup: ImagingSetup,
    pub slices: Vec<SliceKernel>,
}

/// Data in slice form: entry `d` is the `N_t × (N_c − d)` matrix of slice `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceData(pub Vec<Array2<f64>>);

impl SliceData {
    pub fn zeros_like(geoms: &[SliceGeometry]) -> Self {
        SliceData(
            geoms
                .iter()
                .map(|g| Array2::zeros((g.channels, g.output_len)))
                .collect(),
        )
    }
}

/// Geometry of every slice; only depends on the setup.
pub fn slice_geometries(setup: &ImagingSetup) -> Result<Vec<SliceGeometry>> {
    setup.validate()?;
    let q = setup.lateral_ratio()?;
    let nz = setup.grid_nz;
    let nx = setup.grid_nx;
    let ns = setup.num_pixels();
    Ok((0..setup.num_elements)
        .map(|d| {
            let pairs = setup.num_elements - d;
            // Relative column offsets u = col − r·q span [−(pairs−1)·q, nx − 1].
            let span = (pairs - 1) * q + nx;
            SliceGeometry {
                offset: d,
                channels: setup.num_samples,
                kernel_len: span * nz,
                stride: q * nz,
                padding: ns - 1,
                input_len: ns,
                output_len: pairs,
                multiplicity: if d == 0 { 1 } else { 2 },
            }
        })
        .collect())
}

/// Relative column `u` and depth `z` addressed by tap `k`, from
/// `padding − k = u · nz + z` with `0 ≤ z < nz`.
fn tap_coordinates(g: &SliceGeometry, nz: usize, k: usize) -> (isize, usize) {
    let rel = g.padding as isize - k as isize;
    (rel.div_euclid(nz as isize), rel.rem_euclid(nz as isize) as usize)
}

fn check_visibility(setup: &ImagingSetup) -> Result<()> {
    let window = setup.num_samples as f64 / setup.sampling_rate;
    for col in 0..setup.grid_nx {
        for z in 0..setup.grid_nz {
            let px = setup.pixel_x(col as isize);
            let pz = setup.pixel_z(z);
            let mut min_delay = f64::INFINITY;
            for tx in 0..setup.num_elements {
                for rx in tx..setup.num_elements {
                    min_delay = min_delay.min(setup.round_trip_delay(tx, rx, px, pz));
                }
            }
            if min_delay > window {
                return Err(Error::EmptyOperator(format!(
                    "pixel (z={z}, col={col}) has minimum round-trip delay {min_delay:.3e} s, \
                     beyond the {window:.3e} s recording window"
                )));
            }
        }
    }
    Ok(())
}

/// Build the analytic kernels.
///
/// Kernel entry `w[i, k]` is the pulse sampled at `t_i − τ(u, z)`, where
/// `τ(u, z)` is the round-trip delay of the reference pair `(0, d)` to the
/// pixel at relative column `u` and depth `z` addressed by tap `k`.
pub fn build_slice_kernels(setup: &ImagingSetup) -> Result<SliceConvModel> {
    let geoms = slice_geometries(setup)?;
    check_visibility(setup)?;
    let nz = setup.grid_nz;
    let slices = geoms
        .into_iter()
        .map(|g| {
            let d = g.offset;
            let delays: Vec<f64> = (0..g.kernel_len)
                .map(|k| {
                    let (u, z) = tap_coordinates(&g, nz, k);
                    setup.round_trip_delay(0, d, setup.pixel_x(u), setup.pixel_z(z))
                })
                .collect();
            let w = Array2::from_shape_fn((g.channels, g.kernel_len), |(i, k)| {
                setup.pulse(setup.sample_time(i) - delays[k])
            });
            SliceKernel::new(g, w)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SliceConvModel {
        setup: setup.clone(),
        slices,
    })
}

impl SliceConvModel {
    pub fn geometries(&self) -> Vec<SliceGeometry> {
        self.slices.iter().map(|s| s.geometry.clone()).collect()
    }

    pub fn num_pixels(&self) -> usize {
        self.setup.num_pixels()
    }

    pub fn num_data(&self) -> usize {
        self.setup.num_data()
    }

    fn check_map(&self, x: &ReflectivityMap) -> Result<()> {
        if (x.nz, x.nx) != (self.setup.grid_nz, self.setup.grid_nx) {
            return Err(shape_err(
                "reflectivity map",
                format!("{}x{}", self.setup.grid_nz, self.setup.grid_nx),
                format!("{}x{}", x.nz, x.nx),
            ));
        }
        Ok(())
    }

    pub fn check_cube(&self, y: &DataCube) -> Result<()> {
        if (y.nt, y.nc) != (self.setup.num_samples, self.setup.num_elements) {
            return Err(shape_err(
                "data cube",
                format!("{}x{}x{}", self.setup.num_samples, self.setup.num_elements, self.setup.num_elements),
                format!("{}x{}x{}", y.nt, y.nc, y.nc),
            ));
        }
        Ok(())
    }

    pub fn forward_slices(&self, x: &[f64], mode: Parallelism) -> Result<SliceData> {
        check_len("forward input", self.num_pixels(), x.len())?;
        let out = map_slice(&self.slices, mode, |k| slice_forward(k, x));
        Ok(SliceData(out.into_iter().collect::<Result<Vec<_>>>()?))
    }
}

/// Place slice outputs into the cube at `(t, r, r + d)` and `(t, r + d, r)`.
pub fn slices_to_cube(data: &SliceData, nt: usize, nc: usize) -> DataCube {
    let mut cube = DataCube::zeros(nt, nc);
    for (d, block) in data.0.iter().enumerate() {
        for r in 0..block.ncols() {
            for t in 0..nt {
                let v = block[[t, r]];
                cube.set(t, r, r + d, v);
                cube.set(t, r + d, r, v);
            }
        }
    }
    cube
}

/// Adjoint of [`slices_to_cube`]: slice `d` collects `Y[:, r, r+d] + Y[:, r+d, r]`
/// (a single entry for `d = 0`).
pub fn cube_to_slice_sums(cube: &DataCube, geoms: &[SliceGeometry]) -> SliceData {
    SliceData(
        geoms
            .iter()
            .map(|g| {
                let d = g.offset;
                Array2::from_shape_fn((g.channels, g.output_len), |(t, r)| {
                    if d == 0 {
                        cube.get(t, r, r)
                    } else {
                        cube.get(t, r, r + d) + cube.get(t, r + d, r)
                    }
                })
            })
            .collect(),
    )
}

/// Symmetrized slice data `(Y[:, r, r+d] + Y[:, r+d, r]) / 2`; equals the
/// slice entries exactly for a reciprocal cube.
pub fn cube_to_slice_means(cube: &DataCube, geoms: &[SliceGeometry]) -> SliceData {
    let mut s = cube_to_slice_sums(cube, geoms);
    for (block, g) in s.0.iter_mut().zip(geoms) {
        if g.multiplicity == 2 {
            block.mapv_inplace(|v| v * 0.5);
        }
    }
    s
}

/// Sum per-slice vectors in slice order.
pub(crate) fn accumulate(parts: Vec<Vec<f64>>, len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for p in parts {
        for (o, v) in out.iter_mut().zip(p) {
            *o += v;
        }
    }
    out
}

pub fn forward_apply(model: &SliceConvModel, x: &ReflectivityMap) -> Result<DataCube> {
    forward_apply_with(model, x, Parallelism::default())
}

pub fn forward_apply_with(
    model: &SliceConvModel,
    x: &ReflectivityMap,
    mode: Parallelism,
) -> Result<DataCube> {
    model.check_map(x)?;
    let slices = model.forward_slices(&x.values, mode)?;
    Ok(slices_to_cube(
        &slices,
        model.setup.num_samples,
        model.setup.num_elements,
    ))
}

pub fn adjoint_apply(model: &SliceConvModel, y: &DataCube) -> Result<ReflectivityMap> {
    adjoint_apply_with(model, y, Parallelism::default())
}

pub fn adjoint_apply_with(
    model: &SliceConvModel,
    y: &DataCube,
    mode: Parallelism,
) -> Result<ReflectivityMap> {
    model.check_cube(y)?;
    let sums = cube_to_slice_sums(y, &model.geometries());
    let idx: Vec<usize> = (0..model.slices.len()).collect();
    let parts = map_slice(&idx, mode, |&d| slice_adjoint(&model.slices[d], &sums.0[d]));
    let parts = parts.into_iter().collect::<Result<Vec<_>>>()?;
    ReflectivityMap::from_vec(
        model.setup.grid_nz,
        model.setup.grid_nx,
        accumulate(parts, model.num_pixels()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_map(rng: &mut impl Rng, s: &ImagingSetup) -> ReflectivityMap {
        ReflectivityMap::from_vec(
            s.grid_nz,
            s.grid_nx,
            (0..s.num_pixels()).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    fn random_cube(rng: &mut impl Rng, s: &ImagingSetup) -> DataCube {
        DataCube::from_vec(
            s.num_samples,
            s.num_elements,
            (0..s.num_data()).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    fn small_setup() -> ImagingSetup {
        ImagingSetup {
            grid_nz: 6,
            grid_nx: 5,
            num_samples: 40,
            ..ImagingSetup::desk()
        }
    }

    #[test]
    fn single_element_has_one_slice() {
        let s = ImagingSetup {
            num_elements: 1,
            ..small_setup()
        };
        let m = build_slice_kernels(&s).unwrap();
        assert_eq!(m.slices.len(), 1);
        assert_eq!(m.slices[0].geometry.offset, 0);
        assert_eq!(m.slices[0].multiplicity(), 1);
    }

    #[test]
    fn slice_count_and_multiplicity() {
        let m = build_slice_kernels(&ImagingSetup::desk()).unwrap();
        assert_eq!(m.slices.len(), 4);
        for (d, s) in m.slices.iter().enumerate() {
            assert_eq!(s.geometry.offset, d);
            assert_eq!(s.geometry.output_len, 4 - d);
            assert_eq!(s.multiplicity(), if d == 0 { 1 } else { 2 });
        }
    }

    /// Independent geometric oracle: the d = 0 response of element 0 to a
    /// single scatterer peaks at the round-trip sample index.
    #[test]
    fn single_scatterer_peak_at_geometric_delay() {
        let s = ImagingSetup::desk();
        let m = build_slice_kernels(&s).unwrap();
        for &(z, col) in &[(3usize, 2usize), (10, 7), (15, 0)] {
            let mut x = ReflectivityMap::zeros(s.grid_nz, s.grid_nx);
            x.set(z, col, 1.0);
            let y = forward_apply(&m, &x).unwrap();
            let px = s.grid_origin + col as f64 * s.grid_pitch_x;
            let pz = s.grid_depth_origin + z as f64 * s.grid_pitch_z;
            let dist = (px * px + pz * pz).sqrt();
            let expected = (2.0 * dist / s.sound_speed * s.sampling_rate).round() as usize;
            let trace: Vec<f64> = (0..s.num_samples).map(|t| y.get(t, 0, 0)).collect();
            let argmax = trace
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
                .unwrap()
                .0;
            assert_eq!(argmax, expected, "pixel ({z}, {col})");
        }
    }

    #[test]
    fn rejects_invisible_pixels() {
        let s = ImagingSetup {
            grid_depth_origin: 10e-3,
            ..ImagingSetup::desk()
        };
        assert!(matches!(build_slice_kernels(&s), Err(Error::EmptyOperator(_))));
    }

    #[test]
    fn zero_map_gives_zero_cube_and_back() {
        let s = small_setup();
        let m = build_slice_kernels(&s).unwrap();
        let y = forward_apply(&m, &ReflectivityMap::zeros(s.grid_nz, s.grid_nx)).unwrap();
        assert!(y.values.iter().all(|&v| v == 0.0));
        let x = adjoint_apply(&m, &DataCube::zeros(s.num_samples, s.num_elements)).unwrap();
        assert!(x.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_is_reciprocal() {
        let s = small_setup();
        let m = build_slice_kernels(&s).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let y = forward_apply(&m, &random_map(&mut rng, &s)).unwrap();
        assert!(y.is_reciprocal());
    }

    #[test]
    fn global_dot_product_identity() {
        let s = small_setup();
        let m = build_slice_kernels(&s).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let x = random_map(&mut rng, &s);
            let y = random_cube(&mut rng, &s);
            let ax = forward_apply(&m, &x).unwrap();
            let aty = adjoint_apply(&m, &y).unwrap();
            let lhs: f64 = ax.values.iter().zip(&y.values).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.values.iter().zip(&aty.values).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() / lhs.abs().max(rhs.abs()) < 1e-12);
        }
    }

    #[test]
    fn linearity() {
        let s = small_setup();
        let m = build_slice_kernels(&s).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let x1 = random_map(&mut rng, &s);
        let x2 = random_map(&mut rng, &s);
        let (a, b) = (0.7, -1.3);
        let combo = ReflectivityMap::from_vec(
            s.grid_nz,
            s.grid_nx,
            x1.values.iter().zip(&x2.values).map(|(p, q)| a * p + b * q).collect(),
        )
        .unwrap();
        let y = forward_apply(&m, &combo).unwrap();
        let y1 = forward_apply(&m, &x1).unwrap();
        let y2 = forward_apply(&m, &x2).unwrap();
        for i in 0..y.values.len() {
            assert!((y.values[i] - (a * y1.values[i] + b * y2.values[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn kernels_are_deterministic() {
        let s = ImagingSetup::desk();
        assert_eq!(build_slice_kernels(&s).unwrap(), build_slice_kernels(&s).unwrap());
    }

    #[test]
    fn sequential_and_parallel_agree_bitwise() {
        let s = small_setup();
        let m = build_slice_kernels(&s).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let x = random_map(&mut rng, &s);
        let y = random_cube(&mut rng, &s);
        assert_eq!(
            forward_apply_with(&m, &x, Parallelism::Sequential).unwrap(),
            forward_apply_with(&m, &x, Parallelism::Parallel).unwrap()
        );
        assert_eq!(
            adjoint_apply_with(&m, &y, Parallelism::Sequential).unwrap(),
            adjoint_apply_with(&m, &y, Parallelism::Parallel).unwrap()
        );
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let s = small_setup();
        let m = build_slice_kernels(&s).unwrap();
        assert!(forward_apply(&m, &ReflectivityMap::zeros(2, 2)).is_err());
        assert!(adjoint_apply(&m, &DataCube::zeros(3, s.num_elements)).is_err());
    }
}
