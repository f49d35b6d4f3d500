use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Array geometry, pixel grid, pulse and sampling parameters.
///
/// Element `r` sits at lateral position `r · element_pitch`, depth 0. Pixel
/// `(z, col)` sits at lateral `grid_origin + col · grid_pitch_x` and depth
/// `grid_depth_origin + z · grid_pitch_z`. Sample `i` is taken at `i / sampling_rate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImagingSetup {
    pub num_elements: usize,
    pub element_pitch: f64,
    pub grid_nz: usize,
    pub grid_nx: usize,
    pub grid_pitch_z: f64,
    pub grid_pitch_x: f64,
    pub grid_origin: f64,
    pub grid_depth_origin: f64,
    pub sound_speed: f64,
    pub sampling_rate: f64,
    pub pulse_center_freq: f64,
    pub pulse_sigma: f64,
    pub num_samples: usize,
}

impl ImagingSetup {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSetup(msg));
        if self.num_elements == 0 {
            return bad("num_elements must be at least 1".into());
        }
        if self.grid_nz == 0 || self.grid_nx == 0 {
            return bad("grid dimensions must be at least 1".into());
        }
        if self.num_samples == 0 {
            return bad("num_samples must be at least 1".into());
        }
        let positive = [
            ("element_pitch", self.element_pitch),
            ("grid_pitch_z", self.grid_pitch_z),
            ("grid_pitch_x", self.grid_pitch_x),
            ("sound_speed", self.sound_speed),
            ("sampling_rate", self.sampling_rate),
            ("pulse_center_freq", self.pulse_center_freq),
            ("pulse_sigma", self.pulse_sigma),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be finite and strictly positive, got {v}"));
            }
        }
        if !self.grid_origin.is_finite() {
            return bad("grid_origin must be finite".into());
        }
        if !(self.grid_depth_origin.is_finite() && self.grid_depth_origin >= 0.0) {
            return bad("grid_depth_origin must be finite and non-negative".into());
        }
        self.lateral_ratio().map(|_| ())
    }

    /// Integer ratio `q = element_pitch / grid_pitch_x`.
    pub fn lateral_ratio(&self) -> Result<usize> {
        let q = self.element_pitch / self.grid_pitch_x;
        let qr = q.round();
        if qr < 1.0 || (q - qr).abs() > 1e-9 * qr {
            return Err(Error::InvalidSetup(format!(
                "element_pitch / grid_pitch_x = {q} is not a positive integer"
            )));
        }
        Ok(qr as usize)
    }

    pub fn num_pixels(&self) -> usize {
        self.grid_nz * self.grid_nx
    }

    pub fn num_data(&self) -> usize {
        self.num_samples * self.num_elements * self.num_elements
    }

    pub fn element_x(&self, r: usize) -> f64 {
        r as f64 * self.element_pitch
    }

    /// Lateral position of a (possibly virtual, negative) pixel column.
    pub fn pixel_x(&self, col: isize) -> f64 {
        self.grid_origin + col as f64 * self.grid_pitch_x
    }

    pub fn pixel_z(&self, z: usize) -> f64 {
        self.grid_depth_origin + z as f64 * self.grid_pitch_z
    }

    /// Round-trip delay in seconds from element `tx` via a point at
    /// `(px, pz)` back to element `rx`.
    pub fn round_trip_delay(&self, tx: usize, rx: usize, px: f64, pz: f64) -> f64 {
        let d_tx = (self.element_x(tx) - px).hypot(pz);
        let d_rx = (self.element_x(rx) - px).hypot(pz);
        (d_tx + d_rx) / self.sound_speed
    }

    /// Gaussian-modulated cosine pulse.
    pub fn pulse(&self, t: f64) -> f64 {
        let s = self.pulse_sigma;
        (-(t * t) / (2.0 * s * s)).exp()
            * (2.0 * std::f64::consts::PI * self.pulse_center_freq * t).cos()
    }

    pub fn sample_time(&self, i: usize) -> f64 {
        i as f64 / self.sampling_rate
    }

    /// A small four-element configuration used by the shipped desk preset.
    pub fn desk() -> Self {
        ImagingSetup {
            num_elements: 4,
            element_pitch: 0.6e-3,
            grid_nz: 16,
            grid_nx: 16,
            grid_pitch_z: 0.1e-3,
            grid_pitch_x: 0.2e-3,
            grid_origin: -0.6e-3,
            grid_depth_origin: 1.0e-3,
            sound_speed: 1500.0,
            sampling_rate: 16.0e6,
            pulse_center_freq: 3.0e6,
            pulse_sigma: 0.15e-6,
            num_samples: 64,
        }
    }
}

impl Default for ImagingSetup {
    fn default() -> Self {
        ImagingSetup::desk()
    }
}

/// Three elements over a `3 × 3` grid close to the array.
#[cfg(test)]
pub(crate) fn tiny_setup() -> ImagingSetup {
    ImagingSetup {
        num_elements: 3,
        grid_nz: 3,
        grid_nx: 3,
        grid_depth_origin: 0.2e-3,
        num_samples: 24,
        ..ImagingSetup::desk()
    }
}

/// Reflectivity map stored with depth varying fastest: pixel `(z, col)` has
/// flat index `col · nz + z`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectivityMap {
    pub nz: usize,
    pub nx: usize,
    pub values: Vec<f64>,
}

impl ReflectivityMap {
    pub fn zeros(nz: usize, nx: usize) -> Self {
        ReflectivityMap {
            nz,
            nx,
            values: vec![0.0; nz * nx],
        }
    }

    pub fn from_vec(nz: usize, nx: usize, values: Vec<f64>) -> Result<Self> {
        check_len("reflectivity map", nz * nx, values.len())?;
        Ok(ReflectivityMap { nz, nx, values })
    }

    pub fn flat_index(&self, z: usize, col: usize) -> usize {
        col * self.nz + z
    }

    pub fn get(&self, z: usize, col: usize) -> f64 {
        self.values[self.flat_index(z, col)]
    }

    pub fn set(&mut self, z: usize, col: usize, v: f64) {
        let i = self.flat_index(z, col);
        self.values[i] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Full-matrix-capture data cube with axes `[sample, receiver, transmitter]`,
/// flattened in row-major order: `(t, r, s)` ↦ `(t · n_c + r) · n_c + s`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataCube {
    pub nt: usize,
    pub nc: usize,
    pub values: Vec<f64>,
}

impl DataCube {
    pub fn zeros(nt: usize, nc: usize) -> Self {
        DataCube {
            nt,
            nc,
            values: vec![0.0; nt * nc * nc],
        }
    }

    pub fn from_vec(nt: usize, nc: usize, values: Vec<f64>) -> Result<Self> {
        check_len("data cube", nt * nc * nc, values.len())?;
        Ok(DataCube { nt, nc, values })
    }

    #[inline]
    pub fn index(&self, t: usize, r: usize, s: usize) -> usize {
        (t * self.nc + r) * self.nc + s
    }

    pub fn get(&self, t: usize, r: usize, s: usize) -> f64 {
        self.values[self.index(t, r, s)]
    }

    pub fn set(&mut self, t: usize, r: usize, s: usize, v: f64) {
        let i = self.index(t, r, s);
        self.values[i] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn is_reciprocal(&self) -> bool {
        (0..self.nt).all(|t| {
            (0..self.nc).all(|r| (0..self.nc).all(|s| self.get(t, r, s) == self.get(t, s, r)))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_setup_is_valid() {
        let s = ImagingSetup::desk();
        s.validate().unwrap();
        assert_eq!(s.lateral_ratio().unwrap(), 3);
        assert_eq!(s.num_pixels(), 256);
        assert_eq!(s.num_data(), 64 * 16);
    }

    #[test]
    fn rejects_fractional_pitch_ratio() {
        let mut s = ImagingSetup::desk();
        s.grid_pitch_x = 0.25e-3; // 0.6 / 0.25 = 2.4
        assert!(matches!(s.validate(), Err(Error::InvalidSetup(_))));
    }

    #[test]
    fn rejects_non_positive_quantities() {
        let mut s = ImagingSetup::desk();
        s.sound_speed = 0.0;
        assert!(s.validate().is_err());
        let mut s = ImagingSetup::desk();
        s.num_samples = 0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn vectorization_is_depth_fastest() {
        let mut m = ReflectivityMap::zeros(3, 2);
        m.set(2, 1, 5.0);
        assert_eq!(m.values[1 * 3 + 2], 5.0);
    }
}
