//! Hyperspectral cubes, the degradation model that simulates fusion inputs
//! from a known ground truth, resampling, patching and tiled inference.

mod degrade;
pub mod io;
mod patches;
mod resample;
mod synth;

use thiserror::Error;

pub use degrade::{decimate, gaussian_blur, simulate, spectral_project, BlurKernel, SpectralResponse};
pub use io::{read_cube, read_srf, write_cube, write_srf};
pub use patches::{extract_patches, grid_origins, tile_infer, tile_weight_map, FusionSample};
pub use resample::{cubic_weight, upsample_bicubic};
pub use synth::{synth_cube, synth_scene, SynthScene};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: &'static [u8], found: Vec<u8> },
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("extents {0}×{1}×{2} overflow or contain a zero")]
    ExtentOverflow(u64, u64, u64),
    #[error("unsupported dtype code {0}")]
    UnsupportedDtype(u32),
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("cube contains a non-finite value at index {0}")]
    NonFinite(usize),
    #[error("{op}: shape mismatch: {lhs} vs {rhs}")]
    ShapeMismatch {
        op: &'static str,
        lhs: String,
        rhs: String,
    },
    #[error("{op}: {msg}")]
    Invalid { op: &'static str, msg: String },
    #[error("spectral response: {0}")]
    Srf(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

/// `H×W×C` raster stored band-sequential, row-major within each band.
#[derive(Clone, Debug, PartialEq)]
pub struct Cube {
    height: usize,
    width: usize,
    bands: usize,
    data: Vec<f32>,
}

impl Cube {
    pub fn new(height: usize, width: usize, bands: usize, data: Vec<f32>) -> Result<Self> {
        let len = checked_len(height, width, bands)?;
        if data.len() != len {
            return Err(DataError::Truncated {
                expected: len,
                found: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFinite(i));
        }
        Ok(Cube {
            height,
            width,
            bands,
            data,
        })
    }

    /// Panics if any extent is zero.
    pub fn zeros(height: usize, width: usize, bands: usize) -> Self {
        let len = checked_len(height, width, bands).expect("cube extents must be positive");
        Cube {
            height,
            width,
            bands,
            data: vec![0.0; len],
        }
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        bands: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut cube = Self::zeros(height, width, bands);
        for b in 0..bands {
            for i in 0..height {
                for j in 0..width {
                    cube.data[(b * height + i) * width + j] = f(i, j, b);
                }
            }
        }
        cube
    }

    /// Pixel-interleaved (`H×W×C`, channels fastest) values.
    pub fn from_hwc(height: usize, width: usize, bands: usize, hwc: &[f32]) -> Result<Self> {
        let len = checked_len(height, width, bands)?;
        if hwc.len() != len {
            return Err(DataError::Truncated {
                expected: len,
                found: hwc.len(),
            });
        }
        let mut data = vec![0.0; len];
        for p in 0..height * width {
            for b in 0..bands {
                data[b * height * width + p] = hwc[p * bands + b];
            }
        }
        Self::new(height, width, bands, data)
    }

    pub fn to_hwc(&self) -> Vec<f32> {
        let hw = self.height * self.width;
        let mut out = vec![0.0; self.data.len()];
        for b in 0..self.bands {
            for p in 0..hw {
                out[p * self.bands + b] = self.data[b * hw + p];
            }
        }
        out
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.bands)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize, b: usize) -> f32 {
        self.data[(b * self.height + i) * self.width + j]
    }

    pub fn set(&mut self, i: usize, j: usize, b: usize, v: f32) {
        self.data[(b * self.height + i) * self.width + j] = v;
    }

    pub fn band(&self, b: usize) -> &[f32] {
        let hw = self.height * self.width;
        &self.data[b * hw..(b + 1) * hw]
    }

    pub fn band_mut(&mut self, b: usize) -> &mut [f32] {
        let hw = self.height * self.width;
        &mut self.data[b * hw..(b + 1) * hw]
    }

    pub fn pixel(&self, i: usize, j: usize) -> Vec<f32> {
        (0..self.bands).map(|b| self.get(i, j, b)).collect()
    }

    /// Spatial window `[top, top+h) × [left, left+w)`, all bands.
    pub fn crop(&self, top: usize, left: usize, h: usize, w: usize) -> Result<Cube> {
        if h == 0 || w == 0 || top + h > self.height || left + w > self.width {
            return Err(DataError::Invalid {
                op: "crop",
                msg: format!(
                    "window {h}×{w} at ({top},{left}) exceeds {}×{}",
                    self.height, self.width
                ),
            });
        }
        Ok(Cube::from_fn(h, w, self.bands, |i, j, b| {
            self.get(top + i, left + j, b)
        }))
    }

    pub fn same_shape(&self, other: &Cube) -> bool {
        self.dims() == other.dims()
    }

    pub(crate) fn shape_string(&self) -> String {
        format!("{}×{}×{}", self.height, self.width, self.bands)
    }

    pub(crate) fn expect_same_shape(&self, other: &Cube, op: &'static str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(DataError::ShapeMismatch {
                op,
                lhs: self.shape_string(),
                rhs: other.shape_string(),
            })
        }
    }
}

fn checked_len(h: usize, w: usize, c: usize) -> Result<usize> {
    if h == 0 || w == 0 || c == 0 {
        return Err(DataError::ExtentOverflow(h as u64, w as u64, c as u64));
    }
    h.checked_mul(w)
        .and_then(|v| v.checked_mul(c))
        .ok_or(DataError::ExtentOverflow(h as u64, w as u64, c as u64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hwc_round_trip() {
        let c = Cube::from_fn(3, 2, 4, |i, j, b| (i * 100 + j * 10 + b) as f32);
        let hwc = c.to_hwc();
        assert_eq!(hwc[0..4], [0.0, 1.0, 2.0, 3.0]);
        assert_eq!(hwc[4], 10.0);
        assert_eq!(Cube::from_hwc(3, 2, 4, &hwc).unwrap(), c);
    }

    #[test]
    fn rejects_non_finite_and_zero_extents() {
        assert!(matches!(
            Cube::new(1, 1, 1, vec![f32::NAN]),
            Err(DataError::NonFinite(0))
        ));
        assert!(matches!(
            Cube::new(0, 1, 1, vec![]),
            Err(DataError::ExtentOverflow(..))
        ));
    }

    #[test]
    fn crop_picks_window() {
        let c = Cube::from_fn(4, 4, 2, |i, j, b| (i * 4 + j + 16 * b) as f32);
        let w = c.crop(1, 2, 2, 2).unwrap();
        assert_eq!(w.get(0, 0, 0), 6.0);
        assert_eq!(w.get(1, 1, 1), 27.0);
        assert!(c.crop(3, 3, 2, 2).is_err());
    }
}
