//! Wald-protocol degradation: spatial blur plus decimation for the
//! LR-HSI, spectral projection for the HR-MSI.

use super::{upsample_bicubic, Cube, DataError, FusionSample, Result};

/// Spectral response: `s` rows over `S` bands, each row summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralResponse {
    rows: Vec<Vec<f64>>,
}

impl SpectralResponse {
    /// Validates non-negativity and normalizes every row to unit sum.
    pub fn new(mut rows: Vec<Vec<f64>>) -> Result<Self> {
        let bands = rows.first().map(Vec::len).unwrap_or(0);
        if rows.is_empty() || bands == 0 {
            return Err(DataError::Srf("no rows".into()));
        }
        for (i, row) in rows.iter_mut().enumerate() {
            if row.len() != bands {
                return Err(DataError::Srf(format!(
                    "row {i} has {} columns, expected {bands}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(DataError::Srf(format!("row {i} has a negative or non-finite entry")));
            }
            let sum: f64 = row.iter().sum();
            if sum <= 0.0 {
                return Err(DataError::Srf(format!("row {i} sums to zero")));
            }
            row.iter_mut().for_each(|v| *v /= sum);
        }
        Ok(SpectralResponse { rows })
    }

    /// Three Gaussian band-passes centred at 25%, 50% and 75% of the band
    /// axis with standard deviation `S/6` bands.
    pub fn default3(hsi_bands: usize) -> Self {
        let s = hsi_bands as f64;
        let width = s / 6.0;
        let rows = [0.25, 0.5, 0.75]
            .iter()
            .map(|f| {
                let centre = s * f;
                (0..hsi_bands)
                    .map(|b| (-((b as f64 - centre).powi(2)) / (2.0 * width * width)).exp())
                    .collect()
            })
            .collect();
        Self::new(rows).expect("gaussian rows are positive")
    }

    pub fn identity(bands: usize) -> Self {
        let rows = (0..bands)
            .map(|i| (0..bands).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        SpectralResponse { rows }
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn msi_bands(&self) -> usize {
        self.rows.len()
    }

    pub fn hsi_bands(&self) -> usize {
        self.rows[0].len()
    }
}

/// Normalized, separable 1-D Gaussian with `2·ceil(3σ)+1` taps.
#[derive(Clone, Debug, PartialEq)]
pub struct BlurKernel {
    pub sigma: f64,
    weights: Vec<f64>,
}

impl BlurKernel {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(DataError::Invalid {
                op: "gaussian_blur",
                msg: format!("sigma must be finite and non-negative, got {sigma}"),
            });
        }
        if sigma == 0.0 {
            return Ok(BlurKernel {
                sigma,
                weights: vec![1.0],
            });
        }
        let radius = (3.0 * sigma).ceil() as isize;
        let raw: Vec<f64> = (-radius..=radius)
            .map(|x| (-((x * x) as f64) / (2.0 * sigma * sigma)).exp())
            .collect();
        let sum: f64 = raw.iter().sum();
        Ok(BlurKernel {
            sigma,
            weights: raw.into_iter().map(|w| w / sum).collect(),
        })
    }

    pub fn taps(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Mirror an out-of-range index back into `0..n` without repeating the
/// edge sample (`d c b | a b c d`).
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m >= n as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

/// Per-band separable Gaussian blur with reflect padding.
pub fn gaussian_blur(cube: &Cube, sigma: f64) -> Result<Cube> {
    let kernel = BlurKernel::new(sigma)?;
    if kernel.taps() == 1 {
        return Ok(cube.clone());
    }
    let (h, w, c) = cube.dims();
    let weights = kernel.weights();
    let radius = (weights.len() / 2) as isize;
    let mut out = Cube::zeros(h, w, c);
    let mut tmp = vec![0.0f64; h * w];
    for b in 0..c {
        let src = cube.band(b);
        for i in 0..h {
            for j in 0..w {
                let mut acc = 0.0;
                for (t, &wt) in weights.iter().enumerate() {
                    let jj = reflect(j as isize + t as isize - radius, w);
                    acc += wt * src[i * w + jj] as f64;
                }
                tmp[i * w + j] = acc;
            }
        }
        let dst = out.band_mut(b);
        for i in 0..h {
            for j in 0..w {
                let mut acc = 0.0;
                for (t, &wt) in weights.iter().enumerate() {
                    let ii = reflect(i as isize + t as isize - radius, h);
                    acc += wt * tmp[ii * w + j];
                }
                dst[i * w + j] = acc as f32;
            }
        }
    }
    Ok(out)
}

/// Keep every `r`-th row and column starting at offset 0.
pub fn decimate(cube: &Cube, r: usize) -> Result<Cube> {
    let (h, w, c) = cube.dims();
    if r == 0 || h % r != 0 || w % r != 0 {
        return Err(DataError::Invalid {
            op: "decimate",
            msg: format!("extents {h}×{w} are not divisible by ratio {r}"),
        });
    }
    Ok(Cube::from_fn(h / r, w / r, c, |i, j, b| cube.get(i * r, j * r, b)))
}

/// Per-pixel `R · spectrum`.
pub fn spectral_project(cube: &Cube, srf: &SpectralResponse) -> Result<Cube> {
    let (h, w, c) = cube.dims();
    if srf.hsi_bands() != c {
        return Err(DataError::ShapeMismatch {
            op: "spectral_project",
            lhs: cube.shape_string(),
            rhs: format!("{}×{} response", srf.msi_bands(), srf.hsi_bands()),
        });
    }
    let hw = h * w;
    let mut out = Cube::zeros(h, w, srf.msi_bands());
    for (o, row) in srf.rows().iter().enumerate() {
        let mut acc = vec![0.0f64; hw];
        for (b, &weight) in row.iter().enumerate() {
            for (a, &v) in acc.iter_mut().zip(cube.band(b)) {
                *a += weight * v as f64;
            }
        }
        for (d, a) in out.band_mut(o).iter_mut().zip(acc) {
            *d = a as f32;
        }
    }
    Ok(out)
}

/// Builds the full fusion sample from a ground truth:
/// `lr = decimate(blur(gt, σ), r)`, `msi = R·gt`, `up = bicubic(lr, r)`.
pub fn simulate(gt: &Cube, ratio: usize, sigma: f64, srf: &SpectralResponse) -> Result<FusionSample> {
    let lr = decimate(&gaussian_blur(gt, sigma)?, ratio)?;
    let msi = spectral_project(gt, srf)?;
    let up = upsample_bicubic(&lr, ratio)?;
    FusionSample::new(gt.clone(), lr, msi, up, ratio)
}
