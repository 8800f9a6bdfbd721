//! Full-reference quality indices for a fused cube against ground truth.
//! All accumulation is in f64; PSNR and SSIM assume a peak value of 1.
//!
//! PSNR is the mean of per-band PSNRs (not the PSNR of the flattened cube).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Cube;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("{metric}: shape mismatch: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        metric: &'static str,
        lhs: (usize, usize, usize),
        rhs: (usize, usize, usize),
    },
    #[error("ERGAS is undefined: every reference band has zero mean")]
    UndefinedErgas,
    #[error("fusion ratio must be positive, got {0}")]
    InvalidRatio(f64),
    #[error("image {height}x{width} is smaller than the {window}x{window} SSIM window")]
    TooSmall { height: usize, width: usize, window: usize },
}

pub type Result<T> = std::result::Result<T, MetricError>;

fn check_shapes(metric: &'static str, x: &Cube, gt: &Cube) -> Result<()> {
    if x.dims() != gt.dims() {
        return Err(MetricError::ShapeMismatch {
            metric,
            lhs: x.dims(),
            rhs: gt.dims(),
        });
    }
    Ok(())
}

fn band_mse(x: &Cube, gt: &Cube, band: usize) -> f64 {
    let (a, b) = (x.band(band), gt.band(band));
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(&p, &q)| {
            let d = p as f64 - q as f64;
            d * d
        })
        .sum();
    sum / a.len() as f64
}

/// `10·log10(1/MSE)` per band; an exact band gives `+inf`.
pub fn per_band_psnr(x: &Cube, gt: &Cube) -> Result<Vec<f64>> {
    check_shapes("psnr", x, gt)?;
    Ok((0..gt.bands())
        .map(|b| {
            let mse = band_mse(x, gt, b);
            if mse == 0.0 {
                f64::INFINITY
            } else {
                10.0 * (1.0 / mse).log10()
            }
        })
        .collect())
}

/// Band-averaged PSNR in dB. Infinite only when every band is exact.
pub fn psnr(x: &Cube, gt: &Cube) -> Result<f64> {
    Ok(mean_psnr(&per_band_psnr(x, gt)?))
}

// An infinite band would swamp the mean, so exact bands are left out of
// it unless all of them are exact.
fn mean_psnr(bands: &[f64]) -> f64 {
    let finite: Vec<f64> = bands.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        f64::INFINITY
    } else {
        finite.iter().sum::<f64>() / finite.len() as f64
    }
}

/// Angle between two spectra in radians, via `2·atan2(|â - ĝ|, |â + ĝ|)`,
/// which equals the arccos form but stays accurate near 0 and π.
/// Zero-norm spectra give 0.
pub fn spectral_angle(a: &[f64], g: &[f64]) -> f64 {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ng = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || ng == 0.0 {
        return 0.0;
    }
    let (mut diff, mut sum) = (0.0, 0.0);
    for (x, y) in a.iter().zip(g) {
        let (u, v) = (x / na, y / ng);
        diff += (u - v) * (u - v);
        sum += (u + v) * (u + v);
    }
    2.0 * diff.sqrt().atan2(sum.sqrt())
}

/// Mean spectral angle in degrees over all pixels.
pub fn sam(x: &Cube, gt: &Cube) -> Result<f64> {
    check_shapes("sam", x, gt)?;
    let (h, w, c) = gt.dims();
    let (mut a, mut g) = (vec![0.0; c], vec![0.0; c]);
    let mut total = 0.0;
    for i in 0..h {
        for j in 0..w {
            for b in 0..c {
                a[b] = x.get(i, j, b) as f64;
                g[b] = gt.get(i, j, b) as f64;
            }
            total += spectral_angle(&a, &g);
        }
    }
    Ok((total / (h * w) as f64).to_degrees())
}

/// ERGAS together with the indices of bands skipped for a zero reference
/// mean.
#[derive(Clone, Debug, PartialEq)]
pub struct Ergas {
    pub value: f64,
    pub excluded: Vec<usize>,
}

pub fn ergas_detail(x: &Cube, gt: &Cube, ratio: f64) -> Result<Ergas> {
    check_shapes("ergas", x, gt)?;
    if !(ratio > 0.0) || !ratio.is_finite() {
        return Err(MetricError::InvalidRatio(ratio));
    }
    let mut excluded = Vec::new();
    let mut acc = 0.0;
    let mut used = 0usize;
    for b in 0..gt.bands() {
        let band = gt.band(b);
        let mu = band.iter().map(|&v| v as f64).sum::<f64>() / band.len() as f64;
        if mu == 0.0 {
            excluded.push(b);
            continue;
        }
        acc += band_mse(x, gt, b) / (mu * mu);
        used += 1;
    }
    if used == 0 {
        return Err(MetricError::UndefinedErgas);
    }
    Ok(Ergas {
        value: (100.0 / ratio) * (acc / used as f64).sqrt(),
        excluded,
    })
}

pub fn ergas(x: &Cube, gt: &Cube, ratio: f64) -> Result<f64> {
    ergas_detail(x, gt, ratio).map(|e| e.value)
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

/// Normalized 2-D Gaussian window, row-major `SSIM_WINDOW²`.
pub fn ssim_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let d = i as f64 - r;
            (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let total: f64 = g.iter().sum();
    let mut w = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    for a in &g {
        for b in &g {
            w.push(a * b / (total * total));
        }
    }
    w
}

/// Mean SSIM of one band pair over every fully-contained window position.
fn band_ssim(x: &[f32], y: &[f32], h: usize, w: usize, win: &[f64]) -> f64 {
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut total = 0.0;
    for i in 0..oh {
        for j in 0..ow {
            let (mut mx, mut my, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for di in 0..SSIM_WINDOW {
                let row = (i + di) * w + j;
                for dj in 0..SSIM_WINDOW {
                    let k = win[di * SSIM_WINDOW + dj];
                    let (a, b) = (x[row + dj] as f64, y[row + dj] as f64);
                    mx += k * a;
                    my += k * b;
                    xx += k * a * a;
                    yy += k * b * b;
                    xy += k * a * b;
                }
            }
            let vx = xx - mx * mx;
            let vy = yy - my * my;
            let cxy = xy - mx * my;
            total += ((2.0 * mx * my + C1) * (2.0 * cxy + C2)) / ((mx * mx + my * my + C1) * (vx + vy + C2));
        }
    }
    total / (oh * ow) as f64
}

/// Band-averaged SSIM, 11×11 Gaussian window (σ = 1.5), no padding.
pub fn ssim(x: &Cube, gt: &Cube) -> Result<f64> {
    check_shapes("ssim", x, gt)?;
    let (h, w, c) = gt.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(MetricError::TooSmall {
            height: h,
            width: w,
            window: SSIM_WINDOW,
        });
    }
    let win = ssim_window();
    let total: f64 = (0..c).map(|b| band_ssim(x.band(b), gt.band(b), h, w, &win)).sum();
    Ok(total / c as f64)
}

/// The four indices for one result. Infinite values serialize as `"inf"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    #[serde(with = "inf_f64")]
    pub psnr: f64,
    pub sam: f64,
    pub ergas: f64,
    pub ssim: f64,
    #[serde(with = "inf_vec")]
    pub per_band_psnr: Vec<f64>,
}

impl QualityReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report fields serialize")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

pub fn report(x: &Cube, gt: &Cube, ratio: f64) -> Result<QualityReport> {
    let per_band = per_band_psnr(x, gt)?;
    let e = ergas_detail(x, gt, ratio)?;
    if !e.excluded.is_empty() {
        log::warn!("ERGAS skipped zero-mean reference bands {:?}", e.excluded);
    }
    Ok(QualityReport {
        psnr: mean_psnr(&per_band),
        sam: sam(x, gt)?,
        ergas: e.value,
        ssim: ssim(x, gt)?,
        per_band_psnr: per_band,
    })
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum MaybeInf {
    Num(f64),
    Text(String),
}

impl MaybeInf {
    fn wrap(v: f64) -> Self {
        if v == f64::INFINITY {
            MaybeInf::Text("inf".into())
        } else if v == f64::NEG_INFINITY {
            MaybeInf::Text("-inf".into())
        } else {
            MaybeInf::Num(v)
        }
    }

    fn unwrap<E: serde::de::Error>(self) -> std::result::Result<f64, E> {
        match self {
            MaybeInf::Num(v) => Ok(v),
            MaybeInf::Text(s) if s == "inf" => Ok(f64::INFINITY),
            MaybeInf::Text(s) if s == "-inf" => Ok(f64::NEG_INFINITY),
            MaybeInf::Text(s) => Err(E::custom(format!("expected a number or \"inf\", got {s:?}"))),
        }
    }
}

/// Serde adapter writing infinite values as `"inf"` / `"-inf"`.
pub mod inf_f64 {
    use super::MaybeInf;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        MaybeInf::wrap(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        MaybeInf::deserialize(d)?.unwrap()
    }
}

mod inf_vec {
    use super::MaybeInf;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|&x| MaybeInf::wrap(x)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<MaybeInf>::deserialize(d)?.into_iter().map(|m| m.unwrap()).collect()
    }
}
