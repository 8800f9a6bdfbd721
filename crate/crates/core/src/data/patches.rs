use super::{Cube, DataError, Result};

/// One co-registered fusion example: ground truth `gt` (`H×W×S`), its
/// low-resolution observation `lr` (`H/r × W/r × S`), the multispectral
/// observation `msi` (`H×W×s`) and the upsampled `up` (`H×W×S`).
#[derive(Clone, Debug, PartialEq)]
pub struct FusionSample {
    pub gt: Cube,
    pub lr: Cube,
    pub msi: Cube,
    pub up: Cube,
    pub ratio: usize,
}

impl FusionSample {
    pub fn new(gt: Cube, lr: Cube, msi: Cube, up: Cube, ratio: usize) -> Result<Self> {
        let (h, w, s) = gt.dims();
        let invalid = |msg: String| DataError::Invalid {
            op: "fusion sample",
            msg,
        };
        if ratio == 0 || h % ratio != 0 || w % ratio != 0 {
            return Err(invalid(format!("{h}×{w} not divisible by ratio {ratio}")));
        }
        if lr.dims() != (h / ratio, w / ratio, s) {
            return Err(invalid(format!(
                "lr is {}, expected {}×{}×{s}",
                lr.shape_string(),
                h / ratio,
                w / ratio
            )));
        }
        if (msi.height(), msi.width()) != (h, w) {
            return Err(invalid(format!("msi is {}, gt is {}", msi.shape_string(), gt.shape_string())));
        }
        gt.expect_same_shape(&up, "fusion sample")?;
        Ok(FusionSample {
            gt,
            lr,
            msi,
            up,
            ratio,
        })
    }

    pub fn height(&self) -> usize {
        self.gt.height()
    }

    pub fn width(&self) -> usize {
        self.gt.width()
    }

    /// Aligned sub-sample with HR origin `(top, left)`; both must be
    /// multiples of the ratio.
    pub fn crop(&self, top: usize, left: usize, size: usize) -> Result<FusionSample> {
        let r = self.ratio;
        if top % r != 0 || left % r != 0 || size % r != 0 {
            return Err(DataError::Invalid {
                op: "crop",
                msg: format!("window {size} at ({top},{left}) is not aligned to ratio {r}"),
            });
        }
        Ok(FusionSample {
            gt: self.gt.crop(top, left, size, size)?,
            lr: self.lr.crop(top / r, left / r, size / r, size / r)?,
            msi: self.msi.crop(top, left, size, size)?,
            up: self.up.crop(top, left, size, size)?,
            ratio: r,
        })
    }
}

/// Window origins along one axis: multiples of `stride` while the window
/// fits, plus a final origin shifted inward so the far edge is covered.
pub fn grid_origins(extent: usize, size: usize, stride: usize) -> Vec<usize> {
    assert!(size > 0 && stride > 0 && size <= extent);
    let mut origins: Vec<usize> = (0..=extent - size).step_by(stride).collect();
    if origins.last().copied() != Some(extent - size) {
        origins.push(extent - size);
    }
    origins
}

/// All `P×P` training patches on the stride grid, with their co-located
/// LR, MSI and upsampled patches.
pub fn extract_patches(sample: &FusionSample, patch: usize, stride: usize) -> Result<Vec<FusionSample>> {
    let r = sample.ratio;
    let invalid = |msg: String| DataError::Invalid {
        op: "extract_patches",
        msg,
    };
    if patch == 0 || patch % r != 0 {
        return Err(invalid(format!("patch {patch} is not divisible by ratio {r}")));
    }
    if stride == 0 || stride % r != 0 {
        return Err(invalid(format!("stride {stride} is not a positive multiple of ratio {r}")));
    }
    if patch > sample.height() || patch > sample.width() {
        return Err(invalid(format!(
            "patch {patch} exceeds image {}×{}",
            sample.height(),
            sample.width()
        )));
    }
    let rows = grid_origins(sample.height(), patch, stride);
    let cols = grid_origins(sample.width(), patch, stride);
    let mut out = Vec::with_capacity(rows.len() * cols.len());
    for &top in &rows {
        for &left in &cols {
            out.push(sample.crop(top, left, patch)?);
        }
    }
    Ok(out)
}

fn tile_layout(h: usize, w: usize, tile: usize, overlap: usize) -> (Vec<usize>, Vec<usize>, usize, usize) {
    if tile > h || tile > w {
        (vec![0], vec![0], h, w)
    } else {
        let stride = tile - overlap;
        (grid_origins(h, tile, stride), grid_origins(w, tile, stride), tile, tile)
    }
}

fn check_tile_args(ratio: usize, tile: usize, overlap: usize) -> Result<()> {
    if tile == 0 || ratio == 0 || tile % ratio != 0 {
        return Err(DataError::Invalid {
            op: "tile_infer",
            msg: format!("tile {tile} is not a positive multiple of ratio {ratio}"),
        });
    }
    if overlap >= tile {
        return Err(DataError::Invalid {
            op: "tile_infer",
            msg: format!("overlap {overlap} must be smaller than tile {tile}"),
        });
    }
    Ok(())
}

/// Per-pixel blend weights summed over all tiles. Every entry is 1 when the
/// tiling covers the image.
pub fn tile_weight_map(h: usize, w: usize, ratio: usize, tile: usize, overlap: usize) -> Result<Vec<f64>> {
    check_tile_args(ratio, tile, overlap)?;
    let (rows, cols, th, tw) = tile_layout(h, w, tile, overlap);
    let mut count = vec![0u32; h * w];
    for &top in &rows {
        for &left in &cols {
            for i in top..top + th {
                for j in left..left + tw {
                    count[i * w + j] += 1;
                }
            }
        }
    }
    let mut weights = vec![0.0f64; h * w];
    for &top in &rows {
        for &left in &cols {
            for i in top..top + th {
                for j in left..left + tw {
                    weights[i * w + j] += 1.0 / count[i * w + j] as f64;
                }
            }
        }
    }
    Ok(weights)
}

/// Runs `forward(up_tile, msi_tile)` on overlapping `tile×tile` windows and
/// averages overlapping predictions uniformly. Tiles are visited in
/// row-major order so the blend is deterministic.
pub fn tile_infer<E>(
    up: &Cube,
    msi: &Cube,
    ratio: usize,
    tile: usize,
    overlap: usize,
    mut forward: impl FnMut(&Cube, &Cube) -> std::result::Result<Cube, E>,
) -> std::result::Result<Cube, E>
where
    E: From<DataError>,
{
    check_tile_args(ratio, tile, overlap)?;
    let (h, w) = (up.height(), up.width());
    if (msi.height(), msi.width()) != (h, w) {
        return Err(DataError::ShapeMismatch {
            op: "tile_infer",
            lhs: up.shape_string(),
            rhs: msi.shape_string(),
        }
        .into());
    }
    let (rows, cols, th, tw) = tile_layout(h, w, tile, overlap);
    let mut sums: Vec<f64> = Vec::new();
    let mut counts = vec![0u32; h * w];
    let mut bands = 0;
    for &top in &rows {
        for &left in &cols {
            let out = forward(&up.crop(top, left, th, tw)?, &msi.crop(top, left, th, tw)?)?;
            if (out.height(), out.width()) != (th, tw) {
                return Err(DataError::ShapeMismatch {
                    op: "tile_infer",
                    lhs: out.shape_string(),
                    rhs: format!("{th}×{tw}×*"),
                }
                .into());
            }
            if sums.is_empty() {
                bands = out.bands();
                sums = vec![0.0; h * w * bands];
            } else if out.bands() != bands {
                return Err(DataError::Invalid {
                    op: "tile_infer",
                    msg: "forward returned a varying band count".into(),
                }
                .into());
            }
            for b in 0..bands {
                for i in 0..th {
                    for j in 0..tw {
                        sums[(b * h + top + i) * w + left + j] += out.get(i, j, b) as f64;
                    }
                }
            }
            for i in 0..th {
                for j in 0..tw {
                    counts[(top + i) * w + left + j] += 1;
                }
            }
        }
    }
    let data = sums
        .iter()
        .enumerate()
        .map(|(idx, &s)| (s / counts[idx % (h * w)] as f64) as f32)
        .collect();
    Ok(Cube::new(h, w, bands, data)?)
}
