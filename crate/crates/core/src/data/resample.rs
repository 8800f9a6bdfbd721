use super::{Cube, DataError, Result};

const A: f64 = -0.5;

/// Catmull-Rom cubic convolution kernel (`a = -0.5`).
pub fn cubic_weight(x: f64) -> f64 {
    let x = x.abs();
    if x <= 1.0 {
        ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((A * x - 5.0 * A) * x + 8.0 * A) * x - 4.0 * A
    } else {
        0.0
    }
}

/// Four clamped source taps and weights for every destination index.
fn taps(src_len: usize, r: usize) -> Vec<([usize; 4], [f64; 4])> {
    (0..src_len * r)
        .map(|d| {
            let s = (d as f64 + 0.5) / r as f64 - 0.5;
            let base = s.floor();
            let t = s - base;
            let mut idx = [0usize; 4];
            let mut w = [0.0; 4];
            for k in 0..4 {
                let offset = k as f64 - 1.0;
                let src = (base as isize + k as isize - 1).clamp(0, src_len as isize - 1);
                idx[k] = src as usize;
                w[k] = cubic_weight(t - offset);
            }
            (idx, w)
        })
        .collect()
}

/// Separable bicubic upsampling by an integer factor, edge-clamped, with
/// half-pixel-centred coordinates: `src = (dst + 0.5)/r - 0.5`.
pub fn upsample_bicubic(cube: &Cube, r: usize) -> Result<Cube> {
    if r == 0 {
        return Err(DataError::Invalid {
            op: "upsample_bicubic",
            msg: "ratio must be at least 1".into(),
        });
    }
    if r == 1 {
        return Ok(cube.clone());
    }
    let (h, w, c) = cube.dims();
    let (oh, ow) = (h * r, w * r);
    let col_taps = taps(w, r);
    let row_taps = taps(h, r);
    let mut out = Cube::zeros(oh, ow, c);
    let mut horiz = vec![0.0f64; h * ow];
    for b in 0..c {
        let src = cube.band(b);
        for i in 0..h {
            for (j, (idx, wt)) in col_taps.iter().enumerate() {
                let mut acc = 0.0;
                for k in 0..4 {
                    acc += wt[k] * src[i * w + idx[k]] as f64;
                }
                horiz[i * ow + j] = acc;
            }
        }
        let dst = out.band_mut(b);
        for (i, (idx, wt)) in row_taps.iter().enumerate() {
            for j in 0..ow {
                let mut acc = 0.0;
                for k in 0..4 {
                    acc += wt[k] * horiz[idx[k] * ow + j];
                }
                dst[i * ow + j] = acc as f32;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_is_interpolating() {
        assert_eq!(cubic_weight(0.0), 1.0);
        assert_eq!(cubic_weight(1.0), 0.0);
        assert_eq!(cubic_weight(2.0), 0.0);
        for t in [0.1, 0.25, 0.5, 0.9] {
            let s: f64 = (-1..=2).map(|k| cubic_weight(t - k as f64)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ratio_one_is_identity() {
        let c = Cube::from_fn(3, 5, 2, |i, j, b| (i * 7 + j * 3 + b) as f32 * 0.1);
        assert_eq!(upsample_bicubic(&c, 1).unwrap(), c);
    }

    #[test]
    fn constant_stays_constant() {
        let c = Cube::from_fn(4, 3, 2, |_, _, b| 0.3 + b as f32 * 0.2);
        let up = upsample_bicubic(&c, 4).unwrap();
        assert_eq!(up.dims(), (16, 12, 2));
        for b in 0..2 {
            for &v in up.band(b) {
                assert!((v - (0.3 + b as f32 * 0.2)).abs() < 1e-6);
            }
        }
    }
}
