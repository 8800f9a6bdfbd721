//! Synthetic hyperspectral scenes: four endmember spectra built from
//! Gaussian bumps, mixed by smooth low-frequency abundance maps.

use std::f64::consts::TAU;

use super::Cube;
use crate::rng::Rng;

pub const ENDMEMBERS: usize = 4;
const SYNTH_STREAM: u64 = 0x5157_4e54;

/// The ingredients of a synthetic cube, kept so tests can recompute the
/// mixture independently.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthScene {
    pub height: usize,
    pub width: usize,
    /// `ENDMEMBERS × S` spectra.
    pub endmembers: Vec<Vec<f64>>,
    /// `ENDMEMBERS × (H·W)` abundance maps; they sum to one at every pixel.
    pub abundances: Vec<Vec<f64>>,
}

pub fn synth_scene(seed: u64, height: usize, width: usize, bands: usize) -> SynthScene {
    let mut rng = Rng::stream(seed, SYNTH_STREAM);
    let denom = (bands.max(2) - 1) as f64;

    let endmembers = (0..ENDMEMBERS)
        .map(|_| {
            let baseline = rng.uniform(0.05, 0.2);
            let bumps: Vec<(f64, f64, f64)> = (0..2)
                .map(|_| {
                    (
                        rng.uniform(0.3, 1.0),
                        rng.uniform(0.0, 1.0),
                        rng.uniform(0.05, 0.25),
                    )
                })
                .collect();
            (0..bands)
                .map(|b| {
                    let x = b as f64 / denom;
                    baseline
                        + bumps
                            .iter()
                            .map(|&(amp, c, w)| amp * (-(x - c).powi(2) / (2.0 * w * w)).exp())
                            .sum::<f64>()
                })
                .collect()
        })
        .collect();

    let waves: Vec<Vec<(f64, f64, f64, f64)>> = (0..ENDMEMBERS)
        .map(|_| {
            (0..3)
                .map(|_| {
                    (
                        rng.uniform(0.5, 1.5),
                        rng.uniform(-5.0, 5.0),
                        rng.uniform(-5.0, 5.0),
                        rng.uniform(0.0, TAU),
                    )
                })
                .collect()
        })
        .collect();

    let mut abundances = vec![vec![0.0; height * width]; ENDMEMBERS];
    let mut raw = [0.0f64; ENDMEMBERS];
    for i in 0..height {
        for j in 0..width {
            let (y, x) = (i as f64 / height as f64, j as f64 / width as f64);
            for (k, ws) in waves.iter().enumerate() {
                raw[k] = 2.0
                    * ws.iter()
                        .map(|&(a, fx, fy, phase)| a * (TAU * (fx * x + fy * y) + phase).sin())
                        .sum::<f64>();
            }
            let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = raw.iter().map(|r| (r - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            for k in 0..ENDMEMBERS {
                abundances[k][i * width + j] = exps[k] / total;
            }
        }
    }

    SynthScene {
        height,
        width,
        endmembers,
        abundances,
    }
}

impl SynthScene {
    /// Mixture before rescaling, `H·W × S` pixel-major.
    pub fn mixture(&self) -> Vec<f64> {
        let bands = self.endmembers[0].len();
        let hw = self.height * self.width;
        let mut out = vec![0.0; hw * bands];
        for p in 0..hw {
            for b in 0..bands {
                out[p * bands + b] = (0..ENDMEMBERS)
                    .map(|k| self.abundances[k][p] * self.endmembers[k][b])
                    .sum();
            }
        }
        out
    }

    /// Mixture min-max rescaled into `[0, 1]`.
    pub fn render(&self) -> Cube {
        let bands = self.endmembers[0].len();
        let mix = self.mixture();
        let lo = mix.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = mix.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        let hwc: Vec<f32> = mix
            .iter()
            .map(|&v| if span > 0.0 { ((v - lo) / span) as f32 } else { 0.5 })
            .collect();
        Cube::from_hwc(self.height, self.width, bands, &hwc).expect("finite mixture")
    }
}

/// Deterministic synthetic cube for `seed`.
pub fn synth_cube(seed: u64, height: usize, width: usize, bands: usize) -> Cube {
    synth_scene(seed, height, width, bands).render()
}
