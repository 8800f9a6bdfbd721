//! Self-checks shared by the test suites and the `check` command: gradient
//! agreement with central differences, token-path permutation equivariance,
//! attention against a plain-loop oracle, and the residual identity at init.

use crate::data::Cube;
use crate::model::{
    self, bind_params, cube_tokens, encode_decode, forward, forward_on_tape, init_params, AttentionParams,
    FusformerConfig, FusformerParams, LinearParams, ModelError,
};
use crate::rng::Rng;
use crate::tensor::{Real, Tape, Tensor};

/// One sampled parameter coordinate.
#[derive(Clone, Debug)]
pub struct CoordCheck {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel: f64,
}

#[derive(Clone, Debug)]
pub struct GradReport {
    pub bits: u32,
    pub step: f64,
    pub tolerance: f64,
    pub coords: Vec<CoordCheck>,
}

impl GradReport {
    pub fn max_rel(&self) -> f64 {
        self.coords.iter().map(|c| c.rel).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.coords.iter().all(|c| c.rel <= self.tolerance)
    }

    /// Distinct parameter groups touched (`embed`, `attn`, `ln`, `mlp`, `refine`).
    pub fn groups(&self) -> Vec<&'static str> {
        let mut g: Vec<&'static str> = self.coords.iter().map(|c| param_group(&c.name)).collect();
        g.sort();
        g.dedup();
        g
    }
}

fn param_group(name: &str) -> &'static str {
    if name.starts_with("embed") {
        "embed"
    } else if name.starts_with("refine") {
        "refine"
    } else if name.contains(".ln") {
        "ln"
    } else if name.contains(".mlp.") {
        "mlp"
    } else {
        "attn"
    }
}

/// Relative errors are taken against at least this fraction of the largest
/// sampled gradient, so coordinates whose gradient is orders of magnitude
/// below the rest (or structurally zero, like key biases under softmax) are
/// judged on the scale of the check rather than on their own size.
pub const SCALE_FLOOR: f64 = 1e-3;

pub fn rel_error(a: f64, b: f64, floor: f64) -> f64 {
    let scale = a.abs().max(b.abs()).max(floor);
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn random_cube(rng: &mut Rng, h: usize, w: usize, c: usize) -> Cube {
    Cube::from_fn(h, w, c, |_, _, _| rng.next_f64() as f32)
}

/// Initialized parameters with every tensor pushed off its special init
/// value (zero conv, unit scales, zero biases) so all gradients are generic.
const GAIN: f64 = 3.0;

pub fn generic_params(cfg: &FusformerConfig, seed: u64) -> FusformerParams<Tensor<f64>> {
    let mut p = init_params::<f64>(cfg, seed);
    let mut rng = Rng::stream(seed, 0x6e0d);
    let conv2_bound = (1.0 / (cfg.refine_kernel * cfg.refine_kernel * cfg.features) as f64).sqrt();
    for (name, t) in p.named_mut() {
        let jitter = if name == "refine.conv2.kernel" {
            conv2_bound
        } else if name.ends_with("bias") || name.ends_with("gamma") || name.ends_with("beta") {
            0.1
        } else {
            0.0
        };
        // Sharper attention than at init, so key gradients are not tiny.
        let gain = if name.ends_with("query.weight") || name.ends_with("key.weight") {
            GAIN
        } else {
            1.0
        };
        for v in t.data_mut() {
            *v = *v * gain + rng.uniform(-jitter, jitter);
        }
    }
    p
}

struct GradProblem {
    cfg: FusformerConfig,
    up: Cube,
    msi: Cube,
    target: Tensor<f64>,
    /// sign(output - target) at the evaluation point.
    signs: Vec<f64>,
    params: FusformerParams<Tensor<f64>>,
}

impl GradProblem {
    fn new(seed: u64, size: usize) -> Result<Self, ModelError> {
        let cfg = FusformerConfig::default();
        let mut rng = Rng::stream(seed, 0x9a7c);
        let up = random_cube(&mut rng, size, size, cfg.hsi_bands);
        let msi = random_cube(&mut rng, size, size, cfg.msi_bands);
        let params = generic_params(&cfg, seed);
        // Offset the target well away from the initial output so the L1
        // kinks stay out of reach of the difference steps.
        let out = loss_output::<f64>(&cfg, &params, &up, &msi)?;
        let mut signs = Vec::with_capacity(out.len());
        let target = out.map(|v| {
            let m = 0.5 + 0.5 * rng.next_f64();
            if rng.next_u64() & 1 == 0 {
                signs.push(-1.0);
                v + m
            } else {
                signs.push(1.0);
                v - m
            }
        });
        Ok(GradProblem {
            cfg,
            up,
            msi,
            target,
            signs,
            params,
        })
    }

    /// Residual tokens only: the upsampled base is a constant that cancels
    /// in the difference, and adding it first would round away low bits.
    fn residual_f64(&self, params: &FusformerParams<Tensor<f64>>) -> Result<Vec<f64>, ModelError> {
        let cfg = FusformerConfig {
            rls: false,
            ..self.cfg.clone()
        };
        let mut tape = Tape::<f64>::new();
        let p = bind_params(&mut tape, params, false);
        let out = forward_on_tape(&mut tape, &p, &cfg, &self.up, &self.msi)?;
        Ok(tape.value(out).data().to_vec())
    }

    /// `(loss(plus) - loss(minus)) / (2h)`. Every output stays on one side
    /// of its target within the step, so each `|o - t|` difference is the
    /// signed output difference.
    fn central_difference(&self, plus: &[f64], minus: &[f64], step: f64) -> f64 {
        let total: f64 = plus
            .iter()
            .zip(minus)
            .zip(&self.signs)
            .map(|((p, m), s)| s * (p - m))
            .sum();
        total / self.signs.len() as f64 / (2.0 * step)
    }

    fn analytic<T: Real>(&self) -> Result<Vec<(String, Tensor<T>)>, ModelError> {
        let params = self.params.cast::<T>();
        let mut tape = Tape::<T>::new();
        let p = bind_params(&mut tape, &params, true);
        let out = forward_on_tape(&mut tape, &p, &self.cfg, &self.up, &self.msi)?;
        let t = tape.constant(self.target.cast::<T>());
        let loss = tape.l1_loss(out, t).map_err(stage)?;
        let mut grads = tape.backward(loss).map_err(stage)?;
        Ok(p
            .named()
            .into_iter()
            .map(|(name, &v)| (name, grads.take(v).expect("every parameter requires grad")))
            .collect())
    }
}

fn stage(source: crate::tensor::TensorError) -> ModelError {
    ModelError::Stage {
        stage: "loss",
        source,
    }
}

fn loss_output<T: Real>(
    cfg: &FusformerConfig,
    params: &FusformerParams<Tensor<f64>>,
    up: &Cube,
    msi: &Cube,
) -> Result<Tensor<f64>, ModelError> {
    let out = forward(up, msi, &params.cast::<T>(), cfg)?;
    Ok(cube_tokens::<f64>(&out))
}

/// Full-model gradient check on a `size×size` patch with the default
/// config: analytic gradients at `bits` precision against central
/// differences of the loss evaluated in 64-bit arithmetic, `per_tensor`
/// sampled coordinates from every parameter tensor.
pub fn gradient_check(bits: u32, seed: u64, size: usize, per_tensor: usize) -> Result<GradReport, ModelError> {
    let problem = GradProblem::new(seed, size)?;
    let (step, tolerance) = match bits {
        32 => (1e-3, 1e-3),
        _ => (1e-5, 1e-6),
    };
    let analytic: Vec<(String, Vec<f64>)> = if bits == 32 {
        problem
            .analytic::<f32>()?
            .into_iter()
            .map(|(n, t)| (n, t.data().iter().map(|v| v.as_f64()).collect()))
            .collect()
    } else {
        problem
            .analytic::<f64>()?
            .into_iter()
            .map(|(n, t)| (n, t.into_data()))
            .collect()
    };
    let mut rng = Rng::stream(seed, 0xc00d);
    let mut params = problem.params.clone();
    let mut coords = Vec::new();
    for (ti, (name, grad)) in analytic.iter().enumerate() {
        for _ in 0..per_tensor {
            let index = rng.below(grad.len());
            let orig = params.named()[ti].1.data()[index];
            let mut eval = |value: f64| -> Result<Vec<f64>, ModelError> {
                params.named_mut()[ti].1.data_mut()[index] = value;
                problem.residual_f64(&params)
            };
            let plus = eval(orig + step)?;
            let minus = eval(orig - step)?;
            params.named_mut()[ti].1.data_mut()[index] = orig;
            let numeric = problem.central_difference(&plus, &minus, step);
            let analytic = grad[index];
            coords.push(CoordCheck {
                name: name.clone(),
                index,
                analytic,
                numeric,
                rel: 0.0,
            });
        }
    }
    let floor = SCALE_FLOOR * coords.iter().map(|c| c.numeric.abs()).fold(0.0, f64::max);
    for c in &mut coords {
        c.rel = rel_error(c.analytic, c.numeric, floor);
    }
    Ok(GradReport {
        bits,
        step,
        tolerance,
        coords,
    })
}

/// Run embedding + encoder + decoder on `n` random tokens and on a random
/// row permutation of them; returns the max abs difference between
/// permute-then-run and run-then-permute.
pub fn permutation_check(seed: u64, n: usize) -> Result<f64, ModelError> {
    let cfg = FusformerConfig::default();
    let params = init_params::<f32>(&cfg, seed);
    let mut rng = Rng::stream(seed, 0x7e3a);
    let width = cfg.hsi_bands + cfg.msi_bands;
    let data: Vec<f32> = (0..n * width).map(|_| rng.next_f64() as f32).collect();
    let tokens = Tensor::new(&[n, width], data).expect("positive extents");
    let mut perm: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut perm);
    let permuted = permute_rows(&tokens, &perm);
    let a = permute_rows(&encode_decode(&tokens, &params, &cfg)?, &perm);
    let b = encode_decode(&permuted, &params, &cfg)?;
    Ok(a.max_abs_diff(&b) as f64)
}

/// Row `i` of the result is row `perm[i]` of `t`.
pub fn permute_rows<T: Real>(t: &Tensor<T>, perm: &[usize]) -> Tensor<T> {
    let cols = t.shape()[1];
    let mut data = Vec::with_capacity(t.len());
    for &r in perm {
        data.extend_from_slice(&t.data()[r * cols..(r + 1) * cols]);
    }
    Tensor::new(t.shape(), data).expect("same shape")
}

/// Plain-loop multi-head attention in 64-bit arithmetic; inputs are row-major
/// `n×F` slices and weights `F×F` with biases of length `F`.
pub fn naive_attention(
    xq: &[f64],
    xkv: &[f64],
    n: usize,
    f: usize,
    heads: usize,
    p: &AttentionParams<Tensor<f64>>,
) -> Vec<f64> {
    let project = |x: &[f64], lin: &LinearParams<Tensor<f64>>| -> Vec<f64> {
        let (w, b) = (lin.weight.data(), lin.bias.data());
        let mut out = vec![0.0; n * f];
        for i in 0..n {
            for j in 0..f {
                let mut s = b[j];
                for t in 0..f {
                    s += x[i * f + t] * w[t * f + j];
                }
                out[i * f + j] = s;
            }
        }
        out
    };
    let q = project(xq, &p.query);
    let k = project(xkv, &p.key);
    let v = project(xkv, &p.value);
    let dk = f / heads;
    let mut merged = vec![0.0; n * f];
    for h in 0..heads {
        let off = h * dk;
        for i in 0..n {
            let logits: Vec<f64> = (0..n)
                .map(|j| (0..dk).map(|t| q[i * f + off + t] * k[j * f + off + t]).sum::<f64>() / (dk as f64).sqrt())
                .collect();
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            for t in 0..dk {
                merged[i * f + off + t] = (0..n).map(|j| exps[j] / z * v[j * f + off + t]).sum();
            }
        }
    }
    project(&merged, &p.output)
}

/// Random attention weights and biases for width `f`.
pub fn random_attention(rng: &mut Rng, f: usize) -> AttentionParams<Tensor<f64>> {
    let mut lin = || {
        let bound = (1.0 / f as f64).sqrt();
        LinearParams {
            weight: Tensor::new(&[f, f], (0..f * f).map(|_| rng.uniform(-bound, bound)).collect())
                .expect("positive extents"),
            bias: Tensor::new(&[f], (0..f).map(|_| rng.uniform(-0.1, 0.1)).collect()).expect("positive extents"),
        }
    };
    AttentionParams {
        query: lin(),
        key: lin(),
        value: lin(),
        output: lin(),
    }
}

/// Max abs difference between the tape attention (64-bit) and
/// [`naive_attention`] on random self-attention input of shape `n×f`.
pub fn attention_oracle_check(seed: u64, n: usize, f: usize, heads: usize) -> Result<f64, ModelError> {
    let mut rng = Rng::stream(seed, (n * 1000 + f * 10 + heads) as u64);
    let p = random_attention(&mut rng, f);
    let x: Vec<f64> = (0..n * f).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let xt = Tensor::new(&[n, f], x.clone()).expect("positive extents");
    let got = model::multi_head_attention(&xt, &xt, &p, heads).map_err(|source| ModelError::Stage {
        stage: "attention",
        source,
    })?;
    let want = naive_attention(&x, &x, n, f, heads, &p);
    Ok(got
        .data()
        .iter()
        .zip(&want)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// Forward at init with the residual strategy on `count` random inputs of
/// varying size; returns how many outputs equal their upsampled input
/// bit for bit.
pub fn residual_identity_check(seed: u64, count: usize) -> Result<usize, ModelError> {
    let cfg = FusformerConfig::default();
    let mut rng = Rng::stream(seed, 0x1d1d);
    let mut exact = 0;
    for trial in 0..count {
        let params = init_params::<f32>(&cfg, seed.wrapping_add(trial as u64));
        let h = 1 + rng.below(8);
        let w = 1 + rng.below(8);
        let up = random_cube(&mut rng, h, w, cfg.hsi_bands);
        let msi = random_cube(&mut rng, h, w, cfg.msi_bands);
        let out = forward(&up, &msi, &params, &cfg)?;
        let same = out.data().iter().zip(up.data()).all(|(a, b)| a.to_bits() == b.to_bits());
        exact += same as usize;
    }
    Ok(exact)
}
