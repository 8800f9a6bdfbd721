//! The fusion network: pixel tokens → linear embedding → transformer
//! encoder/decoder → reshape-and-refine head → residual added to the
//! upsampled hyperspectral input.

pub mod layers;
mod params;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Cube, DataError};
use crate::tensor::{Real, Tape, Tensor, TensorError, Var};

pub use params::{
    init_params, AttentionParams, ConvParams, DecoderBlockParams, EncoderBlockParams, FusformerParams,
    LayerNormParams, LinearParams, MlpParams, RefineParams,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: TensorError,
    },
    #[error(transparent)]
    Data(#[from] DataError),
}

trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T, ModelError>;
}

impl<T> StageExt<T> for Result<T, TensorError> {
    fn stage(self, stage: &'static str) -> Result<T, ModelError> {
        self.map_err(|source| ModelError::Stage { stage, source })
    }
}

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusformerConfig {
    /// S
    pub hsi_bands: usize,
    /// s
    pub msi_bands: usize,
    /// Token width F.
    pub features: usize,
    /// Attention heads L; `d_k = features / heads`.
    pub heads: usize,
    pub encoder_depth: usize,
    pub decoder_depth: usize,
    pub mlp_hidden: usize,
    pub refine_kernel: usize,
    /// Second decoder attention reads the encoder output.
    pub decoder_cross: bool,
    /// Output is `up + residual` (else the residual alone).
    pub rls: bool,
}

impl Default for FusformerConfig {
    fn default() -> Self {
        FusformerConfig {
            hsi_bands: 31,
            msi_bands: 3,
            features: 48,
            heads: 6,
            encoder_depth: 1,
            decoder_depth: 1,
            mlp_hidden: 192,
            refine_kernel: 3,
            decoder_cross: true,
            rls: true,
        }
    }
}

impl FusformerConfig {
    pub fn head_dim(&self) -> usize {
        self.features / self.heads
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |m: String| Err(ModelError::Config(m));
        if self.hsi_bands == 0 || self.msi_bands == 0 || self.features == 0 || self.mlp_hidden == 0 {
            return fail("band counts and widths must be positive".into());
        }
        if self.heads == 0 || self.features % self.heads != 0 {
            return fail(format!(
                "features {} not divisible by heads {}",
                self.features, self.heads
            ));
        }
        if self.encoder_depth == 0 || self.decoder_depth == 0 {
            return fail("encoder and decoder depth must be at least 1".into());
        }
        if self.refine_kernel % 2 == 0 {
            return fail(format!("refine kernel {} must be odd", self.refine_kernel));
        }
        Ok(())
    }
}

fn linear_count(din: usize, dout: usize) -> usize {
    din * dout + dout
}

fn attention_count(f: usize) -> usize {
    4 * linear_count(f, f)
}

fn mlp_count(f: usize, hidden: usize) -> usize {
    linear_count(f, hidden) + linear_count(hidden, f)
}

pub fn embed_param_count(cfg: &FusformerConfig) -> usize {
    linear_count(cfg.hsi_bands + cfg.msi_bands, cfg.features)
}

pub fn encoder_block_param_count(cfg: &FusformerConfig) -> usize {
    let f = cfg.features;
    2 * (2 * f) + attention_count(f) + mlp_count(f, cfg.mlp_hidden)
}

pub fn decoder_block_param_count(cfg: &FusformerConfig) -> usize {
    let f = cfg.features;
    3 * (2 * f) + 2 * attention_count(f) + mlp_count(f, cfg.mlp_hidden)
}

pub fn refine_param_count(cfg: &FusformerConfig) -> usize {
    let (k, f, s) = (cfg.refine_kernel, cfg.features, cfg.hsi_bands);
    (k * k * f * f + f) + (k * k * f * s + s)
}

/// Closed-form number of trainable scalars.
pub fn param_count(cfg: &FusformerConfig) -> usize {
    embed_param_count(cfg)
        + cfg.encoder_depth * encoder_block_param_count(cfg)
        + cfg.decoder_depth * decoder_block_param_count(cfg)
        + refine_param_count(cfg)
}

/// Record every parameter as a tape leaf.
pub fn bind_params<T: Real>(
    tape: &mut Tape<T>,
    params: &FusformerParams<Tensor<T>>,
    requires_grad: bool,
) -> FusformerParams<Var> {
    params.map(|t| tape.leaf(t.clone(), requires_grad))
}

/// Upsampled and target cubes as `HW×S` token matrices.
pub fn cube_tokens<T: Real>(cube: &Cube) -> Tensor<T> {
    let (h, w, c) = cube.dims();
    let data = cube.to_hwc().into_iter().map(|v| T::lit(v as f64)).collect();
    Tensor::new(&[h * w, c], data).expect("cube extents are positive")
}

/// Token path only: embedding, encoder stack, decoder stack.
pub fn token_features<T: Real>(
    tape: &mut Tape<T>,
    tokens: Var,
    p: &FusformerParams<Var>,
    cfg: &FusformerConfig,
) -> Result<Var, ModelError> {
    let x = layers::linear(tape, tokens, &p.embed).stage("embed")?;
    let mut enc = x;
    for block in &p.encoder {
        enc = layers::encoder_block(tape, enc, block, cfg.heads).stage("encoder")?;
    }
    let mut dec = enc;
    for block in &p.decoder {
        dec = layers::decoder_block(tape, dec, enc, block, cfg.heads, cfg.decoder_cross)
            .stage("decoder")?;
    }
    Ok(dec)
}

/// Full network on a tape; returns the `HW×S` output tokens.
pub fn forward_on_tape<T: Real>(
    tape: &mut Tape<T>,
    p: &FusformerParams<Var>,
    cfg: &FusformerConfig,
    up: &Cube,
    msi: &Cube,
) -> Result<Var, ModelError> {
    let (h, w, s) = up.dims();
    if s != cfg.hsi_bands || msi.bands() != cfg.msi_bands {
        return Err(ModelError::Config(format!(
            "inputs have {s}+{} bands, config expects {}+{}",
            msi.bands(),
            cfg.hsi_bands,
            cfg.msi_bands
        )));
    }
    let tokens = layers::pixel_tokenize::<T>(up, msi).stage("tokenize")?;
    let tokens = tape.constant(tokens);
    let feats = token_features(tape, tokens, p, cfg)?;
    let residual = layers::reshape_refine(tape, feats, h, w, &p.refine).stage("refine")?;
    if cfg.rls {
        let base = tape.constant(cube_tokens(up));
        tape.add(base, residual).stage("residual")
    } else {
        Ok(residual)
    }
}

/// Inference: `O = up + E` (or `E` without the residual strategy) as an
/// `H×W×S` cube.
pub fn forward<T: Real>(
    up: &Cube,
    msi: &Cube,
    params: &FusformerParams<Tensor<T>>,
    cfg: &FusformerConfig,
) -> Result<Cube, ModelError> {
    let mut tape = Tape::new();
    let p = bind_params(&mut tape, params, false);
    let out = forward_on_tape(&mut tape, &p, cfg, up, msi)?;
    layers::fold_tokens(tape.value(out), up.height(), up.width()).stage("output")
}

/// Eager multi-head attention on plain tensors.
pub fn multi_head_attention<T: Real>(
    xq: &Tensor<T>,
    xkv: &Tensor<T>,
    p: &AttentionParams<Tensor<T>>,
    heads: usize,
) -> Result<Tensor<T>, TensorError> {
    let mut tape = Tape::new();
    let vp = AttentionParams {
        query: bind_linear(&mut tape, &p.query),
        key: bind_linear(&mut tape, &p.key),
        value: bind_linear(&mut tape, &p.value),
        output: bind_linear(&mut tape, &p.output),
    };
    let q = tape.constant(xq.clone());
    let kv = tape.constant(xkv.clone());
    let out = layers::multi_head_attention(&mut tape, q, kv, &vp, heads)?;
    Ok(tape.value(out).clone())
}

fn bind_linear<T: Real>(tape: &mut Tape<T>, p: &LinearParams<Tensor<T>>) -> LinearParams<Var> {
    LinearParams {
        weight: tape.constant(p.weight.clone()),
        bias: tape.constant(p.bias.clone()),
    }
}

/// Eager embedding + encoder + decoder on a token matrix.
pub fn encode_decode<T: Real>(
    tokens: &Tensor<T>,
    params: &FusformerParams<Tensor<T>>,
    cfg: &FusformerConfig,
) -> Result<Tensor<T>, ModelError> {
    let mut tape = Tape::new();
    let p = bind_params(&mut tape, params, false);
    let x = tape.constant(tokens.clone());
    let out = token_features(&mut tape, x, &p, cfg)?;
    Ok(tape.value(out).clone())
}
