//! Network stages, each recorded on a [`Tape`].

use super::params::{
    AttentionParams, DecoderBlockParams, EncoderBlockParams, LayerNormParams, LinearParams, MlpParams,
    RefineParams,
};
use crate::data::Cube;
use crate::tensor::{Real, Tape, Tensor, TensorError, Var};

pub const LN_EPS: f64 = 1e-5;

/// Unfold `up` and `msi` into one token per pixel: row `i·W + j` is
/// `up[i,j,..]` followed by `msi[i,j,..]`.
pub fn pixel_tokenize<T: Real>(up: &Cube, msi: &Cube) -> Result<Tensor<T>, TensorError> {
    let (h, w, s) = up.dims();
    if (msi.height(), msi.width()) != (h, w) {
        return Err(TensorError::ShapeMismatch {
            op: "pixel_tokenize",
            lhs: vec![h, w, s],
            rhs: vec![msi.height(), msi.width(), msi.bands()],
        });
    }
    let m = msi.bands();
    let width = s + m;
    let mut data = vec![T::zero(); h * w * width];
    for i in 0..h {
        for j in 0..w {
            let row = &mut data[(i * w + j) * width..][..width];
            for b in 0..s {
                row[b] = T::lit(up.get(i, j, b) as f64);
            }
            for b in 0..m {
                row[s + b] = T::lit(msi.get(i, j, b) as f64);
            }
        }
    }
    Tensor::new(&[h * w, width], data)
}

/// Tokens in pixel order back to a cube (inverse of the unfold for one
/// band group).
pub fn fold_tokens<T: Real>(tokens: &Tensor<T>, h: usize, w: usize) -> Result<Cube, TensorError> {
    let (n, c) = tokens.dims2("fold_tokens")?;
    if n != h * w {
        return Err(TensorError::ShapeMismatch {
            op: "fold_tokens",
            lhs: tokens.shape().to_vec(),
            rhs: vec![h, w],
        });
    }
    let hwc: Vec<f32> = tokens.data().iter().map(|v| v.as_f64() as f32).collect();
    Cube::from_hwc(h, w, c, &hwc).map_err(|e| TensorError::Invalid {
        op: "fold_tokens",
        msg: e.to_string(),
    })
}

pub fn linear<T: Real>(tape: &mut Tape<T>, x: Var, p: &LinearParams<Var>) -> Result<Var, TensorError> {
    tape.linear(x, p.weight, p.bias)
}

pub fn layer_norm<T: Real>(
    tape: &mut Tape<T>,
    x: Var,
    p: &LayerNormParams<Var>,
) -> Result<Var, TensorError> {
    tape.layer_norm(x, p.gamma, p.beta, T::lit(LN_EPS))
}

/// Scaled dot-product attention over `heads` column groups of width
/// `F / heads`, merged by concatenation and the output projection.
pub fn multi_head_attention<T: Real>(
    tape: &mut Tape<T>,
    xq: Var,
    xkv: Var,
    p: &AttentionParams<Var>,
    heads: usize,
) -> Result<Var, TensorError> {
    let (nq, f) = tape.value(xq).dims2("multi_head_attention")?;
    let (nk, fk) = tape.value(xkv).dims2("multi_head_attention")?;
    if f != fk {
        return Err(TensorError::ShapeMismatch {
            op: "multi_head_attention",
            lhs: vec![nq, f],
            rhs: vec![nk, fk],
        });
    }
    if heads == 0 || f % heads != 0 {
        return Err(TensorError::Invalid {
            op: "multi_head_attention",
            msg: format!("width {f} is not divisible by {heads} heads"),
        });
    }
    let dk = f / heads;
    let q = linear(tape, xq, &p.query)?;
    let k = linear(tape, xkv, &p.key)?;
    let v = linear(tape, xkv, &p.value)?;
    let scale = T::one() / T::lit(dk as f64).sqrt();
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = tape.slice_cols(q, h * dk, dk)?;
        let kh = tape.slice_cols(k, h * dk, dk)?;
        let vh = tape.slice_cols(v, h * dk, dk)?;
        let kt = tape.transpose(kh)?;
        let logits = tape.matmul(qh, kt)?;
        let logits = tape.scale(logits, scale);
        let weights = tape.softmax_rows(logits)?;
        outs.push(tape.matmul(weights, vh)?);
    }
    let merged = if heads == 1 { outs[0] } else { tape.concat_cols(&outs)? };
    linear(tape, merged, &p.output)
}

pub fn mlp<T: Real>(tape: &mut Tape<T>, x: Var, p: &MlpParams<Var>) -> Result<Var, TensorError> {
    let h = linear(tape, x, &p.fc1)?;
    let h = tape.gelu(h);
    linear(tape, h, &p.fc2)
}

/// Pre-norm block: `x += MHA(LN(x)); x += MLP(LN(x))`.
pub fn encoder_block<T: Real>(
    tape: &mut Tape<T>,
    x: Var,
    p: &EncoderBlockParams<Var>,
    heads: usize,
) -> Result<Var, TensorError> {
    let n = layer_norm(tape, x, &p.ln1)?;
    let a = multi_head_attention(tape, n, n, &p.attn, heads)?;
    let x = tape.add(x, a)?;
    let n = layer_norm(tape, x, &p.ln2)?;
    let m = mlp(tape, n, &p.mlp)?;
    tape.add(x, m)
}

/// Self-attention, then a second attention whose keys/values are the
/// encoder output (`cross`) or the normalized block input again, then MLP.
pub fn decoder_block<T: Real>(
    tape: &mut Tape<T>,
    x: Var,
    enc_out: Var,
    p: &DecoderBlockParams<Var>,
    heads: usize,
    cross: bool,
) -> Result<Var, TensorError> {
    let (nx, _) = tape.value(x).dims2("decoder_block")?;
    let (ne, _) = tape.value(enc_out).dims2("decoder_block")?;
    if nx != ne {
        return Err(TensorError::ShapeMismatch {
            op: "decoder_block",
            lhs: tape.value(x).shape().to_vec(),
            rhs: tape.value(enc_out).shape().to_vec(),
        });
    }
    let n = layer_norm(tape, x, &p.ln1)?;
    let a = multi_head_attention(tape, n, n, &p.self_attn, heads)?;
    let x = tape.add(x, a)?;
    let n = layer_norm(tape, x, &p.ln2)?;
    let kv = if cross { enc_out } else { n };
    let a = multi_head_attention(tape, n, kv, &p.cross_attn, heads)?;
    let x = tape.add(x, a)?;
    let n = layer_norm(tape, x, &p.ln3)?;
    let m = mlp(tape, n, &p.mlp)?;
    tape.add(x, m)
}

/// Fold `HW×F` tokens to `H×W×F`, then conv → GELU → conv to `S` bands.
/// Returns the residual as `HW×S` tokens.
pub fn reshape_refine<T: Real>(
    tape: &mut Tape<T>,
    tokens: Var,
    h: usize,
    w: usize,
    p: &RefineParams<Var>,
) -> Result<Var, TensorError> {
    let (n, f) = tape.value(tokens).dims2("reshape_refine")?;
    if n != h * w {
        return Err(TensorError::ShapeMismatch {
            op: "reshape_refine",
            lhs: vec![n, f],
            rhs: vec![h, w],
        });
    }
    let img = tape.reshape(tokens, &[h, w, f])?;
    let y = tape.conv2d_same(img, p.conv1.kernel, p.conv1.bias)?;
    let y = tape.gelu(y);
    let y = tape.conv2d_same(y, p.conv2.kernel, p.conv2.bias)?;
    let bands = tape.value(y).shape()[2];
    tape.reshape(y, &[h * w, bands])
}
