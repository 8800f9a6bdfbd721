use fusformer::data::Cube;
use fusformer::model::layers::{self, fold_tokens, pixel_tokenize};
use fusformer::model::{
    bind_params, decoder_block_param_count, embed_param_count, encode_decode, encoder_block_param_count, forward,
    init_params, multi_head_attention, param_count, AttentionParams, FusformerConfig, LinearParams,
};
use fusformer::rng::Rng;
use fusformer::tensor::{kernels, Tape, Tensor};
use fusformer::verify::{self, naive_attention, permute_rows, random_attention};

fn rand_tensor(rng: &mut Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
}

fn rand_cube(rng: &mut Rng, h: usize, w: usize, c: usize) -> Cube {
    Cube::from_fn(h, w, c, |_, _, _| rng.next_f64() as f32)
}

fn identity_linear(f: usize) -> LinearParams<Tensor<f64>> {
    LinearParams {
        weight: Tensor::eye(f),
        bias: Tensor::zeros(&[f]),
    }
}

fn identity_attention(f: usize) -> AttentionParams<Tensor<f64>> {
    AttentionParams {
        query: identity_linear(f),
        key: identity_linear(f),
        value: identity_linear(f),
        output: identity_linear(f),
    }
}

#[test]
fn tokenize_single_pixel() {
    let up = Cube::new(1, 1, 2, vec![0.25, 0.5]).unwrap();
    let msi = Cube::new(1, 1, 1, vec![0.75]).unwrap();
    let t = pixel_tokenize::<f32>(&up, &msi).unwrap();
    assert_eq!(t.shape(), &[1, 3]);
    assert_eq!(t.data(), &[0.25, 0.5, 0.75]);
}

#[test]
fn tokenize_row_layout() {
    // 1 row, 2 columns: token 1 is pixel (0,1)
    let up = Cube::from_fn(1, 2, 1, |_, j, _| j as f32 + 1.0);
    let msi = Cube::from_fn(1, 2, 1, |_, j, _| 10.0 * (j as f32 + 1.0));
    let t = pixel_tokenize::<f32>(&up, &msi).unwrap();
    assert_eq!(t.data(), &[1.0, 10.0, 2.0, 20.0]);
}

#[test]
fn tokenize_fold_inverse() {
    let mut rng = Rng::seed_from_u64(4);
    let up = rand_cube(&mut rng, 3, 5, 4);
    let msi = rand_cube(&mut rng, 3, 5, 2);
    let t = pixel_tokenize::<f32>(&up, &msi).unwrap();
    let (n, width) = (15, 6);
    let split = |lo: usize, hi: usize| {
        let mut d = Vec::new();
        for r in 0..n {
            d.extend_from_slice(&t.data()[r * width + lo..r * width + hi]);
        }
        Tensor::new(&[n, hi - lo], d).unwrap()
    };
    assert_eq!(fold_tokens(&split(0, 4), 3, 5).unwrap(), up);
    assert_eq!(fold_tokens(&split(4, 6), 3, 5).unwrap(), msi);
    let bad = Cube::zeros(3, 4, 2);
    assert!(pixel_tokenize::<f32>(&up, &bad).is_err());
}

#[test]
fn embed_examples() {
    let mut rng = Rng::seed_from_u64(9);
    let d = rand_tensor(&mut rng, &[5, 4]);
    let embed = |w: Tensor<f64>, b: Tensor<f64>| {
        let mut tape = Tape::new();
        let x = tape.constant(d.clone());
        let p = LinearParams {
            weight: tape.constant(w),
            bias: tape.constant(b),
        };
        let y = layers::linear(&mut tape, x, &p).unwrap();
        tape.value(y).clone()
    };
    let b = rand_tensor(&mut rng, &[4]);
    let out = embed(Tensor::zeros(&[4, 4]), b.clone());
    for row in out.data().chunks(4) {
        assert_eq!(row, b.data());
    }
    assert_eq!(embed(Tensor::eye(4), Tensor::zeros(&[4])), d);

    let w = rand_tensor(&mut rng, &[4, 3]);
    let b = rand_tensor(&mut rng, &[3]);
    let out = embed(w.clone(), b.clone());
    let mut want = kernels::gemm(5, 4, 3, d.data(), w.data());
    for (r, row) in want.chunks_mut(3).enumerate() {
        for j in 0..3 {
            row[j] += b.data()[j];
        }
        assert_eq!(&out.data()[r * 3..r * 3 + 3], row);
    }
}

#[test]
fn attention_zero_input_fixed_point() {
    let x = Tensor::<f64>::zeros(&[2, 1]);
    let out = multi_head_attention(&x, &x, &identity_attention(1), 1).unwrap();
    assert_eq!(out.data(), &[0.0, 0.0]);
}

#[test]
fn attention_single_token_is_value_path() {
    let mut rng = Rng::seed_from_u64(2);
    let p = random_attention(&mut rng, 6);
    let x = rand_tensor(&mut rng, &[1, 6]);
    let out = multi_head_attention(&x, &x, &p, 3).unwrap();
    // x·Wv + bv, then ·Wo + bo
    let lin = |x: &[f64], l: &LinearParams<Tensor<f64>>| -> Vec<f64> {
        (0..6)
            .map(|j| l.bias.data()[j] + (0..6).map(|t| x[t] * l.weight.data()[t * 6 + j]).sum::<f64>())
            .collect()
    };
    let want = lin(&lin(x.data(), &p.value), &p.output);
    for (a, b) in out.data().iter().zip(&want) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn attention_hand_derived_two_tokens() {
    let x = Tensor::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap();
    let out = multi_head_attention(&x, &x, &identity_attention(2), 1).unwrap();
    // logits row 0: [1/sqrt(2), 0]
    let a = (0.5f64.sqrt()).exp();
    let p0 = a / (a + 1.0);
    assert!((out.data()[0] - p0).abs() < 1e-12);
    assert!((out.data()[1] - (1.0 - p0)).abs() < 1e-12);
    assert!((out.data()[0] - 0.670).abs() < 5e-4);
    assert!((out.data()[1] - 0.330).abs() < 5e-4);
}

#[test]
fn attention_matches_naive_oracle() {
    for (n, f, l) in [(2, 2, 1), (4, 48, 6), (9, 48, 8), (5, 12, 4)] {
        let diff = verify::attention_oracle_check(17, n, f, l).unwrap();
        assert!(diff <= 1e-6, "({n},{f},{l}) diff {diff}");
    }
}

#[test]
fn attention_cross_input_matches_oracle() {
    let mut rng = Rng::seed_from_u64(31);
    let p = random_attention(&mut rng, 8);
    let xq = rand_tensor(&mut rng, &[5, 8]);
    let xkv = rand_tensor(&mut rng, &[5, 8]);
    let got = multi_head_attention(&xq, &xkv, &p, 2).unwrap();
    let want = naive_attention(xq.data(), xkv.data(), 5, 8, 2, &p);
    let diff = got.data().iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-12);
}

#[test]
fn single_head_with_identity_merge_is_plain_formula() {
    let mut rng = Rng::seed_from_u64(8);
    let mut p = random_attention(&mut rng, 4);
    p.output = identity_linear(4);
    let x = rand_tensor(&mut rng, &[3, 4]);
    let got = multi_head_attention(&x, &x, &p, 1).unwrap();
    // softmax(QKᵀ/2)·V with plain loops
    let proj = |l: &LinearParams<Tensor<f64>>| -> Vec<f64> {
        let mut o = vec![0.0; 12];
        for i in 0..3 {
            for j in 0..4 {
                o[i * 4 + j] = l.bias.data()[j] + (0..4).map(|t| x.data()[i * 4 + t] * l.weight.data()[t * 4 + j]).sum::<f64>();
            }
        }
        o
    };
    let (q, k, v) = (proj(&p.query), proj(&p.key), proj(&p.value));
    for i in 0..3 {
        let s: Vec<f64> = (0..3)
            .map(|j| ((0..4).map(|t| q[i * 4 + t] * k[j * 4 + t]).sum::<f64>() / 2.0).exp())
            .collect();
        let z: f64 = s.iter().sum();
        for t in 0..4 {
            let want: f64 = (0..3).map(|j| s[j] / z * v[j * 4 + t]).sum();
            assert!((got.data()[i * 4 + t] - want).abs() < 1e-6);
        }
    }
}

#[test]
fn attention_rejects_bad_widths() {
    let p = identity_attention(4);
    let x = Tensor::<f64>::zeros(&[2, 4]);
    assert!(multi_head_attention(&x, &x, &p, 3).is_err());
    let y = Tensor::<f64>::zeros(&[2, 3]);
    assert!(multi_head_attention(&x, &y, &p, 1).is_err());
}

fn small_cfg() -> FusformerConfig {
    FusformerConfig {
        hsi_bands: 5,
        msi_bands: 2,
        features: 8,
        heads: 2,
        mlp_hidden: 12,
        ..FusformerConfig::default()
    }
}

#[test]
fn encoder_block_identity_with_zero_outputs() {
    let cfg = small_cfg();
    let mut params = init_params::<f64>(&cfg, 1);
    let enc = &mut params.encoder[0];
    enc.attn.output.weight = Tensor::zeros(&[8, 8]);
    enc.mlp.fc2.weight = Tensor::zeros(&[12, 8]);
    let mut rng = Rng::seed_from_u64(3);
    let x = rand_tensor(&mut rng, &[6, 8]);
    let mut tape = Tape::new();
    let p = bind_params(&mut tape, &params, false);
    let xv = tape.constant(x.clone());
    let y = layers::encoder_block(&mut tape, xv, &p.encoder[0], cfg.heads).unwrap();
    assert_eq!(tape.value(y), &x);
}

#[test]
fn encoder_block_matches_step_by_step_composition() {
    let cfg = small_cfg();
    let params = init_params::<f64>(&cfg, 6);
    let blk = &params.encoder[0];
    let mut rng = Rng::seed_from_u64(12);
    let x = rand_tensor(&mut rng, &[7, 8]);
    let mut tape = Tape::new();
    let p = bind_params(&mut tape, &params, false);
    let xv = tape.constant(x.clone());
    let y = layers::encoder_block(&mut tape, xv, &p.encoder[0], cfg.heads).unwrap();

    // Independent recomputation: direct layer norm, naive attention, MLP loops.
    let ln = |x: &[f64], g: &[f64], b: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        for (r, row) in x.chunks(8).enumerate() {
            let mean = row.iter().sum::<f64>() / 8.0;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 8.0;
            for j in 0..8 {
                out[r * 8 + j] = (row[j] - mean) / (var + 1e-5).sqrt() * g[j] + b[j];
            }
        }
        out
    };
    let lin = |x: &[f64], l: &LinearParams<Tensor<f64>>| -> Vec<f64> {
        let (din, dout) = (l.weight.shape()[0], l.weight.shape()[1]);
        let mut out = vec![0.0; x.len() / din * dout];
        for (r, row) in x.chunks(din).enumerate() {
            for j in 0..dout {
                out[r * dout + j] = l.bias.data()[j] + (0..din).map(|t| row[t] * l.weight.data()[t * dout + j]).sum::<f64>();
            }
        }
        out
    };
    let n1 = ln(x.data(), blk.ln1.gamma.data(), blk.ln1.beta.data());
    let a = naive_attention(&n1, &n1, 7, 8, cfg.heads, &blk.attn);
    let x1: Vec<f64> = x.data().iter().zip(&a).map(|(p, q)| p + q).collect();
    let n2 = ln(&x1, blk.ln2.gamma.data(), blk.ln2.beta.data());
    let h: Vec<f64> = lin(&n2, &blk.mlp.fc1).into_iter().map(kernels::gelu).collect();
    let m = lin(&h, &blk.mlp.fc2);
    let want: Vec<f64> = x1.iter().zip(&m).map(|(p, q)| p + q).collect();
    let diff = tape
        .value(y)
        .data()
        .iter()
        .zip(&want)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(diff <= 1e-6, "diff {diff}");
}

#[test]
fn decoder_block_identity_with_zero_outputs() {
    for cross in [true, false] {
        let cfg = small_cfg();
        let mut params = init_params::<f64>(&cfg, 2);
        let dec = &mut params.decoder[0];
        dec.self_attn.output.weight = Tensor::zeros(&[8, 8]);
        dec.cross_attn.output.weight = Tensor::zeros(&[8, 8]);
        dec.mlp.fc2.weight = Tensor::zeros(&[12, 8]);
        let mut rng = Rng::seed_from_u64(5);
        let x = rand_tensor(&mut rng, &[6, 8]);
        let e = rand_tensor(&mut rng, &[6, 8]);
        let mut tape = Tape::new();
        let p = bind_params(&mut tape, &params, false);
        let xv = tape.constant(x.clone());
        let ev = tape.constant(e);
        let y = layers::decoder_block(&mut tape, xv, ev, &p.decoder[0], cfg.heads, cross).unwrap();
        assert_eq!(tape.value(y), &x);
    }
}

#[test]
fn decoder_cross_flag_changes_key_source() {
    let cfg = small_cfg();
    let params = init_params::<f64>(&cfg, 3);
    let mut rng = Rng::seed_from_u64(6);
    let x = rand_tensor(&mut rng, &[5, 8]);
    let e1 = rand_tensor(&mut rng, &[5, 8]);
    let e2 = rand_tensor(&mut rng, &[5, 8]);
    let run = |enc: &Tensor<f64>, cross: bool| {
        let mut tape = Tape::new();
        let p = bind_params(&mut tape, &params, false);
        let xv = tape.constant(x.clone());
        let ev = tape.constant(enc.clone());
        let y = layers::decoder_block(&mut tape, xv, ev, &p.decoder[0], cfg.heads, cross).unwrap();
        tape.value(y).clone()
    };
    // Without cross attention the encoder output is never read.
    assert_eq!(run(&e1, false), run(&e2, false));
    assert_ne!(run(&e1, true), run(&e2, true));
}

#[test]
fn decoder_block_permutation_equivariant() {
    let cfg = small_cfg();
    let params = init_params::<f64>(&cfg, 4);
    let mut rng = Rng::seed_from_u64(7);
    let x = rand_tensor(&mut rng, &[9, 8]);
    let e = rand_tensor(&mut rng, &[9, 8]);
    let mut perm: Vec<usize> = (0..9).collect();
    rng.shuffle(&mut perm);
    let run = |x: &Tensor<f64>, e: &Tensor<f64>| {
        let mut tape = Tape::new();
        let p = bind_params(&mut tape, &params, false);
        let xv = tape.constant(x.clone());
        let ev = tape.constant(e.clone());
        let y = layers::decoder_block(&mut tape, xv, ev, &p.decoder[0], cfg.heads, true).unwrap();
        tape.value(y).clone()
    };
    let a = permute_rows(&run(&x, &e), &perm);
    let b = run(&permute_rows(&x, &perm), &permute_rows(&e, &perm));
    assert!(a.max_abs_diff(&b) <= 1e-5);
    let mut tape = Tape::new();
    let p = bind_params(&mut tape, &params, false);
    let xv = tape.constant(x);
    let short = tape.constant(Tensor::zeros(&[4, 8]));
    assert!(layers::decoder_block(&mut tape, xv, short, &p.decoder[0], cfg.heads, true).is_err());
}

#[test]
fn token_path_permutation_equivariant() {
    for seed in 0..3 {
        let diff = verify::permutation_check(seed, 16).unwrap();
        assert!(diff <= 1e-5, "seed {seed}: {diff}");
    }
    let cfg = small_cfg();
    let params = init_params::<f32>(&cfg, 0);
    let mut rng = Rng::seed_from_u64(1);
    let t = Tensor::new(&[10, 7], (0..70).map(|_| rng.next_f64() as f32).collect()).unwrap();
    let perm: Vec<usize> = (0..10).rev().collect();
    let a = permute_rows(&encode_decode(&t, &params, &cfg).unwrap(), &perm);
    let b = encode_decode(&permute_rows(&t, &perm), &params, &cfg).unwrap();
    assert!(a.max_abs_diff(&b) <= 1e-5);
}

#[test]
fn refine_zero_final_conv_gives_zero_residual() {
    let cfg = small_cfg();
    let params = init_params::<f64>(&cfg, 0);
    let mut rng = Rng::seed_from_u64(2);
    let tokens = rand_tensor(&mut rng, &[12, 8]);
    let mut tape = Tape::new();
    let p = bind_params(&mut tape, &params, false);
    let t = tape.constant(tokens);
    let e = layers::reshape_refine(&mut tape, t, 3, 4, &p.refine).unwrap();
    assert_eq!(tape.value(e).shape(), &[12, 5]);
    assert!(tape.value(e).data().iter().all(|&v| v == 0.0));
    let bad = tape.constant(Tensor::zeros(&[11, 8]));
    assert!(layers::reshape_refine(&mut tape, bad, 3, 4, &p.refine).is_err());
}

#[test]
fn refine_fold_layout() {
    // Single channel, 1x1 unit kernels: the residual is gelu(token value).
    let tokens = Tensor::from_rows(&[&[1.0], &[2.0], &[3.0], &[4.0]]).unwrap();
    let mut tape = Tape::<f64>::new();
    let t = tape.constant(tokens);
    let img = tape.reshape(t, &[2, 2, 1]).unwrap();
    // pixel (0,1) is element 1 of the H×W×C layout
    assert_eq!(tape.value(img).data()[1], 2.0);
    let refine = fusformer::model::RefineParams {
        conv1: fusformer::model::ConvParams {
            kernel: tape.constant(Tensor::full(&[1, 1, 1, 1], 1.0)),
            bias: tape.constant(Tensor::zeros(&[1])),
        },
        conv2: fusformer::model::ConvParams {
            kernel: tape.constant(Tensor::full(&[1, 1, 1, 1], 1.0)),
            bias: tape.constant(Tensor::zeros(&[1])),
        },
    };
    let e = layers::reshape_refine(&mut tape, t, 2, 2, &refine).unwrap();
    let cube = fold_tokens(tape.value(e), 2, 2).unwrap();
    let want = kernels::gelu(2.0);
    assert!((cube.get(0, 1, 0) as f64 - want).abs() < 1e-6);
}

#[test]
fn refine_matches_conv_oracle_composition() {
    let (h, w, f, s, k) = (4, 3, 3, 2, 3);
    let mut rng = Rng::seed_from_u64(44);
    let tokens = rand_tensor(&mut rng, &[h * w, f]);
    let k1 = rand_tensor(&mut rng, &[k, k, f, f]);
    let b1 = rand_tensor(&mut rng, &[f]);
    let k2 = rand_tensor(&mut rng, &[k, k, f, s]);
    let b2 = rand_tensor(&mut rng, &[s]);
    let mut tape = Tape::new();
    let t = tape.constant(tokens.clone());
    let refine = fusformer::model::RefineParams {
        conv1: fusformer::model::ConvParams {
            kernel: tape.constant(k1.clone()),
            bias: tape.constant(b1.clone()),
        },
        conv2: fusformer::model::ConvParams {
            kernel: tape.constant(k2.clone()),
            bias: tape.constant(b2.clone()),
        },
    };
    let e = layers::reshape_refine(&mut tape, t, h, w, &refine).unwrap();

    let conv = |x: &[f64], kern: &Tensor<f64>, bias: &Tensor<f64>, cin: usize, cout: usize| -> Vec<f64> {
        let pad = (k / 2) as isize;
        let mut out = vec![0.0; h * w * cout];
        for i in 0..h as isize {
            for j in 0..w as isize {
                for o in 0..cout {
                    let mut acc = bias.data()[o];
                    for di in 0..k as isize {
                        for dj in 0..k as isize {
                            let (y, xx) = (i + di - pad, j + dj - pad);
                            if y < 0 || xx < 0 || y >= h as isize || xx >= w as isize {
                                continue;
                            }
                            for c in 0..cin {
                                let kv = kern.data()[((di as usize * k + dj as usize) * cin + c) * cout + o];
                                acc += x[(y as usize * w + xx as usize) * cin + c] * kv;
                            }
                        }
                    }
                    out[(i as usize * w + j as usize) * cout + o] = acc;
                }
            }
        }
        out
    };
    let y1: Vec<f64> = conv(tokens.data(), &k1, &b1, f, f).into_iter().map(kernels::gelu).collect();
    let want = conv(&y1, &k2, &b2, f, s);
    let diff = tape
        .value(e)
        .data()
        .iter()
        .zip(&want)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(diff <= 1e-6);
}

#[test]
fn forward_at_init_residual_identity() {
    assert_eq!(verify::residual_identity_check(21, 10).unwrap(), 10);
    let cfg = FusformerConfig::default();
    let params = init_params::<f64>(&cfg, 0);
    let mut rng = Rng::seed_from_u64(3);
    let up = rand_cube(&mut rng, 4, 4, 31);
    let msi = rand_cube(&mut rng, 4, 4, 3);
    assert_eq!(forward(&up, &msi, &params, &cfg).unwrap(), up);
}

#[test]
fn forward_at_init_without_residual_is_zero() {
    let cfg = FusformerConfig {
        rls: false,
        ..FusformerConfig::default()
    };
    let params = init_params::<f32>(&cfg, 0);
    let mut rng = Rng::seed_from_u64(3);
    let up = rand_cube(&mut rng, 4, 4, 31);
    let msi = rand_cube(&mut rng, 4, 4, 3);
    let out = forward(&up, &msi, &params, &cfg).unwrap();
    assert!(out.data().iter().all(|&v| v == 0.0));
}

#[test]
fn forward_shape_contract() {
    let cfg = small_cfg();
    let params = verify::generic_params(&cfg, 1).cast::<f32>();
    let mut rng = Rng::seed_from_u64(10);
    for (h, w) in [(1, 1), (2, 5), (4, 3)] {
        let up = rand_cube(&mut rng, h, w, 5);
        let msi = rand_cube(&mut rng, h, w, 2);
        let out = forward(&up, &msi, &params, &cfg).unwrap();
        assert_eq!(out.dims(), (h, w, 5));
    }
    let up = rand_cube(&mut rng, 2, 2, 4);
    let msi = rand_cube(&mut rng, 2, 2, 2);
    let err = forward(&up, &msi, &params, &cfg).unwrap_err();
    assert!(err.to_string().contains("bands"));
}

#[test]
fn param_count_examples() {
    let cfg = FusformerConfig::default();
    assert_eq!(embed_param_count(&cfg), (31 + 3) * 48 + 48);
    let total = param_count(&cfg);
    assert!((80_000..=120_000).contains(&total), "{total}");
    let deeper = FusformerConfig {
        encoder_depth: 2,
        ..cfg.clone()
    };
    assert_eq!(param_count(&deeper) - total, encoder_block_param_count(&cfg));
    let deeper_dec = FusformerConfig {
        decoder_depth: 2,
        ..cfg.clone()
    };
    assert_eq!(param_count(&deeper_dec) - total, decoder_block_param_count(&cfg));
    for seed in [0, 99] {
        assert_eq!(init_params::<f32>(&deeper, seed).scalar_count(), param_count(&deeper));
    }
}

#[test]
fn init_params_contract() {
    let cfg = FusformerConfig::default();
    let a = init_params::<f32>(&cfg, 5);
    let b = init_params::<f32>(&cfg, 5);
    assert_eq!(a, b);
    assert_ne!(a, init_params::<f32>(&cfg, 6));
    for (name, t) in a.named() {
        if name.ends_with("gamma") {
            assert!(t.data().iter().all(|&v| v == 1.0), "{name}");
        }
        if name.ends_with("bias") || name.ends_with("beta") {
            assert!(t.data().iter().all(|&v| v == 0.0), "{name}");
        }
        if name.ends_with("weight") || name == "refine.conv1.kernel" {
            let fan_in = t.shape()[..t.rank() - 1].iter().product::<usize>() as f32;
            let bound = (1.0 / fan_in).sqrt();
            assert!(t.data().iter().all(|v| v.abs() <= bound), "{name}");
            assert!(t.data().iter().any(|&v| v != 0.0), "{name}");
        }
    }
    assert!(a.refine.conv2.kernel.data().iter().all(|&v| v == 0.0));
    assert!(a.refine.conv2.bias.data().iter().all(|&v| v == 0.0));
}

#[test]
fn full_model_gradient_check_64() {
    let r = verify::gradient_check(64, 3, 4, 2).unwrap();
    assert!(r.coords.len() >= 50);
    assert_eq!(r.groups(), ["attn", "embed", "ln", "mlp", "refine"]);
    assert!(r.passed(), "max rel {}", r.max_rel());
}

#[test]
fn full_model_gradient_check_32() {
    let r = verify::gradient_check(32, 3, 4, 2).unwrap();
    assert!(r.coords.len() >= 50);
    assert!(r.passed(), "max rel {}", r.max_rel());
}
