//! Parameter trees. Every container is generic over its leaf type so the
//! same structure holds weight tensors, tape handles, gradients or Adam
//! moments.

use std::convert::Infallible;

use super::FusformerConfig;
use crate::rng::Rng;
use crate::tensor::{Real, Tensor};

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

type Visitor<'a, 'f, P, Q, E> = &'f mut dyn FnMut(String, &'a P) -> Result<Q, E>;
type MutVisitor<'a, 'f, P> = &'f mut dyn FnMut(String, &'a mut P);

macro_rules! param_node {
    ($name:ident { leaves: [$($leaf:ident),*], nodes: [$($node:ident),*] }) => {
        impl<P> $name<P> {
            pub fn try_map_named<'a, Q, E>(
                &'a self,
                prefix: &str,
                f: Visitor<'a, '_, P, Q, E>,
            ) -> Result<$name<Q>, E> {
                Ok($name {
                    $($leaf: f(join(prefix, stringify!($leaf)), &self.$leaf)?,)*
                    $($node: self.$node.try_map_named(&join(prefix, stringify!($node)), f)?,)*
                })
            }

            pub fn visit_mut<'a>(&'a mut self, prefix: &str, f: MutVisitor<'a, '_, P>) {
                $(f(join(prefix, stringify!($leaf)), &mut self.$leaf);)*
                $(self.$node.visit_mut(&join(prefix, stringify!($node)), f);)*
            }
        }
    };
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearParams<P> {
    /// `d_in × d_out`
    pub weight: P,
    pub bias: P,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerNormParams<P> {
    pub gamma: P,
    pub beta: P,
}

/// Query/key/value projections (each `F×F`, read as `L` column blocks of
/// width `d_k`) and the head-merging output projection.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams<P> {
    pub query: LinearParams<P>,
    pub key: LinearParams<P>,
    pub value: LinearParams<P>,
    pub output: LinearParams<P>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams<P> {
    pub fc1: LinearParams<P>,
    pub fc2: LinearParams<P>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderBlockParams<P> {
    pub ln1: LayerNormParams<P>,
    pub attn: AttentionParams<P>,
    pub ln2: LayerNormParams<P>,
    pub mlp: MlpParams<P>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderBlockParams<P> {
    pub ln1: LayerNormParams<P>,
    pub self_attn: AttentionParams<P>,
    pub ln2: LayerNormParams<P>,
    pub cross_attn: AttentionParams<P>,
    pub ln3: LayerNormParams<P>,
    pub mlp: MlpParams<P>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams<P> {
    /// `k × k × C_in × C_out`
    pub kernel: P,
    pub bias: P,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefineParams<P> {
    pub conv1: ConvParams<P>,
    pub conv2: ConvParams<P>,
}

param_node!(LinearParams { leaves: [weight, bias], nodes: [] });
param_node!(LayerNormParams { leaves: [gamma, beta], nodes: [] });
param_node!(AttentionParams { leaves: [], nodes: [query, key, value, output] });
param_node!(MlpParams { leaves: [], nodes: [fc1, fc2] });
param_node!(EncoderBlockParams { leaves: [], nodes: [ln1, attn, ln2, mlp] });
param_node!(DecoderBlockParams { leaves: [], nodes: [ln1, self_attn, ln2, cross_attn, ln3, mlp] });
param_node!(ConvParams { leaves: [kernel, bias], nodes: [] });
param_node!(RefineParams { leaves: [], nodes: [conv1, conv2] });

/// All trainable state of the network.
#[derive(Clone, Debug, PartialEq)]
pub struct FusformerParams<P> {
    pub embed: LinearParams<P>,
    pub encoder: Vec<EncoderBlockParams<P>>,
    pub decoder: Vec<DecoderBlockParams<P>>,
    pub refine: RefineParams<P>,
}

impl<P> FusformerParams<P> {
    /// Maps every leaf in visit order, passing its dotted name
    /// (e.g. `encoder.0.attn.query.weight`).
    pub fn try_map_named<'a, Q, E>(
        &'a self,
        f: &mut dyn FnMut(String, &'a P) -> Result<Q, E>,
    ) -> Result<FusformerParams<Q>, E> {
        Ok(FusformerParams {
            embed: self.embed.try_map_named("embed", f)?,
            encoder: self
                .encoder
                .iter()
                .enumerate()
                .map(|(i, b)| b.try_map_named(&format!("encoder.{i}"), f))
                .collect::<Result<_, E>>()?,
            decoder: self
                .decoder
                .iter()
                .enumerate()
                .map(|(i, b)| b.try_map_named(&format!("decoder.{i}"), f))
                .collect::<Result<_, E>>()?,
            refine: self.refine.try_map_named("refine", f)?,
        })
    }

    pub fn map<Q>(&self, mut f: impl FnMut(&P) -> Q) -> FusformerParams<Q> {
        let res: Result<_, Infallible> = self.try_map_named(&mut |_, p| Ok(f(p)));
        match res {
            Ok(v) => v,
            Err(e) => match e {},
        }
    }

    pub fn visit_mut<'a>(&'a mut self, f: &mut dyn FnMut(String, &'a mut P)) {
        self.embed.visit_mut("embed", f);
        for (i, b) in self.encoder.iter_mut().enumerate() {
            b.visit_mut(&format!("encoder.{i}"), f);
        }
        for (i, b) in self.decoder.iter_mut().enumerate() {
            b.visit_mut(&format!("decoder.{i}"), f);
        }
        self.refine.visit_mut("refine", f);
    }

    /// Leaves with their names, in visit order.
    pub fn named(&self) -> Vec<(String, &P)> {
        let mut out = Vec::new();
        let _ = self.try_map_named::<(), Infallible>(&mut |name, p| {
            out.push((name, p));
            Ok(())
        });
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut P)> {
        let mut out = Vec::new();
        self.visit_mut(&mut |name, p| out.push((name, p)));
        out
    }
}

impl<T: Real> FusformerParams<Tensor<T>> {
    pub fn scalar_count(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> FusformerParams<Tensor<U>> {
        self.map(|t| t.cast())
    }

    pub fn zeros_like(&self) -> Self {
        self.map(|t| Tensor::zeros(t.shape()))
    }
}

struct Init<'r> {
    rng: &'r mut Rng,
}

impl Init<'_> {
    fn uniform<T: Real>(&mut self, shape: &[usize], fan_in: usize) -> Tensor<T> {
        let bound = (1.0 / fan_in as f64).sqrt();
        let n = shape.iter().product();
        let data = (0..n).map(|_| T::lit(self.rng.uniform(-bound, bound))).collect();
        Tensor::new(shape, data).expect("shape fixed by config")
    }

    fn linear<T: Real>(&mut self, din: usize, dout: usize) -> LinearParams<Tensor<T>> {
        LinearParams {
            weight: self.uniform(&[din, dout], din),
            bias: Tensor::zeros(&[dout]),
        }
    }

    fn layer_norm<T: Real>(&mut self, d: usize) -> LayerNormParams<Tensor<T>> {
        LayerNormParams {
            gamma: Tensor::full(&[d], T::one()),
            beta: Tensor::zeros(&[d]),
        }
    }

    fn attention<T: Real>(&mut self, f: usize) -> AttentionParams<Tensor<T>> {
        AttentionParams {
            query: self.linear(f, f),
            key: self.linear(f, f),
            value: self.linear(f, f),
            output: self.linear(f, f),
        }
    }

    fn mlp<T: Real>(&mut self, f: usize, hidden: usize) -> MlpParams<Tensor<T>> {
        MlpParams {
            fc1: self.linear(f, hidden),
            fc2: self.linear(hidden, f),
        }
    }

    fn conv<T: Real>(&mut self, k: usize, cin: usize, cout: usize) -> ConvParams<Tensor<T>> {
        ConvParams {
            kernel: self.uniform(&[k, k, cin, cout], k * k * cin),
            bias: Tensor::zeros(&[cout]),
        }
    }
}

/// Seeded initialization: weights uniform in `±sqrt(1/fan_in)`, biases
/// zero, layer-norm scales one, and the last refine convolution exactly
/// zero so a fresh network outputs its upsampled input unchanged.
pub fn init_params<T: Real>(cfg: &FusformerConfig, seed: u64) -> FusformerParams<Tensor<T>> {
    let mut rng = Rng::stream(seed, 0x1417);
    let mut init = Init { rng: &mut rng };
    let f = cfg.features;
    let k = cfg.refine_kernel;
    let embed = init.linear(cfg.hsi_bands + cfg.msi_bands, f);
    let encoder = (0..cfg.encoder_depth)
        .map(|_| EncoderBlockParams {
            ln1: init.layer_norm(f),
            attn: init.attention(f),
            ln2: init.layer_norm(f),
            mlp: init.mlp(f, cfg.mlp_hidden),
        })
        .collect();
    let decoder = (0..cfg.decoder_depth)
        .map(|_| DecoderBlockParams {
            ln1: init.layer_norm(f),
            self_attn: init.attention(f),
            ln2: init.layer_norm(f),
            cross_attn: init.attention(f),
            ln3: init.layer_norm(f),
            mlp: init.mlp(f, cfg.mlp_hidden),
        })
        .collect();
    let conv1 = init.conv(k, f, f);
    let refine = RefineParams {
        conv1,
        conv2: ConvParams {
            kernel: Tensor::zeros(&[k, k, f, cfg.hsi_bands]),
            bias: Tensor::zeros(&[cfg.hsi_bands]),
        },
    };
    FusformerParams {
        embed,
        encoder,
        decoder,
        refine,
    }
}
