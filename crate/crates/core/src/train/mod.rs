//! Patch-based training with L1 loss and Adam, checkpointing, and the
//! residual-learning ablation.

mod ablate;
mod checkpoint;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{extract_patches, tile_infer, Cube, DataError, FusionSample};
use crate::metrics::{self, MetricError, QualityReport};
use crate::model::{bind_params, cube_tokens, forward, forward_on_tape, init_params, FusformerConfig, FusformerParams, ModelError};
use crate::rng::Rng;
use crate::tensor::{adam_step, AdamConfig, AdamState, Tape, Tensor, TensorError};

pub use ablate::{ablate_rls, Ablation, AblationRun};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, CKPT_MAGIC, CKPT_VERSION};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("no training data")]
    EmptyData,
    #[error("training diverged at step {step} (loss {loss})")]
    NonFinite { step: u64, loss: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

pub type Result<T> = std::result::Result<T, TrainError>;

/// Training hyperparameters. The model config is flattened in, so one JSON
/// object carries both (`rls`, `decoder_cross`, `hsi_bands`, ... alongside
/// `steps`, `lr`, ...).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    #[serde(flatten)]
    pub model: FusformerConfig,
    pub seed: u64,
    pub steps: u64,
    /// Patches per step.
    pub batch: usize,
    /// HR patch side P.
    pub patch: usize,
    /// Spacing of the patch grid on the HR image.
    pub stride: usize,
    pub ratio: usize,
    /// Blur used when simulating training inputs.
    pub sigma: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub log_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainConfig {
            model: FusformerConfig::default(),
            seed: 0,
            steps: 2000,
            batch: 8,
            patch: 16,
            stride: 8,
            ratio: 4,
            sigma: 2.0,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            log_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let fail = |m: String| Err(TrainError::Config(m));
        if self.ratio == 0 || self.patch == 0 || self.patch % self.ratio != 0 {
            return fail(format!("patch {} must be a positive multiple of ratio {}", self.patch, self.ratio));
        }
        if self.stride == 0 || self.stride % self.ratio != 0 {
            return fail(format!("stride {} must be a positive multiple of ratio {}", self.stride, self.ratio));
        }
        if self.batch == 0 {
            return fail("batch must be at least 1".into());
        }
        if !(self.lr > 0.0) {
            return fail(format!("lr must be positive, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return fail("beta1, beta2 must lie in [0, 1) and eps must be positive".into());
        }
        if !(self.sigma >= 0.0) {
            return fail(format!("sigma must be non-negative, got {}", self.sigma));
        }
        Ok(())
    }
}

/// Mean absolute difference between two cubes.
pub fn l1_loss(o: &Cube, x: &Cube) -> Result<f64> {
    if o.dims() != x.dims() {
        return Err(TrainError::Tensor(TensorError::ShapeMismatch {
            op: "l1_loss",
            lhs: vec![o.height(), o.width(), o.bands()],
            rhs: vec![x.height(), x.width(), x.bands()],
        }));
    }
    let total: f64 = o.data().iter().zip(x.data()).map(|(&a, &b)| (a as f64 - b as f64).abs()).sum();
    Ok(total / o.data().len() as f64)
}

const SAMPLER_STREAM: u64 = 0x5a3b;

/// Owns the parameters, optimizer state and patch sampler of one run.
pub struct Trainer {
    cfg: TrainConfig,
    params: FusformerParams<Tensor<f32>>,
    adam: AdamState<f32>,
    rng: Rng,
    step: u64,
    patches: Vec<FusionSample>,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, data: &[FusionSample]) -> Result<Self> {
        let params = init_params::<f32>(&cfg.model, cfg.seed);
        let adam = AdamState::zeros_like(params.named().into_iter().map(|(_, t)| t));
        let rng = Rng::stream(cfg.seed, SAMPLER_STREAM);
        Self::assemble(cfg, params, adam, rng, 0, data)
    }

    /// Continue a run; `data` must be the set the checkpoint was trained on.
    pub fn resume(ckpt: Checkpoint, data: &[FusionSample]) -> Result<Self> {
        let Checkpoint {
            config,
            params,
            adam,
            step,
            rng,
        } = ckpt;
        Self::assemble(config, params, adam, Rng::from_state(rng), step, data)
    }

    fn assemble(
        cfg: TrainConfig,
        params: FusformerParams<Tensor<f32>>,
        adam: AdamState<f32>,
        rng: Rng,
        step: u64,
        data: &[FusionSample],
    ) -> Result<Self> {
        cfg.validate()?;
        if data.is_empty() {
            return Err(TrainError::EmptyData);
        }
        let mut patches = Vec::new();
        for s in data {
            if s.ratio != cfg.ratio {
                return Err(TrainError::Config(format!(
                    "sample ratio {} differs from config ratio {}",
                    s.ratio, cfg.ratio
                )));
            }
            if s.gt.bands() != cfg.model.hsi_bands || s.msi.bands() != cfg.model.msi_bands {
                return Err(TrainError::Config(format!(
                    "sample has {}+{} bands, config expects {}+{}",
                    s.gt.bands(),
                    s.msi.bands(),
                    cfg.model.hsi_bands,
                    cfg.model.msi_bands
                )));
            }
            patches.extend(extract_patches(s, cfg.patch, cfg.stride)?);
        }
        Ok(Trainer {
            cfg,
            params,
            adam,
            rng,
            step,
            patches,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn params(&self) -> &FusformerParams<Tensor<f32>> {
        &self.params
    }

    pub fn steps_done(&self) -> u64 {
        self.step
    }

    pub fn patch_count(&self) -> usize {
        self.patches.len()
    }

    /// One optimizer step on a freshly drawn batch; returns the batch loss
    /// measured before the update. A non-finite loss, gradient or updated
    /// parameter leaves every piece of state untouched.
    pub fn step(&mut self) -> Result<f64> {
        let mut rng = self.rng.clone();
        let picks: Vec<usize> = (0..self.cfg.batch).map(|_| rng.below(self.patches.len())).collect();
        let mut tape = Tape::<f32>::new();
        let p = bind_params(&mut tape, &self.params, true);
        let mut total = None;
        for &i in &picks {
            let patch = &self.patches[i];
            let out = forward_on_tape(&mut tape, &p, &self.cfg.model, &patch.up, &patch.msi)?;
            let target = tape.constant(cube_tokens(&patch.gt));
            let l = tape.l1_loss(out, target)?;
            total = Some(match total {
                None => l,
                Some(acc) => tape.add(acc, l)?,
            });
        }
        let total = total.expect("batch is at least 1");
        let loss = tape.scale(total, 1.0 / self.cfg.batch as f32);
        let value = tape.value(loss).item() as f64;
        if !value.is_finite() {
            return Err(TrainError::NonFinite {
                step: self.step,
                loss: value,
            });
        }
        let mut grads = tape.backward(loss)?;
        let grads: Vec<Tensor<f32>> = p
            .named()
            .into_iter()
            .map(|(_, &v)| grads.take(v).expect("parameters require grad"))
            .collect();
        if grads.iter().any(|g| g.data().iter().any(|v| !v.is_finite())) {
            return Err(TrainError::NonFinite {
                step: self.step,
                loss: f64::NAN,
            });
        }
        let grad_refs: Vec<&Tensor<f32>> = grads.iter().collect();
        let mut params = self.params.clone();
        let mut adam = self.adam.clone();
        let mut targets: Vec<&mut Tensor<f32>> = params.named_mut().into_iter().map(|(_, t)| t).collect();
        adam_step(&mut targets, &grad_refs, &mut adam, &self.cfg.adam())?;
        if targets.iter().any(|t| t.data().iter().any(|v| !v.is_finite())) {
            return Err(TrainError::NonFinite {
                step: self.step,
                loss: value,
            });
        }
        self.params = params;
        self.adam = adam;
        self.rng = rng;
        self.step += 1;
        Ok(value)
    }

    /// Run until `cfg.steps` steps are done, calling `on_step(step, loss)`
    /// after each one. Returns the losses of the steps run here.
    pub fn run(&mut self, mut on_step: impl FnMut(&Trainer, u64, f64)) -> Result<Vec<f64>> {
        let mut trace = Vec::new();
        while self.step < self.cfg.steps {
            let loss = self.step()?;
            trace.push(loss);
            let done = self.step;
            if self.cfg.log_every > 0 && (done % self.cfg.log_every == 0 || done == self.cfg.steps) {
                log::info!("step {done}/{} loss {loss:.6}", self.cfg.steps);
            }
            on_step(self, done, loss);
        }
        Ok(trace)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.cfg.clone(),
            params: self.params.clone(),
            adam: self.adam.clone(),
            step: self.step,
            rng: self.rng.state(),
        }
    }
}

/// Train from scratch; returns the final parameters and the loss trace.
pub fn train(cfg: &TrainConfig, data: &[FusionSample]) -> Result<(FusformerParams<Tensor<f32>>, Vec<f64>)> {
    let mut t = Trainer::new(cfg.clone(), data)?;
    let trace = t.run(|_, _, _| {})?;
    Ok((t.params, trace))
}

/// Tiled network output for a sample's inputs.
pub fn predict(
    params: &FusformerParams<Tensor<f32>>,
    cfg: &FusformerConfig,
    up: &Cube,
    msi: &Cube,
    ratio: usize,
    tile: usize,
    overlap: usize,
) -> Result<Cube> {
    let out = tile_infer::<ModelError>(up, msi, ratio, tile, overlap, |u, m| forward(u, m, params, cfg))?;
    Ok(out)
}

/// Tiled prediction on `sample` and its quality against the sample's ground truth.
pub fn evaluate(
    params: &FusformerParams<Tensor<f32>>,
    cfg: &FusformerConfig,
    sample: &FusionSample,
    tile: usize,
    overlap: usize,
) -> Result<(Cube, QualityReport)> {
    let pred = predict(params, cfg, &sample.up, &sample.msi, sample.ratio, tile, overlap)?;
    let report = metrics::report(&pred, &sample.gt, sample.ratio as f64)?;
    Ok((pred, report))
}
