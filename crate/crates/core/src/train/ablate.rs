//! Two trainings that differ only in the residual flag, scored on a
//! held-out sample next to the bicubic baseline.

use super::{evaluate, Checkpoint, Result, TrainConfig, Trainer};
use crate::data::{Cube, FusionSample};
use crate::metrics::{self, QualityReport};

pub struct AblationRun {
    pub checkpoint: Checkpoint,
    pub trace: Vec<f64>,
    pub prediction: Cube,
    pub report: QualityReport,
}

pub struct Ablation {
    pub rls_on: AblationRun,
    pub rls_off: AblationRun,
    /// Upsampled input against ground truth.
    pub baseline: QualityReport,
}

fn run(
    cfg: &TrainConfig,
    rls: bool,
    data: &[FusionSample],
    holdout: &FusionSample,
    tile: usize,
    overlap: usize,
) -> Result<AblationRun> {
    let mut cfg = cfg.clone();
    cfg.model.rls = rls;
    let mut trainer = Trainer::new(cfg, data)?;
    let trace = trainer.run(|_, _, _| {})?;
    let (prediction, report) = evaluate(trainer.params(), &trainer.config().model, holdout, tile, overlap)?;
    Ok(AblationRun {
        checkpoint: trainer.checkpoint(),
        trace,
        prediction,
        report,
    })
}

pub fn ablate_rls(
    cfg: &TrainConfig,
    data: &[FusionSample],
    holdout: &FusionSample,
    tile: usize,
    overlap: usize,
) -> Result<Ablation> {
    let baseline = metrics::report(&holdout.up, &holdout.gt, holdout.ratio as f64)?;
    log::info!("training with residual learning");
    let rls_on = run(cfg, true, data, holdout, tile, overlap)?;
    log::info!("training without residual learning");
    let rls_off = run(cfg, false, data, holdout, tile, overlap)?;
    Ok(Ablation {
        rls_on,
        rls_off,
        baseline,
    })
}
