use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fusformer::data::io::write_atomic;
use fusformer::data::{read_cube, read_srf, simulate, upsample_bicubic, write_cube, Cube, FusionSample, SpectralResponse};
use fusformer::metrics::{self, inf_f64, QualityReport};
use fusformer::model::{param_count, FusformerConfig};
use fusformer::train::{ablate_rls, load_checkpoint, predict, save_checkpoint, Trainer, TrainConfig, TrainError};
use fusformer::verify;
use serde::{Deserialize, Serialize};

use crate::manifest::{beside, write_json, ManifestBuilder};
use crate::source::{parse_gt, GtSource};
use crate::{
    AblateArgs, CheckArgs, Command, EvalArgs, InferArgs, ParamsArgs, SimulateArgs, TrainArgs, UsageError, EXIT_FAILURE,
    EXIT_OK,
};

pub fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Simulate(a) => simulate_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Infer(a) => infer_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Params(a) => params_cmd(a),
        Command::Check(a) => check_cmd(a),
        Command::Ablate(a) => ablate_cmd(a),
    }
}

/// Config file with defaults for missing keys. Unknown keys are an error,
/// since a misspelled field would otherwise be silently replaced by its default.
fn read_json<T: for<'de> Deserialize<'de> + Serialize + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let raw: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let parsed: T = serde_json::from_value(raw.clone()).with_context(|| format!("parsing {}", path.display()))?;
    let known = serde_json::to_value(&parsed)?;
    if let (Some(raw), Some(known)) = (raw.as_object(), known.as_object()) {
        let unknown: Vec<&String> = raw.keys().filter(|k| !known.contains_key(*k)).collect();
        if !unknown.is_empty() {
            bail!("{}: unknown config keys {unknown:?}", path.display());
        }
    }
    Ok(parsed)
}

fn load_srf(spec: &str, hsi_bands: usize) -> Result<SpectralResponse> {
    if spec == "default3" {
        return Ok(SpectralResponse::default3(hsi_bands));
    }
    let srf = read_srf(spec).with_context(|| format!("reading SRF {spec}"))?;
    if srf.hsi_bands() != hsi_bands {
        bail!("SRF {spec} covers {} bands, cube has {hsi_bands}", srf.hsi_bands());
    }
    Ok(srf)
}

fn cube_at(path: &Path) -> Result<Cube> {
    read_cube(path).with_context(|| format!("reading {}", path.display()))
}

fn save_cube(path: &Path, cube: &Cube) -> Result<()> {
    write_cube(path, cube).with_context(|| format!("writing {}", path.display()))
}

const SAMPLE_FILES: [&str; 4] = ["gt.hsc", "lr.hsc", "msi.hsc", "up.hsc"];

fn write_sample(dir: &Path, s: &FusionSample) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut paths = Vec::new();
    for (name, cube) in SAMPLE_FILES.iter().zip([&s.gt, &s.lr, &s.msi, &s.up]) {
        let p = dir.join(name);
        save_cube(&p, cube)?;
        paths.push(p);
    }
    Ok(paths)
}

fn read_sample(dir: &Path) -> Result<FusionSample> {
    let [gt, lr, msi, up] = SAMPLE_FILES.map(|n| cube_at(&dir.join(n)));
    let (gt, lr, msi, up) = (gt?, lr?, msi?, up?);
    if lr.height() == 0 || gt.height() % lr.height() != 0 {
        bail!("{}: lr height {} does not divide gt height {}", dir.display(), lr.height(), gt.height());
    }
    let ratio = gt.height() / lr.height();
    FusionSample::new(gt, lr, msi, up, ratio).with_context(|| format!("sample in {}", dir.display()))
}

#[derive(Serialize)]
struct SimulateConfig<'a> {
    gt: String,
    ratio: usize,
    sigma: f64,
    srf: &'a str,
}

fn simulate_cmd(a: SimulateArgs) -> Result<i32> {
    let sigma = a.sigma.unwrap_or(a.ratio as f64 / 2.0);
    let mut m = ManifestBuilder::new(
        "simulate",
        SimulateConfig {
            gt: a.gt.to_string(),
            ratio: a.ratio,
            sigma,
            srf: &a.srf,
        },
    )?;
    if let GtSource::Synth { seed, .. } = a.gt {
        m.seed(seed);
    }
    let gt = a.gt.load()?;
    let srf = load_srf(&a.srf, gt.bands())?;
    let sample = simulate(&gt, a.ratio, sigma, &srf)?;
    m.input("gt", &a.gt).input("srf", &a.srf);
    for (name, p) in SAMPLE_FILES.iter().zip(write_sample(&a.out, &sample)?) {
        m.output(name.trim_end_matches(".hsc"), &p);
    }
    m.write(&a.out.join("manifest.json"))?;
    Ok(EXIT_OK)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

fn write_trace(path: &Path, first_step: u64, trace: &[f64]) -> Result<()> {
    let mut csv = String::from("step,loss\n");
    for (i, l) in trace.iter().enumerate() {
        csv.push_str(&format!("{},{l:e}\n", first_step + i as u64 + 1));
    }
    write_atomic(path, csv.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

fn train_cmd(a: TrainArgs) -> Result<i32> {
    let data = a.data.iter().map(|d| read_sample(d)).collect::<Result<Vec<_>>>()?;
    let mut trainer = match &a.resume {
        Some(ckpt) => {
            if a.config.is_some() || a.seed.is_some() {
                return Err(UsageError("--resume takes its config from the checkpoint".into()).into());
            }
            let ckpt = load_checkpoint(ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
            Trainer::resume(ckpt, &data)?
        }
        None => {
            let mut cfg: TrainConfig = read_json(a.config.as_deref())?;
            if let Some(seed) = a.seed {
                cfg.seed = seed;
            }
            Trainer::new(cfg, &data)?
        }
    };
    let mut m = ManifestBuilder::new("train", trainer.config())?;
    m.seed(trainer.config().seed);
    for (i, d) in a.data.iter().enumerate() {
        m.input(&format!("data{i}"), d.display());
    }
    if let Some(r) = &a.resume {
        m.input("resume", r.display());
    }
    log::info!("{} patches, {} steps", trainer.patch_count(), trainer.config().steps);

    let first_step = trainer.steps_done();
    let mut trace = Vec::new();
    let outcome = trainer.run(|_, _, loss| trace.push(loss));
    save_checkpoint(&a.out, &trainer.checkpoint()).with_context(|| format!("writing {}", a.out.display()))?;
    let trace_path = with_suffix(&a.out, ".loss.csv");
    write_trace(&trace_path, first_step, &trace)?;
    m.output("checkpoint", &a.out).output("loss_trace", &trace_path);
    m.write(&beside(&a.out))?;
    match outcome {
        Ok(_) => Ok(EXIT_OK),
        Err(e @ TrainError::NonFinite { .. }) => {
            log::error!("{e}; saved the last finite state at step {}", trainer.steps_done());
            Ok(EXIT_FAILURE)
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(Serialize)]
struct InferConfig<'a> {
    model: &'a FusformerConfig,
    ratio: usize,
    tile: usize,
    overlap: usize,
}

fn infer_cmd(a: InferArgs) -> Result<i32> {
    let ckpt = load_checkpoint(&a.ckpt).with_context(|| format!("loading {}", a.ckpt.display()))?;
    let ratio = ckpt.config.ratio;
    let lr = cube_at(&a.lr)?;
    let msi = cube_at(&a.msi)?;
    if (lr.height() * ratio, lr.width() * ratio) != (msi.height(), msi.width()) {
        bail!(
            "lr {}×{} at ratio {ratio} does not match msi {}×{}",
            lr.height(),
            lr.width(),
            msi.height(),
            msi.width()
        );
    }
    let mut m = ManifestBuilder::new(
        "infer",
        InferConfig {
            model: &ckpt.config.model,
            ratio,
            tile: a.tile,
            overlap: a.overlap,
        },
    )?;
    let up = upsample_bicubic(&lr, ratio)?;
    let pred = predict(&ckpt.params, &ckpt.config.model, &up, &msi, ratio, a.tile, a.overlap)?;
    save_cube(&a.out, &pred)?;
    m.input("ckpt", a.ckpt.display())
        .input("lr", a.lr.display())
        .input("msi", a.msi.display())
        .output("prediction", &a.out);
    m.write(&beside(&a.out))?;
    Ok(EXIT_OK)
}

/// 8-bit binary PGM, linearly scaled so the largest value maps to 255.
fn encode_pgm(width: usize, height: usize, values: &[f32]) -> Vec<u8> {
    let peak = values.iter().fold(0.0f32, |a, &v| a.max(v));
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(values.iter().map(|&v| {
        if peak > 0.0 {
            (v / peak * 255.0).round().clamp(0.0, 255.0) as u8
        } else {
            0
        }
    }));
    out
}

/// Writes `abs.hsc` (|pred - gt| per band), `mean_abs.hsc` (band mean,
/// one band) and PGM previews of both.
fn write_residuals(dir: &Path, pred: &Cube, gt: &Cube, m: &mut ManifestBuilder) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let (h, w, s) = gt.dims();
    let data = pred.data().iter().zip(gt.data()).map(|(a, b)| (a - b).abs()).collect();
    let abs = Cube::new(h, w, s, data)?;
    let mean = Cube::from_fn(h, w, 1, |i, j, _| {
        (0..s).map(|b| abs.get(i, j, b) as f64).sum::<f64>() as f32 / s as f32
    });
    for (name, cube) in [("abs", &abs), ("mean_abs", &mean)] {
        let p = dir.join(format!("{name}.hsc"));
        save_cube(&p, cube)?;
        m.output(name, &p);
    }
    let p = dir.join("mean_abs.pgm");
    write_atomic(&p, &encode_pgm(w, h, mean.band(0)))?;
    m.output("mean_abs_pgm", &p);
    for b in 0..s {
        let p = dir.join(format!("band_{b:03}.pgm"));
        write_atomic(&p, &encode_pgm(w, h, abs.band(b)))?;
    }
    m.output("band_pgm_dir", dir);
    Ok(())
}

#[derive(Serialize)]
struct EvalConfig {
    ratio: f64,
}

fn eval_cmd(a: EvalArgs) -> Result<i32> {
    let mut m = ManifestBuilder::new("eval", EvalConfig { ratio: a.ratio })?;
    let pred = cube_at(&a.pred)?;
    let gt = cube_at(&a.gt)?;
    let report = metrics::report(&pred, &gt, a.ratio)?;
    write_report(&a.out, &report)?;
    m.input("pred", a.pred.display()).input("gt", a.gt.display()).output("report", &a.out);
    if let Some(dir) = &a.residual {
        write_residuals(dir, &pred, &gt, &mut m)?;
    }
    m.write(&beside(&a.out))?;
    Ok(EXIT_OK)
}

fn write_report(path: &Path, report: &QualityReport) -> Result<()> {
    let mut text = report.to_json();
    text.push('\n');
    write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

fn params_cmd(a: ParamsArgs) -> Result<i32> {
    let cfg: TrainConfig = read_json(a.config.as_deref())?;
    cfg.model.validate()?;
    println!("{}", param_count(&cfg.model));
    Ok(EXIT_OK)
}

const GRAD_SEED: u64 = 11;
const GRAD_SIZE: usize = 4;
const GRAD_PER_TENSOR: usize = 2;
const PERM_TOKENS: usize = 16;
const PERM_TOL: f64 = 1e-5;
const ORACLE_TOL: f64 = 1e-6;
pub const ORACLE_SHAPES: [(usize, usize, usize); 3] = [(2, 2, 1), (4, 48, 6), (9, 48, 8)];
const IDENTITY_INPUTS: usize = 10;

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAILED"
    }
}

fn check_cmd(a: CheckArgs) -> Result<i32> {
    let none = !(a.grad || a.perm || a.oracle);
    let (grad, perm, oracle) = (a.all || none || a.grad, a.all || none || a.perm, a.all || none || a.oracle);
    let mut ok = true;
    if grad {
        for bits in [32, 64] {
            let r = verify::gradient_check(bits, GRAD_SEED, GRAD_SIZE, GRAD_PER_TENSOR)?;
            let (worst, pass) = (r.max_rel(), r.passed());
            eprintln!(
                "grad f{bits}: {} coords over {:?}, max rel err {worst:.3e} (tol {:.0e}) {}",
                r.coords.len(),
                r.groups(),
                r.tolerance,
                verdict(pass)
            );
            ok &= pass;
        }
    }
    if perm {
        let d = verify::permutation_check(GRAD_SEED, PERM_TOKENS)?;
        let pass = d <= PERM_TOL;
        eprintln!("perm: {PERM_TOKENS} tokens, max diff {d:.3e} (tol {PERM_TOL:.0e}) {}", verdict(pass));
        ok &= pass;
    }
    if oracle {
        for (n, f, heads) in ORACLE_SHAPES {
            let d = verify::attention_oracle_check(GRAD_SEED, n, f, heads)?;
            let pass = d <= ORACLE_TOL;
            eprintln!("attention n={n} F={f} heads={heads}: max diff {d:.3e} {}", verdict(pass));
            ok &= pass;
        }
        let exact = verify::residual_identity_check(GRAD_SEED, IDENTITY_INPUTS)?;
        let pass = exact == IDENTITY_INPUTS;
        eprintln!("residual identity: {exact}/{IDENTITY_INPUTS} bit-exact {}", verdict(pass));
        ok &= pass;
    }
    Ok(if ok { EXIT_OK } else { EXIT_FAILURE })
}

/// Training keys plus the data and inference settings of the ablation.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct AblateConfig {
    #[serde(flatten)]
    pub train: TrainConfig,
    pub train_gt: String,
    pub holdout_gt: String,
    pub srf: String,
    pub tile: usize,
    pub overlap: usize,
}

impl Default for AblateConfig {
    fn default() -> Self {
        AblateConfig {
            train: TrainConfig::default(),
            train_gt: "synth:7,96,96,31".into(),
            holdout_gt: "synth:8,96,96,31".into(),
            srf: "default3".into(),
            tile: 16,
            overlap: 8,
        }
    }
}

#[derive(Serialize)]
struct AblateSummary {
    #[serde(with = "inf_f64")]
    baseline_psnr: f64,
    #[serde(with = "inf_f64")]
    rls_on_psnr: f64,
    #[serde(with = "inf_f64")]
    rls_off_psnr: f64,
    #[serde(with = "inf_f64")]
    rls_on_minus_baseline: f64,
    #[serde(with = "inf_f64")]
    rls_on_minus_rls_off: f64,
}

fn load_sample(spec: &str, cfg: &AblateConfig) -> Result<FusionSample> {
    let src = parse_gt(spec).map_err(UsageError)?;
    let gt = src.load()?;
    let srf = load_srf(&cfg.srf, gt.bands())?;
    Ok(simulate(&gt, cfg.train.ratio, cfg.train.sigma, &srf)?)
}

fn ablate_cmd(a: AblateArgs) -> Result<i32> {
    let mut cfg: AblateConfig = read_json(a.config.as_deref())?;
    if let Some(seed) = a.seed {
        cfg.train.seed = seed;
    }
    let mut m = ManifestBuilder::new("ablate", &cfg)?;
    m.seed(cfg.train.seed).input("train_gt", &cfg.train_gt).input("holdout_gt", &cfg.holdout_gt);
    let data = load_sample(&cfg.train_gt, &cfg)?;
    let holdout = load_sample(&cfg.holdout_gt, &cfg)?;
    let result = ablate_rls(&cfg.train, std::slice::from_ref(&data), &holdout, cfg.tile, cfg.overlap)?;

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_report(&a.out.join("baseline.json"), &result.baseline)?;
    m.output("baseline", &a.out.join("baseline.json"));
    for (name, run) in [("rls_on", &result.rls_on), ("rls_off", &result.rls_off)] {
        let files = [
            ("checkpoint", a.out.join(format!("{name}.ckpt"))),
            ("report", a.out.join(format!("{name}.json"))),
            ("trace", a.out.join(format!("{name}.loss.csv"))),
            ("prediction", a.out.join(format!("{name}.hsc"))),
        ];
        save_checkpoint(&files[0].1, &run.checkpoint)?;
        write_report(&files[1].1, &run.report)?;
        write_trace(&files[2].1, 0, &run.trace)?;
        save_cube(&files[3].1, &run.prediction)?;
        for (kind, p) in &files {
            m.output(&format!("{name}_{kind}"), p);
        }
    }
    let p = |r: &QualityReport| r.psnr;
    let summary = AblateSummary {
        baseline_psnr: p(&result.baseline),
        rls_on_psnr: p(&result.rls_on.report),
        rls_off_psnr: p(&result.rls_off.report),
        rls_on_minus_baseline: p(&result.rls_on.report) - p(&result.baseline),
        rls_on_minus_rls_off: p(&result.rls_on.report) - p(&result.rls_off.report),
    };
    log::info!(
        "PSNR baseline {:.3} dB, rls on {:.3} dB, rls off {:.3} dB",
        p(&result.baseline),
        p(&result.rls_on.report),
        p(&result.rls_off.report)
    );
    write_json(&a.out.join("summary.json"), &summary)?;
    m.output("summary", &a.out.join("summary.json"));
    m.write(&a.out.join("manifest.json"))?;
    Ok(EXIT_OK)
}
