use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use super::artifacts::{append_csv, write_csv, NormalizationRecord, OutputLock, RunManifest};
use super::config::{self, AblateConfig, EvaluateConfig, GenerateConfig, InferConfig};
use super::ingest::{self, IngestedSequence};
use crate::error::{Error, Result};
use crate::eval::{default_thresholds, evaluate_pairs, evaluate_tracking};
use crate::geometry::io::{read_corr, read_xyz, write_corr, write_xyz};
use crate::infer::{fit_latents, forecast as forecast_frame, track as track_frames, track_with_bank, InferenceConfig};
use crate::optim::{derive_seed, load_checkpoint, save_checkpoint, save_latents, TrainConfig, TrainedModel, Trainer};
use crate::synmotion::{
    frame_file, load_sequence_dir, make_dataset, numbered_files, DatasetRequest, GroundTruthSequence,
};
use crate::tcd::DescriptorMode;

/// Global flags shared by every subcommand.
#[derive(Debug, Clone)]
pub struct Context {
    pub seed: Option<u64>,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub quiet: bool,
}

impl Context {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }

    fn load<T: serde::de::DeserializeOwned + Default>(&self) -> Result<T> {
        config::load(self.config.as_deref())
    }

    fn manifest(&self, command: &str, seed: u64, config: &impl Serialize) -> RunManifest {
        let mut m = RunManifest::new(command, seed, config);
        if let Some(c) = &self.config {
            m.input("config", c);
        }
        m.input("out", &self.out);
        m
    }
}

fn finish(ctx: &Context, mut manifest: RunManifest, start: Instant) -> Result<()> {
    manifest.wall_clock_seconds = start.elapsed().as_secs_f64();
    manifest.write(&ctx.out)
}

fn relative(path: &Path, root: &Path) -> String {
    path.strip_prefix(root).unwrap_or(path).display().to_string()
}

pub fn generate(ctx: &Context) -> Result<()> {
    let start = Instant::now();
    let mut cfg: GenerateConfig = ctx.load()?;
    if let Some(seed) = ctx.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let _lock = OutputLock::acquire(&ctx.out)?;
    let request = DatasetRequest {
        specs: cfg.specs(),
        corruptions: cfg.corruptions(),
        windows: cfg.windows,
    };
    let dirs = make_dataset(&request, &ctx.out)?;
    ctx.say(format!(
        "wrote {} sequence directories to {}",
        dirs.len(),
        ctx.out.display()
    ));
    let mut manifest = ctx.manifest("generate", cfg.seed, &cfg);
    manifest.outputs = dirs.iter().map(|d| relative(d, &ctx.out)).collect();
    finish(ctx, manifest, start)
}

fn unit_frames(seqs: &[IngestedSequence]) -> Vec<Vec<crate::geometry::PointCloud>> {
    seqs.iter()
        .flat_map(|s| s.units.iter().map(|u| u.frames.clone()))
        .collect()
}

fn normalization_records(seqs: &[IngestedSequence], root: &Path) -> Vec<NormalizationRecord> {
    seqs.iter()
        .map(|s| NormalizationRecord::new(relative(&s.dir, root), &s.normalization))
        .collect()
}

/// Runs the optimiser, writing the log and checkpoints into `dir`.
fn fit_model(
    ctx: &Context,
    seqs: &[IngestedSequence],
    cfg: &TrainConfig,
    resume: Option<TrainedModel>,
    dir: &Path,
) -> Result<(TrainedModel, Vec<String>)> {
    let data = unit_frames(seqs);
    let resuming = resume.is_some();
    let mut trainer = match resume {
        Some(model) => {
            if model.mode != cfg.mode {
                return Err(Error::ConfigMismatch(format!(
                    "checkpoint was trained in {:?} mode but the config asks for {:?}",
                    model.mode, cfg.mode
                )));
            }
            Trainer::resume(data, cfg.clone(), model)?
        }
        None => Trainer::new(data, cfg.clone())?,
    };
    ctx.say(format!(
        "training on {} units (batch {}) for {} iterations",
        seqs.iter().map(|s| s.units.len()).sum::<usize>(),
        trainer.batch_size(),
        cfg.iterations
    ));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut outputs = Vec::new();
    let mut rows = Vec::with_capacity(cfg.iterations);
    let report_every = (cfg.iterations / 10).max(1);
    for k in 1..=cfg.iterations {
        let log = trainer.step()?;
        rows.push(vec![
            log.iteration.to_string(),
            log.loss.to_string(),
            log.omega.to_string(),
        ]);
        if k == 1 || k % report_every == 0 {
            ctx.say(format!(
                "iteration {:>6}  loss {:.6}  omega {:.6}",
                log.iteration, log.loss, log.omega
            ));
        }
        if cfg.checkpoint_every > 0 && k % cfg.checkpoint_every == 0 && k < cfg.iterations {
            let path = dir.join(format!("checkpoint_{:06}.ckpt", log.iteration));
            save_checkpoint(&path, &trainer.model())?;
            outputs.push(path);
        }
    }
    let log_path = dir.join("train_log.csv");
    if resuming {
        append_csv(&log_path, "iteration,loss,omega", rows)?;
    } else {
        write_csv(&log_path, "iteration,loss,omega", rows)?;
    }
    let model = trainer.into_model();
    let ckpt = dir.join("model.ckpt");
    save_checkpoint(&ckpt, &model)?;
    outputs.push(log_path);
    outputs.push(ckpt);
    let outputs = outputs.iter().map(|p| relative(p, &ctx.out)).collect();
    Ok((model, outputs))
}

fn train_config(ctx: &Context, mut cfg: TrainConfig) -> Result<TrainConfig> {
    if let Some(seed) = ctx.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn train(ctx: &Context, dataset: &Path, resume: Option<&Path>) -> Result<()> {
    let start = Instant::now();
    let cfg = train_config(ctx, ctx.load()?)?;
    let previous = resume.map(load_checkpoint).transpose()?;
    let seqs = ingest::training_units(dataset, cfg.window, cfg.points_per_frame, cfg.seed)?;
    let _lock = OutputLock::acquire(&ctx.out)?;
    let (model, outputs) = fit_model(ctx, &seqs, &cfg, previous, &ctx.out)?;
    ctx.say(format!(
        "finished at iteration {} with omega {:.6}",
        model.iterations_done, model.omega
    ));
    let mut manifest = ctx.manifest("train", cfg.seed, &cfg);
    manifest.input("dataset", dataset);
    if let Some(r) = resume {
        manifest.input("resume", r);
    }
    manifest.outputs = outputs;
    manifest.normalizations = normalization_records(&seqs, dataset);
    finish(ctx, manifest, start)
}

fn infer_config(ctx: &Context) -> Result<InferConfig> {
    let mut cfg: InferConfig = ctx.load()?;
    if let Some(seed) = ctx.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn track(ctx: &Context, sequence: &Path, checkpoint: &Path) -> Result<()> {
    let start = Instant::now();
    let cfg = infer_config(ctx)?;
    let model = load_checkpoint(checkpoint)?;
    let (frames, norm) = ingest::inference_frames(sequence)?;
    let _lock = OutputLock::acquire(&ctx.out)?;
    let fit = fit_latents(&model, &frames, &cfg)?;
    ctx.say(format!(
        "fitted {} frames: loss {:.6} -> {:.6}",
        frames.len(),
        fit.initial_loss,
        fit.final_loss
    ));
    let result = track_with_bank(&model, &fit.bank, &frames)?;
    let mut outputs = Vec::new();
    for (i, (moved, map)) in result.transformed.iter().zip(&result.maps).enumerate() {
        let xyz = frame_file(&ctx.out, "transformed", i, "xyz");
        write_xyz(&xyz, &norm.invert(moved))?;
        let corr = frame_file(&ctx.out, "pred", i, "corr");
        write_corr(&corr, map)?;
        outputs.push(xyz);
        outputs.push(corr);
    }
    let metrics = ctx.out.join("metrics.csv");
    write_csv(
        &metrics,
        "pair_index,chamfer",
        result
            .chamfer
            .iter()
            .enumerate()
            .map(|(i, c)| vec![(i + 1).to_string(), c.to_string()]),
    )?;
    let fit_log = ctx.out.join("fit_log.csv");
    write_csv(
        &fit_log,
        "iteration,loss",
        fit.history
            .iter()
            .enumerate()
            .map(|(i, l)| vec![(i + 1).to_string(), l.to_string()]),
    )?;
    let latents = ctx.out.join("fit.latents");
    save_latents(&latents, &fit.bank)?;
    outputs.extend([metrics, fit_log, latents]);
    if cfg.forecast {
        let observed = &frames[frames.len().saturating_sub(3)..];
        if observed.len() == 3 {
            let path = ctx.out.join("forecast.xyz");
            write_xyz(&path, &norm.invert(&forecast_frame(&model, observed, &cfg)?))?;
            outputs.push(path);
        } else {
            log::warn!("forecast requested but the sequence has only {} frames", frames.len());
        }
    }

    let mut manifest = ctx.manifest("track", cfg.seed, &cfg);
    manifest.input("sequence", sequence);
    manifest.input("checkpoint", checkpoint);
    manifest.outputs = outputs.iter().map(|p| relative(p, &ctx.out)).collect();
    manifest.normalizations = vec![NormalizationRecord::new(sequence.display().to_string(), &norm)];
    finish(ctx, manifest, start)
}

pub fn forecast(ctx: &Context, sequence: &Path, checkpoint: &Path) -> Result<()> {
    let start = Instant::now();
    let cfg = infer_config(ctx)?;
    let model = load_checkpoint(checkpoint)?;
    let (frames, norm) = ingest::inference_frames(sequence)?;
    if frames.len() != 3 {
        return Err(Error::Protocol(format!(
            "forecasting needs exactly 3 observed frames, {} has {}",
            sequence.display(),
            frames.len()
        )));
    }
    let _lock = OutputLock::acquire(&ctx.out)?;
    let predicted = forecast_frame(&model, &frames, &cfg)?;
    let path = ctx.out.join("forecast.xyz");
    write_xyz(&path, &norm.invert(&predicted))?;
    ctx.say(format!("wrote {}", path.display()));
    let mut manifest = ctx.manifest("forecast", cfg.seed, &cfg);
    manifest.input("sequence", sequence);
    manifest.input("checkpoint", checkpoint);
    manifest.outputs = vec![relative(&path, &ctx.out)];
    manifest.normalizations = vec![NormalizationRecord::new(sequence.display().to_string(), &norm)];
    finish(ctx, manifest, start)
}

pub fn evaluate(ctx: &Context, result: &Path, ground_truth: &Path) -> Result<()> {
    let start = Instant::now();
    let cfg: EvaluateConfig = ctx.load()?;
    let gt = load_sequence_dir(ground_truth)?.ground_truth()?;
    let pairs = numbered_files(result, "transformed", "xyz")?;
    let maps = numbered_files(result, "pred", "corr")?;
    if pairs != maps {
        return Err(Error::Protocol(format!(
            "{}: {pairs} transformed clouds but {maps} correspondence files",
            result.display()
        )));
    }
    let transformed = (0..pairs)
        .map(|i| read_xyz(&frame_file(result, "transformed", i, "xyz"), i + 1))
        .collect::<Result<Vec<_>>>()?;
    let maps = (0..pairs)
        .map(|i| read_corr(&frame_file(result, "pred", i, "corr"), i, i + 1))
        .collect::<Result<Vec<_>>>()?;
    let report = evaluate_pairs(&transformed, &maps, &gt, &cfg.thresholds)?;
    let _lock = OutputLock::acquire(&ctx.out)?;
    let metrics = ctx.out.join("metrics.csv");
    write_csv(
        &metrics,
        "pair,chamfer,corr_l2",
        report.pairs.iter().enumerate().map(|(i, r)| {
            vec![
                (i + 1).to_string(),
                r.chamfer.to_string(),
                r.correspondence_l2.to_string(),
            ]
        }),
    )?;
    let curve = ctx.out.join("accuracy_curve.csv");
    write_csv(
        &curve,
        "threshold,fraction",
        report
            .mean
            .accuracy_curve
            .iter()
            .map(|(t, f)| vec![t.to_string(), f.to_string()]),
    )?;
    let summary = ctx.out.join("summary.json");
    let text = serde_json::to_string_pretty(&report).expect("report serialises") + "\n";
    std::fs::write(&summary, text).map_err(|e| Error::io(&summary, e))?;
    ctx.say(format!(
        "mean chamfer {:.6}  mean correspondence l2 {:.6} over {} pairs",
        report.mean.chamfer,
        report.mean.correspondence_l2,
        report.pairs.len()
    ));
    let mut manifest = ctx.manifest("evaluate", 0, &cfg);
    manifest.input("result", result);
    manifest.input("ground_truth", ground_truth);
    manifest.outputs = [metrics, curve, summary]
        .iter()
        .map(|p| relative(p, &ctx.out))
        .collect();
    finish(ctx, manifest, start)
}

/// Mean Chamfer and correspondence ℓ2 of `model` over `units`, averaged over
/// units. With `refit_iterations == 0` the trained states are used.
pub fn score_model(
    model: &TrainedModel,
    units: &[&GroundTruthSequence],
    refit_iterations: usize,
    refit_learning_rate: f64,
) -> Result<(f64, f64)> {
    let thresholds = default_thresholds();
    let mut chamfer = 0.0;
    let mut l2 = 0.0;
    for (j, unit) in units.iter().enumerate() {
        let result = if refit_iterations == 0 {
            let bank = model
                .banks
                .get(j)
                .ok_or_else(|| Error::Shape(format!("model has no state bank for unit {j}")))?;
            track_with_bank(model, bank, &unit.frames)?
        } else {
            let cfg = InferenceConfig {
                iterations: refit_iterations,
                learning_rate: refit_learning_rate,
                seed: derive_seed(model.config.seed, j as u64 + 1),
                ..InferenceConfig::default()
            };
            track_frames(model, &unit.frames, &cfg)?
        };
        let report = evaluate_tracking(&result, unit, &thresholds)?;
        chamfer += report.mean.chamfer;
        l2 += report.mean.correspondence_l2;
    }
    let n = units.len().max(1) as f64;
    Ok((chamfer / n, l2 / n))
}

pub fn ablate(ctx: &Context, dataset: &Path) -> Result<()> {
    let start = Instant::now();
    let mut cfg: AblateConfig = ctx.load()?;
    cfg.train = train_config(ctx, cfg.train)?;
    let seqs = ingest::training_units(dataset, cfg.train.window, cfg.train.points_per_frame, cfg.train.seed)?;
    if let Some(s) = seqs.iter().find(|s| !s.has_ground_truth) {
        return Err(Error::Protocol(format!(
            "{} has no ground-truth correspondences to score against",
            s.dir.display()
        )));
    }
    let units: Vec<&GroundTruthSequence> = seqs.iter().flat_map(|s| &s.units).collect();
    let _lock = OutputLock::acquire(&ctx.out)?;
    let mut rows = Vec::new();
    let mut outputs = Vec::new();
    for (name, mode) in [
        ("temporal", DescriptorMode::Temporal),
        ("independent", DescriptorMode::Independent),
    ] {
        ctx.say(format!("== {name} descriptors"));
        let tc = TrainConfig {
            mode,
            ..cfg.train.clone()
        };
        let (model, files) = fit_model(ctx, &seqs, &tc, None, &ctx.out.join(name))?;
        outputs.extend(files);
        let (chamfer, l2) = score_model(&model, &units, cfg.refit_iterations, cfg.refit_learning_rate)?;
        ctx.say(format!("{name}: chamfer {chamfer:.6}  correspondence l2 {l2:.6}"));
        rows.push(vec![name.to_string(), chamfer.to_string(), l2.to_string()]);
    }
    let table = ctx.out.join("ablation.csv");
    write_csv(&table, "model,chamfer,corr_l2", rows)?;
    outputs.push(relative(&table, &ctx.out));
    let mut manifest = ctx.manifest("ablate", cfg.train.seed, &cfg);
    manifest.input("dataset", dataset);
    manifest.outputs = outputs;
    manifest.normalizations = normalization_records(&seqs, dataset);
    finish(ctx, manifest, start)
}
