use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use rayon::prelude::*;

use pcg_core::dsp::{canonical_filter, preprocess_dataset, preprocess_recording, write_segment};
use pcg_core::metrics::{
    aggregate_folds, compute_metrics, confusion, metrics_csv, parse_metrics_csv, render_report,
    Metric, ReportFold,
};
use pcg_core::nn::{build_model, image_tensor, Checkpoint, Model, ModelConfig, Preset};
use pcg_core::signal_io::{build_manifest, build_pascal_manifest, load_wav, DatasetKind, Label};
use pcg_core::spectrogram::{read_spectrogram_dir, segment_spectrogram, write_spectrogram, SpectrogramImage};
use pcg_core::synth::{synth_corpus, write_physionet_dir, SynthConfig};
use pcg_core::training::{
    epoch_csv, reproduction_lines, run_study1, run_study2, run_study3_transfer, StudyConfig,
    StudyKind, StudyResult, TrainOutcome,
};
use pcg_core::{CANONICAL_RATE, SEGMENT_LEN};

use crate::failure::Failure;
use crate::{DatasetArg, StudyArgs};

const SMOKE_RECORDINGS: usize = 16;

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Failure::input(anyhow!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| Failure::input(anyhow!("{}: {e}", path.display())))
}

fn echo(entries: &[(String, String)]) -> String {
    entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

fn fresh_dir(dir: &Path) -> Result<(), Failure> {
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| Failure::input(anyhow!("{}: {e}", dir.display())))?;
    }
    fs::create_dir_all(dir).map_err(|e| Failure::input(anyhow!("{}: {e}", dir.display())))
}

pub fn prepare(root: &Path, dataset: DatasetArg, cache: &Path, smoke: bool) -> Result<(), Failure> {
    if !root.is_dir() {
        return Err(Failure::input(anyhow!("{}: no such directory", root.display())));
    }
    let mut manifest = match dataset {
        DatasetArg::Physionet => build_manifest(&[root], DatasetKind::PhysioNet)?,
        DatasetArg::Pascal => build_pascal_manifest(root)?,
        DatasetArg::Combined => {
            return Err(Failure::input(anyhow!(
                "prepare physionet and pascal separately; `combined` reads both caches"
            )))
        }
    };
    if manifest.is_empty() {
        return Err(Failure::input(anyhow!("no recordings found under {}", root.display())));
    }
    if smoke {
        manifest.entries.truncate(SMOKE_RECORDINGS);
    }
    log::info!("{} recordings listed under {}", manifest.len(), root.display());
    let out = preprocess_dataset(&manifest);
    for f in &out.failures {
        eprintln!("skipped {}: {}", f.path.display(), f.error);
    }
    if out.segments.is_empty() {
        return Err(Failure::contract(anyhow!(
            "no usable segments: {} recording(s) failed, {} shorter than 8 s",
            out.failures.len(),
            out.discarded
        )));
    }

    let dir = cache.join(dataset.name());
    let (seg_dir, spec_dir) = (dir.join("segments"), dir.join("spectrograms"));
    fresh_dir(&seg_dir)?;
    fresh_dir(&spec_dir)?;
    out.segments
        .par_iter()
        .try_for_each(|seg| -> Result<(), Failure> {
            write_segment(&seg_dir, seg)?;
            write_spectrogram(&spec_dir, &segment_spectrogram(seg)?)?;
            Ok(())
        })?;
    manifest.write_csv(dir.join("manifest.csv"))?;

    let (normal, abnormal) = out.counts();
    let config = vec![
        ("root".to_string(), root.display().to_string()),
        ("dataset".into(), dataset.name().into()),
        ("cache".into(), cache.display().to_string()),
        ("smoke".into(), smoke.to_string()),
        ("sample_rate".into(), CANONICAL_RATE.to_string()),
        ("segment_samples".into(), SEGMENT_LEN.to_string()),
        ("recordings".into(), manifest.len().to_string()),
        ("failed_recordings".into(), out.failures.len().to_string()),
        ("short_recordings".into(), out.discarded.to_string()),
        ("segments".into(), out.segments.len().to_string()),
    ];
    write(&dir.join("prepare.txt"), &echo(&config))?;
    println!("{} spectrograms ({normal} normal / {abnormal} abnormal)", normal + abnormal);
    Ok(())
}

fn cached_images(cache: &Path, name: &str) -> Result<Vec<SpectrogramImage>, Failure> {
    let dir = cache.join(name).join("spectrograms");
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    Ok(read_spectrogram_dir(&dir)?)
}

/// Cached images for a dataset; `Ok(None)` when nothing is cached.
fn load_dataset(cache: &Path, dataset: DatasetArg) -> Result<Option<Vec<SpectrogramImage>>, Failure> {
    let images = match dataset {
        DatasetArg::Combined => {
            let mut a = cached_images(cache, "physionet")?;
            a.extend(cached_images(cache, "pascal")?);
            a
        }
        d => cached_images(cache, d.name())?,
    };
    Ok((!images.is_empty()).then_some(images))
}

fn synthetic_images(per_class: usize, seed: u64) -> Result<Vec<SpectrogramImage>, Failure> {
    let filter = canonical_filter();
    let mut images = Vec::new();
    for rec in synth_corpus(&SynthConfig::default(), per_class, seed) {
        for seg in preprocess_recording(&rec, &filter)? {
            images.push(segment_spectrogram(&seg)?);
        }
    }
    Ok(images)
}

fn study_images(
    cache: &Path,
    dataset: DatasetArg,
    smoke: bool,
    seed: u64,
) -> Result<(Vec<SpectrogramImage>, String), Failure> {
    match load_dataset(cache, dataset)? {
        Some(images) => Ok((images, format!("{} cache", dataset.name()))),
        None if smoke => Ok((synthetic_images(SMOKE_RECORDINGS, seed)?, "synthetic".into())),
        None => Err(Failure::input(anyhow!(
            "no cached spectrograms for {} under {}; run `pcg prepare` first",
            dataset.name(),
            cache.display()
        ))),
    }
}

fn resolve(kind: StudyKind, args: &StudyArgs) -> Result<StudyConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::input(anyhow!("{}: {e}", path.display())))?;
            let cfg = StudyConfig::parse(&text, path)?;
            if cfg.study != kind {
                return Err(Failure::input(anyhow!(
                    "{} configures study {}, but this command runs study {kind}",
                    path.display(),
                    cfg.study
                )));
            }
            cfg
        }
        None => StudyConfig::defaults(kind),
    };
    if args.smoke {
        cfg = cfg.smoke();
    }
    let mut set = |key: &str, value: Option<String>| -> Result<(), Failure> {
        match value {
            Some(v) => cfg.set(key, &v).map_err(|e| Failure::input(anyhow!(e))),
            None => Ok(()),
        }
    };
    set("epochs", args.epochs.map(|v| v.to_string()))?;
    set("batch_size", args.batch_size.map(|v| v.to_string()))?;
    set("folds", args.folds.map(|v| v.to_string()))?;
    set("seed", args.seed.map(|v| v.to_string()))?;
    set("threshold", args.threshold.map(|v| v.to_string()))?;
    set("learning_rate", args.learning_rate.map(|v| v.to_string()))?;
    set("width_divisor", args.width_divisor.map(|v| v.to_string()))?;
    set("class_weights", args.class_weights.clone())?;
    cfg.cache_dir = Some(args.cache.cache.clone());
    let study_dir = |root: &Path| root.join(format!("study{kind}"));
    cfg.output_dir = match (&args.out, cfg.output_dir.take()) {
        (Some(out), _) => Some(study_dir(out)),
        (None, Some(dir)) => Some(dir),
        (None, None) => Some(study_dir(Path::new("pcg-out"))),
    };
    if cfg.folds == 0 || cfg.width_divisor == 0 {
        return Err(Failure::input(anyhow!("folds and width_divisor must be positive")));
    }
    if !(cfg.threshold > 0.0 && cfg.threshold < 1.0) {
        return Err(Failure::input(anyhow!("threshold must lie in (0, 1)")));
    }
    Ok(cfg)
}

/// Writes per-fold checkpoints and remembers the fold with the best
/// validation accuracy per preset.
struct CheckpointWriter {
    dir: PathBuf,
    best: BTreeMap<&'static str, (f64, Checkpoint)>,
    error: Option<Failure>,
}

impl CheckpointWriter {
    fn new(dir: PathBuf) -> CheckpointWriter {
        CheckpointWriter { dir, best: BTreeMap::new(), error: None }
    }

    fn accept(&mut self, preset: Preset, fold: usize, out: &TrainOutcome) {
        if self.error.is_some() {
            return;
        }
        log::info!(
            "{preset} fold {fold}: {} epochs, best epoch {:?}",
            out.records.len(),
            out.best_epoch.map(|e| e + 1)
        );
        let stem = format!("{}_fold{fold}", preset.name());
        let res = fs::create_dir_all(&self.dir)
            .map_err(Failure::from)
            .and_then(|_| Ok(out.best_checkpoint.save(&self.dir.join(format!("{stem}_best.pcgm")))?))
            .and_then(|_| Ok(out.final_checkpoint.save(&self.dir.join(format!("{stem}_final.pcgm")))?));
        if let Err(e) = res {
            self.error = Some(e);
            return;
        }
        let score = out
            .best_epoch
            .and_then(|e| out.records[e].valid_accuracy)
            .unwrap_or(f64::NEG_INFINITY);
        let better = self.best.get(preset.name()).is_none_or(|(s, _)| score > *s);
        if better {
            self.best.insert(preset.name(), (score, out.best_checkpoint.clone()));
        }
    }
}

fn write_outputs(
    result: &StudyResult,
    cfg: &StudyConfig,
    data_source: &str,
    writer: CheckpointWriter,
) -> Result<(), Failure> {
    if let Some(e) = writer.error {
        return Err(e);
    }
    let out = cfg.output_dir.clone().expect("resolved output dir");
    let mut entries = cfg.entries();
    entries.push(("data".into(), data_source.into()));
    write(&out.join("config.txt"), &echo(&entries))?;

    let mut report = String::new();
    let mut summary = String::from(
        "preset,folds,accuracy,sensitivity,specificity,precision,f1,train_accuracy,overfitting\n",
    );
    let fmt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.6}"));
    let show = |v: Option<f64>| v.map_or("undefined".to_string(), |v| format!("{v:.4}"));
    let reduced = is_reduced(cfg.study, cfg.width_divisor, cfg.epochs, cfg.folds);
    for v in &result.variants {
        let folds: Vec<ReportFold> = v.folds.iter().map(|f| f.best.clone()).collect();
        let title = format!("study {} / {}", result.study, v.preset.name());
        report.push_str(&render_report(&title, &entries, &folds, &v.aggregate));
        let verdict = reproduction_lines(result.study, v.preset, &v.aggregate);
        if !verdict.is_empty() {
            report.push_str("\n## published figures (reproduced = within 3 pp)\n");
            if reduced {
                report.push_str(REDUCED_NOTE);
                report.push('\n');
            }
            for line in &verdict {
                report.push_str(line);
                report.push('\n');
            }
        }
        report.push('\n');
        write(&out.join(format!("metrics_{}.csv", v.preset.name())), &metrics_csv(&folds))?;
        let last: Vec<ReportFold> = v.folds.iter().map(|f| f.last.clone()).collect();
        write(&out.join(format!("metrics_{}_final.csv", v.preset.name())), &metrics_csv(&last))?;
        write(&out.join(format!("epochs_{}.csv", v.preset.name())), &epoch_csv(&v.folds))?;
        summary.push_str(&format!(
            "{},{},{},{},{}\n",
            v.preset.name(),
            v.folds.len(),
            Metric::ALL.iter().map(|&m| fmt(v.aggregate.mean.get(m))).collect::<Vec<_>>().join(","),
            fmt(v.mean_train_accuracy),
            v.overfitting
        ));
        println!(
            "{:<5} accuracy {} sensitivity {} specificity {} precision {} f1 {}{}",
            v.preset.name(),
            show(v.aggregate.mean.accuracy),
            show(v.aggregate.mean.sensitivity),
            show(v.aggregate.mean.specificity),
            show(v.aggregate.mean.precision),
            show(v.aggregate.mean.f1),
            if v.overfitting { "  (overfitting)" } else { "" }
        );
    }
    write(&out.join("report.txt"), &report)?;
    write(&out.join("summary.csv"), &summary)?;
    for (name, (_, ck)) in &writer.best {
        ck.save(&out.join(format!("{name}.pcgm")))?;
    }
    println!("wrote {}", out.display());
    Ok(())
}

const REDUCED_NOTE: &str = "reduced configuration (narrow layers or fewer folds/epochs): indicative only";

/// True when a run is smaller than the published setup, so comparing it with
/// the published figures says little.
fn is_reduced(study: StudyKind, width_divisor: usize, epochs: usize, folds: usize) -> bool {
    let d = StudyConfig::defaults(study);
    width_divisor != 1 || epochs < d.epochs || folds < d.folds
}

fn print_config(cfg: &StudyConfig, data_source: &str) {
    println!("# resolved configuration");
    for (k, v) in cfg.entries() {
        println!("# {k} = {v}");
    }
    println!("# data = {data_source}");
}

pub fn train(study: u8, preset: Option<&str>, args: &StudyArgs) -> Result<(), Failure> {
    let kind = match study {
        1 => StudyKind::Sweep,
        2 => StudyKind::Combined,
        other => {
            return Err(Failure::input(anyhow!(
                "`train` runs study 1 or 2 (got {other}); use `transfer` for study 3"
            )))
        }
    };
    let mut cfg = resolve(kind, args)?;
    if let Some(p) = preset {
        cfg.set("presets", p).map_err(|e| Failure::input(anyhow!(e)))?;
    }
    let dataset = match kind {
        StudyKind::Combined => DatasetArg::Combined,
        _ => DatasetArg::Physionet,
    };
    let (images, source) = study_images(&args.cache.cache, dataset, args.smoke, cfg.seed)?;
    print_config(&cfg, &source);
    let mut writer = CheckpointWriter::new(cfg.output_dir.clone().unwrap().join("checkpoints"));
    let mut sink = |p: Preset, k: usize, o: &TrainOutcome| writer.accept(p, k, o);
    let result = match kind {
        StudyKind::Combined => run_study2(&images, &cfg, &mut sink)?,
        _ => run_study1(&images, &cfg, &mut sink)?,
    };
    write_outputs(&result, &cfg, &source, writer)
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, Failure> {
    Ok(Checkpoint::load(path)?)
}

pub fn transfer(source: &Path, freeze: Option<&str>, args: &StudyArgs) -> Result<(), Failure> {
    let mut cfg = resolve(StudyKind::Transfer, args)?;
    if let Some(f) = freeze {
        cfg.set("freeze", f).map_err(|e| Failure::input(anyhow!(e)))?;
    }
    cfg.source_checkpoint = Some(source.to_path_buf());
    let ck = load_checkpoint(source)?;
    let (images, data) = study_images(&args.cache.cache, DatasetArg::Pascal, args.smoke, cfg.seed)?;
    print_config(&cfg, &data);
    let mut writer = CheckpointWriter::new(cfg.output_dir.clone().unwrap().join("checkpoints"));
    let mut sink = |p: Preset, k: usize, o: &TrainOutcome| writer.accept(p, k, o);
    let result = run_study3_transfer(&images, &ck, &cfg, &cfg.transfer_config(), &mut sink)?;
    write_outputs(&result, &cfg, &data, writer)
}

fn check_input_shape(model: &Model, rows: usize, cols: usize) -> Result<(), Failure> {
    if model.config.input_shape != [1, rows, cols] {
        return Err(Failure::contract(anyhow!(
            "checkpoint expects {:?} inputs, images are 1x{rows}x{cols}",
            model.config.input_shape
        )));
    }
    Ok(())
}

pub fn evaluate(
    checkpoint: &Path,
    dataset: DatasetArg,
    cache: &Path,
    threshold: f64,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let ck = load_checkpoint(checkpoint)?;
    let images = load_dataset(cache, dataset)?.ok_or_else(|| {
        Failure::input(anyhow!(
            "no cached spectrograms for {} under {}",
            dataset.name(),
            cache.display()
        ))
    })?;
    check_input_shape(&ck.model, images[0].rows, images[0].cols)?;
    let probs = images
        .par_iter()
        .map(|img| ck.model.predict(&image_tensor(img)))
        .collect::<Result<Vec<_>, _>>()?;
    let labels = images
        .iter()
        .map(|i| i.label.ok_or_else(|| Failure::contract(anyhow!("image `{}` has no label", i.id))))
        .collect::<Result<Vec<Label>, _>>()?;
    let cm = confusion(&probs, &labels, threshold).map_err(Failure::internal)?;
    let fold = ReportFold { fold: 0, confusion: cm, metrics: compute_metrics(&cm) };
    let agg = aggregate_folds(&[fold.metrics]).map_err(Failure::internal)?;
    let config = vec![
        ("checkpoint".to_string(), checkpoint.display().to_string()),
        ("dataset".into(), dataset.name().into()),
        ("cache".into(), cache.display().to_string()),
        ("threshold".into(), threshold.to_string()),
        ("images".into(), images.len().to_string()),
        ("frozen_layers".into(), ck.model.frozen_layers().join(",")),
    ];
    let text = render_report("evaluation", &config, &[fold], &agg);
    print!("{text}");
    if let Some(path) = out {
        write(path, &text)?;
    }
    Ok(())
}

pub fn predict(checkpoint: &Path, wav: &Path, threshold: f64) -> Result<(), Failure> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Failure::input(anyhow!("threshold must lie in (0, 1)")));
    }
    let ck = load_checkpoint(checkpoint)?;
    let rec = load_wav(wav)?;
    let segments = preprocess_recording(&rec, &canonical_filter())?;
    println!("# checkpoint = {}", checkpoint.display());
    println!("# wav = {}", wav.display());
    println!("# threshold = {threshold}");
    if segments.is_empty() {
        return Err(Failure::contract(anyhow!(
            "recording too short: {:.2} s after resampling, at least {} s needed",
            rec.duration_secs(),
            SEGMENT_LEN as u32 / CANONICAL_RATE
        )));
    }
    let mut abnormal = 0;
    for seg in &segments {
        let img = segment_spectrogram(seg)?;
        check_input_shape(&ck.model, img.rows, img.cols)?;
        let p = ck.model.predict(&image_tensor(&img))?;
        if p >= threshold {
            abnormal += 1;
        }
        println!("segment {}: {p:.4}", seg.index);
    }
    let n = segments.len();
    let verdict = if 2 * abnormal >= n { Label::Abnormal } else { Label::Normal };
    println!("verdict: {verdict} ({abnormal} of {n} segments at or above threshold)");
    Ok(())
}

pub fn report(dir: &Path) -> Result<(), Failure> {
    let cfg_path = dir.join("config.txt");
    let text = fs::read_to_string(&cfg_path)
        .map_err(|e| Failure::input(anyhow!("{}: {e}", cfg_path.display())))?;
    let entries: Vec<(String, String)> = text
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect();
    let study: StudyKind = entries
        .iter()
        .find(|(k, _)| k == "study")
        .ok_or_else(|| Failure::input(anyhow!("{}: no `study` entry", cfg_path.display())))?
        .1
        .parse()
        .map_err(|e: String| Failure::input(anyhow!(e)))?;
    let number = |key: &str| {
        entries
            .iter()
            .find(|(k, _)| k == key)
            .and_then(|(_, v)| v.parse::<usize>().ok())
    };
    let reduced = match (number("width_divisor"), number("epochs"), number("folds")) {
        (Some(w), Some(e), Some(f)) => is_reduced(study, w, e, f),
        _ => true,
    };
    let mut found = false;
    for preset in Preset::SWEEP.iter().chain(&[Preset::Best]) {
        let path = dir.join(format!("metrics_{}.csv", preset.name()));
        let Ok(csv) = fs::read_to_string(&path) else { continue };
        found = true;
        let folds = parse_metrics_csv(&csv).map_err(|e| Failure::contract(anyhow!("{}: {e}", path.display())))?;
        let metrics: Vec<_> = folds.iter().map(|f| f.metrics).collect();
        let agg = aggregate_folds(&metrics).map_err(|e| Failure::contract(anyhow!("{}: {e}", path.display())))?;
        print!("{}", render_report(&format!("study {study} / {}", preset.name()), &entries, &folds, &agg));
        let lines = reproduction_lines(study, *preset, &agg);
        if !lines.is_empty() && reduced {
            println!("{REDUCED_NOTE}");
        }
        for line in lines {
            println!("{line}");
        }
        println!();
    }
    if !found {
        return Err(Failure::input(anyhow!("{}: no metrics_<preset>.csv files", dir.display())));
    }
    Ok(())
}

pub fn init(out: &Path, preset: &str, width_divisor: usize, seed: u64, zero: bool) -> Result<(), Failure> {
    let preset: Preset = preset.parse().map_err(|e: String| Failure::input(anyhow!(e)))?;
    if width_divisor == 0 {
        return Err(Failure::input(anyhow!("width_divisor must be positive")));
    }
    let cfg = ModelConfig::preset(preset).with_width_divisor(width_divisor);
    let model = if zero { Model::zeroed(&cfg)? } else { build_model(&cfg, seed)? };
    Checkpoint::new(model).save(out)?;
    println!("wrote {} ({} {}, width divisor {width_divisor})", out.display(), if zero { "zero" } else { "random" }, preset.name());
    Ok(())
}

pub fn synth(out: &Path, per_class: usize, seed: u64) -> Result<(), Failure> {
    let recs = synth_corpus(&SynthConfig::default(), per_class, seed);
    write_physionet_dir(out, &recs)?;
    println!("{} recordings written to {}", recs.len(), out.display());
    Ok(())
}
