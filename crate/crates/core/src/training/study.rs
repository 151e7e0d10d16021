use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{derive_seed, make_splits, train_model, evaluate_indices, Stream, TrainConfig, TrainOutcome, TrainingError, EpochRecord};
use crate::metrics::{aggregate_folds, AggregateReport, Metric, ReportFold};
use crate::nn::{build_model, Checkpoint, ModelConfig, Preset};
use crate::signal_io::Label;
use crate::spectrogram::SpectrogramImage;

/// Absolute accuracy gap (in fraction units) within which a measured number
/// counts as reproducing a published one.
pub const REPRODUCTION_TOLERANCE: f64 = 0.03;
/// Train-minus-test accuracy gap above which a variant is flagged as overfitting.
pub const OVERFIT_GAP: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StudyKind {
    /// Architecture sweep on PhysioNet.
    Sweep = 1,
    /// Best architecture on PhysioNet + PASCAL.
    Combined = 2,
    /// PhysioNet-trained model fine-tuned on PASCAL.
    Transfer = 3,
}

impl StudyKind {
    pub fn number(self) -> u8 {
        self as u8
    }
}

impl FromStr for StudyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "1" | "sweep" => Ok(StudyKind::Sweep),
            "2" | "combined" => Ok(StudyKind::Combined),
            "3" | "transfer" => Ok(StudyKind::Transfer),
            other => Err(format!("unknown study `{other}` (expected 1, 2 or 3)")),
        }
    }
}

impl fmt::Display for StudyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// Everything a study run needs, readable from a flat `key = value` file.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub study: StudyKind,
    pub presets: Vec<Preset>,
    pub folds: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub threshold: f64,
    pub seed: u64,
    /// Divides every conv filter count; 1 is the published width.
    pub width_divisor: usize,
    pub freeze: Vec<String>,
    pub class_weights: Option<[f64; 2]>,
    /// Keep at most this many items per class (smoke runs).
    pub max_per_class: Option<usize>,
    pub cache_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub source_checkpoint: Option<PathBuf>,
}

impl StudyConfig {
    pub fn defaults(study: StudyKind) -> StudyConfig {
        let transfer = study == StudyKind::Transfer;
        StudyConfig {
            study,
            presets: match study {
                StudyKind::Sweep => Preset::SWEEP.to_vec(),
                _ => vec![Preset::Best],
            },
            folds: 10,
            epochs: 110,
            batch_size: 32,
            learning_rate: if transfer { 1e-4 } else { 1e-3 },
            threshold: 0.5,
            seed: 42,
            width_divisor: 1,
            freeze: if transfer {
                vec!["conv1".into(), "conv2".into(), "conv3".into()]
            } else {
                Vec::new()
            },
            class_weights: None,
            max_per_class: None,
            cache_dir: None,
            output_dir: None,
            source_checkpoint: None,
        }
    }

    /// One fold, one epoch, narrow layers and a truncated dataset.
    pub fn smoke(mut self) -> StudyConfig {
        self.folds = 1;
        self.epochs = 1;
        self.width_divisor = self.width_divisor.max(16);
        self.max_per_class = Some(self.max_per_class.unwrap_or(16).min(16));
        self
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            threshold: self.threshold,
            seed: self.seed,
            class_weights: self.class_weights,
        }
    }

    pub fn transfer_config(&self) -> TransferConfig {
        TransferConfig {
            freeze: self.freeze.clone(),
            learning_rate: self.learning_rate,
            epochs: self.epochs,
        }
    }

    pub fn model_config(&self, preset: Preset, input_shape: [usize; 3]) -> ModelConfig {
        ModelConfig::preset_for_input(preset, input_shape).with_width_divisor(self.width_divisor)
    }

    /// Resolved settings in file order, as written by [`StudyConfig::to_text`].
    pub fn entries(&self) -> Vec<(String, String)> {
        let path = |p: &Option<PathBuf>| p.as_ref().map_or(String::new(), |p| p.display().to_string());
        vec![
            ("study".into(), self.study.to_string()),
            (
                "presets".into(),
                self.presets.iter().map(|p| p.name()).collect::<Vec<_>>().join(","),
            ),
            ("folds".into(), self.folds.to_string()),
            ("epochs".into(), self.epochs.to_string()),
            ("batch_size".into(), self.batch_size.to_string()),
            ("learning_rate".into(), self.learning_rate.to_string()),
            ("threshold".into(), self.threshold.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("width_divisor".into(), self.width_divisor.to_string()),
            ("freeze".into(), self.freeze.join(",")),
            (
                "class_weights".into(),
                self.class_weights
                    .map_or("off".into(), |[a, b]| format!("{a},{b}")),
            ),
            (
                "max_per_class".into(),
                self.max_per_class.map_or("all".into(), |n| n.to_string()),
            ),
            ("cache_dir".into(), path(&self.cache_dir)),
            ("output_dir".into(), path(&self.output_dir)),
            ("source_checkpoint".into(), path(&self.source_checkpoint)),
        ]
    }

    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("`{key}` expects a number, got `{v}`"))
        }
        let list = |v: &str| -> Vec<String> {
            v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
        };
        let path = |v: &str| (!v.is_empty()).then(|| PathBuf::from(v));
        match key {
            "study" => {
                let kind: StudyKind = value.parse()?;
                if kind != self.study {
                    *self = StudyConfig::defaults(kind);
                }
            }
            "presets" | "preset" => {
                self.presets = list(value)
                    .iter()
                    .map(|s| s.parse::<Preset>().map_err(|e| e.to_string()))
                    .collect::<Result<_, _>>()?;
                if self.presets.is_empty() {
                    return Err("`presets` is empty".into());
                }
            }
            "folds" => self.folds = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "learning_rate" => self.learning_rate = num(key, value)?,
            "threshold" => self.threshold = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "width_divisor" => self.width_divisor = num(key, value)?,
            "freeze" => self.freeze = list(value),
            "class_weights" => {
                self.class_weights = match value {
                    "" | "off" | "none" => None,
                    v => {
                        let w = list(v)
                            .iter()
                            .map(|s| num::<f64>(key, s))
                            .collect::<Result<Vec<_>, _>>()?;
                        match w[..] {
                            [a, b] => Some([a, b]),
                            _ => return Err("`class_weights` expects `normal,abnormal`".into()),
                        }
                    }
                }
            }
            "max_per_class" => {
                self.max_per_class = match value {
                    "" | "all" => None,
                    v => Some(num(key, v)?),
                }
            }
            "cache_dir" => self.cache_dir = path(value),
            "output_dir" => self.output_dir = path(value),
            "source_checkpoint" => self.source_checkpoint = path(value),
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    /// Parses a config file. `study` (if present) must come first since it
    /// resets the study-dependent defaults.
    pub fn parse(text: &str, path: &Path) -> Result<StudyConfig, TrainingError> {
        let mut cfg = StudyConfig::defaults(StudyKind::Sweep);
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |reason: String| TrainingError::BadConfig {
                path: path.to_path_buf(),
                line: n + 1,
                reason,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad("expected `key = value`".into()))?;
            cfg.set(k.trim(), v.trim()).map_err(bad)?;
        }
        Ok(cfg)
    }
}

/// Fine-tuning settings for the transfer study.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferConfig {
    pub freeze: Vec<String>,
    pub learning_rate: f64,
    pub epochs: usize,
}

impl Default for TransferConfig {
    fn default() -> Self {
        StudyConfig::defaults(StudyKind::Transfer).transfer_config()
    }
}

#[derive(Debug, Clone)]
pub struct FoldResult {
    pub fold: usize,
    /// Test-set result of the best-validation model (the headline number).
    pub best: ReportFold,
    /// Test-set result of the final-epoch model.
    pub last: ReportFold,
    pub best_epoch: Option<usize>,
    /// Training accuracy recorded in the selected epoch.
    pub train_accuracy: Option<f64>,
    pub records: Vec<EpochRecord>,
}

#[derive(Debug, Clone)]
pub struct VariantResult {
    pub preset: Preset,
    pub folds: Vec<FoldResult>,
    pub aggregate: AggregateReport,
    pub final_aggregate: AggregateReport,
    pub mean_train_accuracy: Option<f64>,
    pub overfitting: bool,
}

#[derive(Debug, Clone)]
pub struct StudyResult {
    pub study: StudyKind,
    pub config: StudyConfig,
    pub variants: Vec<VariantResult>,
}

/// Every fold's training outcome is handed to this callback as soon as it
/// exists, so callers can persist checkpoints without holding them all.
pub type FoldSink<'a> = dyn FnMut(Preset, usize, &TrainOutcome) + 'a;

/// Keeps at most `per_class` items of each label, in input order.
pub fn smoke_subset(images: &[SpectrogramImage], per_class: usize) -> Vec<usize> {
    let mut seen = [0usize; 2];
    images
        .iter()
        .enumerate()
        .filter(|(_, img)| match img.label {
            Some(l) => {
                let c = &mut seen[l.as_u8() as usize];
                *c += 1;
                *c <= per_class
            }
            None => false,
        })
        .map(|(i, _)| i)
        .collect()
}

fn input_shape(images: &[SpectrogramImage]) -> [usize; 3] {
    images
        .first()
        .map_or([1, crate::spectrogram::IMAGE_ROWS, crate::spectrogram::IMAGE_COLS], |i| {
            [1, i.rows, i.cols]
        })
}

fn eligible(images: &[SpectrogramImage], cfg: &StudyConfig) -> Result<(Vec<usize>, Vec<Label>), TrainingError> {
    let idx = match cfg.max_per_class {
        Some(n) => smoke_subset(images, n),
        None => (0..images.len()).collect(),
    };
    let labels = idx
        .iter()
        .map(|&i| images[i].label.ok_or_else(|| TrainingError::MissingLabel(images[i].id.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((idx, labels))
}

fn summarize(preset: Preset, folds: Vec<FoldResult>) -> Result<VariantResult, TrainingError> {
    let best: Vec<_> = folds.iter().map(|f| f.best.metrics).collect();
    let last: Vec<_> = folds.iter().map(|f| f.last.metrics).collect();
    let aggregate = aggregate_folds(&best)?;
    let final_aggregate = aggregate_folds(&last)?;
    let train: Vec<f64> = folds.iter().filter_map(|f| f.train_accuracy).collect();
    let mean_train_accuracy = (!train.is_empty()).then(|| train.iter().sum::<f64>() / train.len() as f64);
    let overfitting = match (mean_train_accuracy, aggregate.mean.accuracy) {
        (Some(tr), Some(te)) => tr - te > OVERFIT_GAP,
        _ => false,
    };
    Ok(VariantResult {
        preset,
        folds,
        aggregate,
        final_aggregate,
        mean_train_accuracy,
        overfitting,
    })
}

fn run_folds<F>(
    images: &[SpectrogramImage],
    cfg: &StudyConfig,
    preset: Preset,
    tc: &TrainConfig,
    mut init: F,
    sink: &mut FoldSink<'_>,
) -> Result<VariantResult, TrainingError>
where
    F: FnMut(usize) -> Result<crate::nn::Model, TrainingError>,
{
    let (idx, labels) = eligible(images, cfg)?;
    let plan = make_splits(&labels, cfg.folds, cfg.seed)?;
    let mut folds = Vec::with_capacity(plan.folds.len());
    for (k, split) in plan.folds.iter().enumerate() {
        let map = |v: &[usize]| v.iter().map(|&j| idx[j]).collect::<Vec<_>>();
        let (train, valid, test) = (map(&split.train), map(&split.valid), map(&split.test));
        log::info!(
            "study {} {} fold {}: {} train / {} valid / {} test",
            cfg.study,
            preset.name(),
            k,
            train.len(),
            valid.len(),
            test.len()
        );
        let model = init(k)?;
        let fold_tc = TrainConfig {
            seed: derive_seed(tc.seed, Stream::Shuffle, k as u64, u64::MAX),
            ..tc.clone()
        };
        let outcome = train_model(model, &fold_tc, images, &train, &valid)?;
        let (bcm, bm) = evaluate_indices(&outcome.best_checkpoint.model, images, &test, tc.threshold)?;
        let (lcm, lm) = evaluate_indices(&outcome.final_checkpoint.model, images, &test, tc.threshold)?;
        let train_accuracy = match outcome.best_epoch {
            Some(e) => Some(outcome.records[e].train_accuracy),
            None => outcome.records.last().map(|r| r.train_accuracy),
        };
        sink(preset, k, &outcome);
        folds.push(FoldResult {
            fold: k,
            best: ReportFold { fold: k, confusion: bcm, metrics: bm },
            last: ReportFold { fold: k, confusion: lcm, metrics: lm },
            best_epoch: outcome.best_epoch,
            train_accuracy,
            records: outcome.records,
        });
    }
    summarize(preset, folds)
}

fn run_from_scratch(
    images: &[SpectrogramImage],
    cfg: &StudyConfig,
    sink: &mut FoldSink<'_>,
) -> Result<StudyResult, TrainingError> {
    let shape = input_shape(images);
    let tc = cfg.train_config();
    let mut variants = Vec::with_capacity(cfg.presets.len());
    for (v, &preset) in cfg.presets.iter().enumerate() {
        let mc = cfg.model_config(preset, shape);
        let init = |k: usize| {
            Ok(build_model(&mc, derive_seed(cfg.seed, Stream::Init, k as u64, v as u64))?)
        };
        variants.push(run_folds(images, cfg, preset, &tc, init, sink)?);
    }
    Ok(StudyResult {
        study: cfg.study,
        config: cfg.clone(),
        variants,
    })
}

/// Trains every configured preset (by default the seven sweep variants)
/// across the configured folds.
pub fn run_study1(
    images: &[SpectrogramImage],
    cfg: &StudyConfig,
    sink: &mut FoldSink<'_>,
) -> Result<StudyResult, TrainingError> {
    run_from_scratch(images, cfg, sink)
}

/// Same procedure as the sweep, intended for the merged dataset and the
/// best preset only.
pub fn run_study2(
    images: &[SpectrogramImage],
    cfg: &StudyConfig,
    sink: &mut FoldSink<'_>,
) -> Result<StudyResult, TrainingError> {
    run_from_scratch(images, cfg, sink)
}

/// Fine-tunes `source` on every fold with the configured layers frozen.
///
/// The classification head keeps its pre-trained weights. Frozen tensors
/// are never touched by the optimizer, so they stay bitwise equal to the
/// source.
pub fn run_study3_transfer(
    images: &[SpectrogramImage],
    source: &Checkpoint,
    cfg: &StudyConfig,
    tcfg: &TransferConfig,
    sink: &mut FoldSink<'_>,
) -> Result<StudyResult, TrainingError> {
    let expected = cfg.model_config(Preset::Best, input_shape(images));
    if source.model.config != expected {
        return Err(TrainingError::ConfigMismatch(format!(
            "source model is\n{}\nbut the study expects\n{}",
            source.model.config, expected
        )));
    }
    let mut base = source.model.clone();
    let names = base.layer_names();
    base.set_trainable(&names, true)?;
    base.set_trainable(&tcfg.freeze, false)
        .map_err(|e| TrainingError::ConfigMismatch(e.to_string()))?;
    let tc = TrainConfig {
        epochs: tcfg.epochs,
        learning_rate: tcfg.learning_rate,
        ..cfg.train_config()
    };
    let variant = run_folds(images, cfg, Preset::Best, &tc, |_| Ok(base.clone()), sink)?;
    Ok(StudyResult {
        study: StudyKind::Transfer,
        config: cfg.clone(),
        variants: vec![variant],
    })
}

/// Epoch curves as CSV: `fold,epoch,train_loss,train_acc,valid_loss,valid_acc`.
pub fn epoch_csv(folds: &[FoldResult]) -> String {
    let mut out = String::from("fold,epoch,train_loss,train_acc,valid_loss,valid_acc\n");
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.6}"));
    for f in folds {
        for r in &f.records {
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{},{}\n",
                f.fold,
                r.epoch + 1,
                r.train_loss,
                r.train_accuracy,
                opt(r.valid_loss),
                opt(r.valid_accuracy)
            ));
        }
    }
    out
}

/// A published figure this implementation is compared against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PublishedFigure {
    pub study: StudyKind,
    pub preset: Preset,
    pub metric: Metric,
    pub value: f64,
}

const fn r(study: StudyKind, preset: Preset, metric: Metric, value: f64) -> PublishedFigure {
    PublishedFigure { study, preset, metric, value }
}

pub const PUBLISHED_FIGURES: &[PublishedFigure] = &[
    r(StudyKind::Sweep, Preset::Exp1, Metric::Accuracy, 0.607),
    r(StudyKind::Sweep, Preset::Exp2, Metric::Accuracy, 0.607),
    r(StudyKind::Sweep, Preset::Exp3, Metric::Accuracy, 0.7521),
    r(StudyKind::Sweep, Preset::Exp4, Metric::Accuracy, 0.953),
    r(StudyKind::Sweep, Preset::Exp5, Metric::Accuracy, 0.9245),
    r(StudyKind::Sweep, Preset::Exp6, Metric::Accuracy, 0.901),
    r(StudyKind::Sweep, Preset::Exp7, Metric::Accuracy, 0.75),
    r(StudyKind::Sweep, Preset::Best, Metric::Accuracy, 0.953),
    r(StudyKind::Combined, Preset::Best, Metric::Accuracy, 0.942),
    r(StudyKind::Combined, Preset::Best, Metric::Sensitivity, 0.955),
    r(StudyKind::Combined, Preset::Best, Metric::Specificity, 0.903),
    r(StudyKind::Combined, Preset::Best, Metric::Precision, 0.968),
    r(StudyKind::Combined, Preset::Best, Metric::F1, 0.961),
    r(StudyKind::Transfer, Preset::Best, Metric::Accuracy, 0.968),
    r(StudyKind::Transfer, Preset::Best, Metric::Sensitivity, 0.958),
    r(StudyKind::Transfer, Preset::Best, Metric::Specificity, 0.98),
    r(StudyKind::Transfer, Preset::Best, Metric::Precision, 0.9829),
    r(StudyKind::Transfer, Preset::Best, Metric::F1, 0.9705),
];

/// Lines comparing aggregated metrics with the published figures for
/// `(study, preset)`; empty when nothing was published for that pair.
pub fn reproduction_lines(study: StudyKind, preset: Preset, aggregate: &AggregateReport) -> Vec<String> {
    PUBLISHED_FIGURES
        .iter()
        .filter(|p| p.study == study && p.preset == preset)
        .map(|p| match aggregate.mean.get(p.metric) {
            None => format!(
                "{} {}: undefined vs published {:.2}%",
                preset.name(),
                p.metric.name(),
                100.0 * p.value
            ),
            Some(m) => {
                let gap = m - p.value;
                let verdict = if gap.abs() <= REPRODUCTION_TOLERANCE {
                    "reproduced"
                } else {
                    "not reproduced"
                };
                format!(
                    "{} {}: {:.2}% vs published {:.2}% ({:+.2} pp) {verdict}",
                    preset.name(),
                    p.metric.name(),
                    100.0 * m,
                    100.0 * p.value,
                    100.0 * gap
                )
            }
        })
        .collect()
}

/// [`reproduction_lines`] for every variant of a study.
pub fn reproduction_verdict(result: &StudyResult) -> Vec<String> {
    result
        .variants
        .iter()
        .flat_map(|v| reproduction_lines(result.study, v.preset, &v.aggregate))
        .collect()
}
