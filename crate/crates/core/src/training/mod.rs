//! Stratified splits, the mini-batch training loop and the three studies:
//! the architecture sweep, combined-dataset training, and transfer learning.

mod split;
mod study;
mod trainer;

use std::path::PathBuf;

use thiserror::Error;

use crate::metrics::MetricsError;
use crate::nn::NnError;
use crate::signal_io::Label;

pub use split::{class_split_sizes, make_splits, FoldSplit, SplitPlan, VALID_PERMILLE, TEST_PERMILLE};
pub use study::{
    epoch_csv, reproduction_lines, reproduction_verdict, run_study1, run_study2, run_study3_transfer, smoke_subset,
    FoldResult, FoldSink, PublishedFigure, StudyConfig, StudyKind, StudyResult, TransferConfig,
    VariantResult, PUBLISHED_FIGURES, REPRODUCTION_TOLERANCE,
};
pub use trainer::{
    evaluate_indices, predict_indices, train_model, EpochRecord, TrainConfig, TrainOutcome,
};

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error("class {label} has {count} items; at least {needed} are required")]
    TooFewSamples {
        label: Label,
        count: usize,
        needed: usize,
    },
    #[error("loss diverged at epoch {epoch}, batch {batch} (loss = {loss})")]
    DivergedLoss { epoch: usize, batch: usize, loss: f64 },
    #[error("checkpoint does not match the study: {0}")]
    ConfigMismatch(String),
    #[error("image `{0}` has no label")]
    MissingLabel(String),
    #[error("{path}:{line}: {reason}")]
    BadConfig {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("invalid training setting: {0}")]
    InvalidSetting(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Stream tags keep RNG streams for different purposes independent.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub(crate) enum Stream {
    Split = 1,
    Init = 2,
    Shuffle = 3,
    Dropout = 4,
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from the master seed, a stream tag and two indices.
pub(crate) fn derive_seed(seed: u64, stream: Stream, a: u64, b: u64) -> u64 {
    mix(mix(mix(seed ^ mix(stream as u64)) ^ a) ^ b.rotate_left(17))
}
