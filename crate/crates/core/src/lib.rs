//! Phonocardiogram (PCG) screening pipeline.
//!
//! Heart-sound recordings are resampled to 2000 Hz, band-passed (20-400 Hz
//! Butterworth), cut into 8-second segments and turned into 137x310
//! log-magnitude STFT images. A small from-scratch CNN engine trains on those
//! images to separate normal from abnormal recordings.
//!
//! Module map:
//! - [`signal_io`]: WAV ingestion, rational resampling, dataset manifests
//! - [`dsp`]: Butterworth band-pass design and filtering, segmentation, segment cache
//! - [`spectrogram`]: Hamming window, STFT, image rendering and cache
//! - [`nn`]: tensors, layers with hand-written backward passes, BCE, Adam, checkpoints
//! - [`training`]: stratified splits, the training loop, the three studies
//! - [`metrics`]: confusion matrices, screening metrics, fold aggregation, reports
//! - [`synth`]: synthetic heart-sound generator used for smoke runs and tests

pub mod dsp;
pub mod metrics;
pub mod nn;
pub mod signal_io;
pub mod spectrogram;
pub mod synth;
pub mod training;

pub(crate) mod par;

pub use dsp::{BandpassFilter, Segment};
pub use metrics::{ConfusionMatrix, MetricsReport};
pub use nn::{Checkpoint, Model, ModelConfig, Preset};
pub use signal_io::{AudioRecording, DatasetKind, DatasetManifest, Label};
pub use spectrogram::SpectrogramImage;

/// Canonical sample rate every recording is converted to.
pub const CANONICAL_RATE: u32 = 2000;
/// Samples per 8-second segment at the canonical rate.
pub const SEGMENT_LEN: usize = 16_000;
