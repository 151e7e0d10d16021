//! Band-pass filtering and fixed-window segmentation.

mod butterworth;
mod segment;

use std::path::PathBuf;

use thiserror::Error;

use crate::signal_io::SignalIoError;

pub use butterworth::{apply_filter, design_bandpass, filter_samples, BandpassFilter, Biquad, FilterState};
pub use segment::{
    preprocess_dataset, preprocess_recording, read_segment, segment, segment_file_name,
    write_segment, PreprocessFailure, PreprocessOutput, Segment,
};

/// Canonical filter: 4th-order prototype, 20-400 Hz at 2000 Hz.
pub const FILTER_ORDER: usize = 4;
pub const LOW_CUT_HZ: f64 = 20.0;
pub const HIGH_CUT_HZ: f64 = 400.0;

/// The pipeline's band-pass at the canonical rate.
pub fn canonical_filter() -> BandpassFilter {
    design_bandpass(FILTER_ORDER, LOW_CUT_HZ, HIGH_CUT_HZ, crate::CANONICAL_RATE)
        .expect("canonical band is valid")
}

#[derive(Debug, Error)]
pub enum DspError {
    #[error("invalid band: need 0 < low ({low}) < high ({high}) < fs/2 ({nyquist}) and order >= 1")]
    InvalidBand { low: f64, high: f64, nyquist: f64 },
    #[error("sample rate mismatch: filter designed for {expected} Hz, recording is {actual} Hz")]
    RateMismatch { expected: u32, actual: u32 },
    #[error("{path}: corrupt segment cache file: {reason}")]
    CacheCorrupt { path: PathBuf, reason: String },
    #[error(transparent)]
    SignalIo(#[from] SignalIoError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
