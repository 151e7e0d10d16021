//! Hamming-windowed STFT and the 137x310 log-power images the network sees.

mod cache;
mod image;
mod stft;
mod window;

use std::path::PathBuf;

use thiserror::Error;

pub use cache::{
    decode_spectrogram, encode_spectrogram, read_spectrogram, read_spectrogram_dir,
    spectrogram_file_name, write_pgm, write_spectrogram,
};
pub use image::{bilinear_resize, segment_spectrogram, to_image, SpectrogramImage, LOG_FLOOR};
pub use stft::{stft, stft_frames, RawStft};
pub use window::{hamming, HammingWindow, HAMMING_ALPHA};

/// DFT length and window length in samples (64 ms at 2000 Hz).
pub const FFT_LEN: usize = 128;
/// 50% overlap.
pub const HOP: usize = 64;
pub const IMAGE_ROWS: usize = 137;
pub const IMAGE_COLS: usize = 310;

#[derive(Debug, Error)]
pub enum SpectrogramError {
    #[error("window length must be at least 2, got {0}")]
    WindowTooShort(usize),
    #[error("fft length {fft_len} does not match window length {window_len}")]
    WindowMismatch { fft_len: usize, window_len: usize },
    #[error("hop must be positive")]
    ZeroHop,
    #[error("segment has {len} samples, fewer than the fft length {fft_len}")]
    SegmentTooShort { len: usize, fft_len: usize },
    #[error("{path}: corrupt spectrogram cache file: {reason}")]
    CacheCorrupt { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
