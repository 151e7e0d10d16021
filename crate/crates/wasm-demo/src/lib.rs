//! Browser bindings for the preprocessing front end: the band-pass filter's
//! magnitude response, the Hamming window and spectrograms of synthetic heart
//! sounds.

use wasm_bindgen::prelude::*;

use pcg_core::dsp::{canonical_filter, preprocess_recording};
use pcg_core::signal_io::Label;
use pcg_core::spectrogram::{hamming, segment_spectrogram, IMAGE_COLS, IMAGE_ROWS};
use pcg_core::synth::{synth_recording, SynthConfig};

/// Gain in dB of the 20-400 Hz band-pass filter at each frequency.
#[wasm_bindgen]
pub fn filter_response(freqs_hz: &[f64]) -> Vec<f64> {
    let filter = canonical_filter();
    freqs_hz.iter().map(|&f| filter.magnitude_db(f)).collect()
}

/// Symmetric Hamming window coefficients; empty when `len < 2`.
#[wasm_bindgen]
pub fn hamming_window(len: usize) -> Vec<f64> {
    hamming(len).map(|w| w.coefficients).unwrap_or_default()
}

#[wasm_bindgen]
pub fn image_rows() -> usize {
    IMAGE_ROWS
}

#[wasm_bindgen]
pub fn image_cols() -> usize {
    IMAGE_COLS
}

/// Row-major 137x310 spectrogram (low frequencies first, values in [0, 1]) of
/// the first 8 s segment of a synthetic recording.
#[wasm_bindgen]
pub fn synthetic_spectrogram(abnormal: bool, seed: u32, murmur_level: f64) -> Result<Vec<f32>, JsError> {
    let cfg = SynthConfig {
        murmur_level: murmur_level.clamp(0.0, 1.0),
        ..SynthConfig::default()
    };
    let label = if abnormal { Label::Abnormal } else { Label::Normal };
    let rec = synth_recording(&cfg, label, seed as u64);
    let segments = preprocess_recording(&rec, &canonical_filter()).map_err(|e| JsError::new(&e.to_string()))?;
    let first = segments
        .first()
        .ok_or_else(|| JsError::new("synthetic recording shorter than one segment"))?;
    let image = segment_spectrogram(first).map_err(|e| JsError::new(&e.to_string()))?;
    Ok(image.pixels)
}
