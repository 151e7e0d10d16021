use super::{hamming, stft, RawStft, SpectrogramError, FFT_LEN, HOP, IMAGE_COLS, IMAGE_ROWS};
use crate::dsp::Segment;
use crate::signal_io::Label;

/// Power floor inside the log so silent bins stay finite.
pub const LOG_FLOOR: f64 = 1e-10;

/// Normalized log-power image. Row 0 is the DC bin, column 0 the first frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrogramImage {
    pub pixels: Vec<f32>,
    pub rows: usize,
    pub cols: usize,
    /// Segment id, `<source_id>_<index>`.
    pub id: String,
    pub label: Option<Label>,
}

impl SpectrogramImage {
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * self.cols + col]
    }

    /// Parent recording id (the id with its `_<index>` suffix stripped).
    pub fn source_id(&self) -> &str {
        self.id.rsplit_once('_').map(|(p, _)| p).unwrap_or(&self.id)
    }
}

/// Bilinear resampling of a row-major grid with corners aligned.
pub fn bilinear_resize(
    src: &[f64],
    in_rows: usize,
    in_cols: usize,
    out_rows: usize,
    out_cols: usize,
) -> Vec<f64> {
    assert_eq!(src.len(), in_rows * in_cols);
    let scale = |i: usize, n_in: usize, n_out: usize| -> (usize, usize, f64) {
        if n_out == 1 || n_in == 1 {
            return (0, 0, 0.0);
        }
        let pos = i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64;
        let lo = (pos.floor() as usize).min(n_in - 1);
        let hi = (lo + 1).min(n_in - 1);
        (lo, hi, pos - lo as f64)
    };
    let col_taps: Vec<_> = (0..out_cols).map(|c| scale(c, in_cols, out_cols)).collect();
    let mut out = Vec::with_capacity(out_rows * out_cols);
    for r in 0..out_rows {
        let (r0, r1, fr) = scale(r, in_rows, out_rows);
        let top = &src[r0 * in_cols..(r0 + 1) * in_cols];
        let bottom = &src[r1 * in_cols..(r1 + 1) * in_cols];
        for &(c0, c1, fc) in &col_taps {
            let t = top[c0] + (top[c1] - top[c0]) * fc;
            let b = bottom[c0] + (bottom[c1] - bottom[c0]) * fc;
            out.push(t + (b - t) * fr);
        }
    }
    out
}

/// Log power -> bilinear resize to 137x310 -> min-max normalize to [0, 1].
///
/// A constant grid normalizes to all zeros. Provenance is left empty.
pub fn to_image(s: &RawStft) -> SpectrogramImage {
    let log_power: Vec<f64> = s
        .magnitudes
        .iter()
        .map(|m| 10.0 * (m * m + LOG_FLOOR).log10())
        .collect();
    let resized = bilinear_resize(&log_power, s.bins, s.frames, IMAGE_ROWS, IMAGE_COLS);
    let (min, max) = resized
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = max - min;
    let pixels = if range > 0.0 {
        resized.iter().map(|&v| ((v - min) / range) as f32).collect()
    } else {
        vec![0.0; resized.len()]
    };
    SpectrogramImage {
        pixels,
        rows: IMAGE_ROWS,
        cols: IMAGE_COLS,
        id: String::new(),
        label: None,
    }
}

/// Full segment -> image step with the canonical window and hop.
pub fn segment_spectrogram(seg: &Segment) -> Result<SpectrogramImage, SpectrogramError> {
    let window = hamming(FFT_LEN)?;
    let raw = stft(&seg.samples, &window, FFT_LEN, HOP)?;
    Ok(SpectrogramImage {
        id: seg.id(),
        label: seg.label,
        ..to_image(&raw)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(mags: Vec<f64>, bins: usize, frames: usize) -> RawStft {
        RawStft {
            magnitudes: mags,
            bins,
            frames,
            hop: 64,
            bin_hz: 15.625,
        }
    }

    #[test]
    fn dimensions_fixed() {
        let img = to_image(&raw((0..65 * 249).map(|i| i as f64).collect(), 65, 249));
        assert_eq!((img.rows, img.cols, img.pixels.len()), (137, 310, 137 * 310));
        let min = img.pixels.iter().cloned().fold(f32::INFINITY, f32::min);
        let max = img.pixels.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        assert_eq!((min, max), (0.0, 1.0));
        // small grids also land on the canonical size
        assert_eq!(to_image(&raw(vec![1.0, 2.0], 1, 2)).pixels.len(), 137 * 310);
    }

    #[test]
    fn constant_magnitude_is_all_zero() {
        let img = to_image(&raw(vec![3.0; 65 * 249], 65, 249));
        assert!(img.pixels.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn resize_hits_corners_and_is_exact_on_linear_ramps() {
        let src: Vec<f64> = (0..3)
            .flat_map(|r| (0..4).map(move |c| 10.0 * r as f64 + c as f64))
            .collect();
        let out = bilinear_resize(&src, 3, 4, 5, 7);
        assert_eq!(out[0], 0.0);
        assert_eq!(out[6], 3.0);
        assert_eq!(out[4 * 7 + 6], 23.0);
        // middle row, middle column: r = 1, c = 1.5
        assert!((out[2 * 7 + 3] - 11.5).abs() < 1e-12);
    }

    #[test]
    fn log_preserves_order() {
        let mags = [0.0, 1e-6, 0.5, 2.0, 100.0];
        let logs: Vec<f64> = mags.iter().map(|m| 10.0 * (m * m + LOG_FLOOR).log10()).collect();
        assert!(logs.windows(2).all(|w| w[0] < w[1]));
    }
}
