use num_complex::Complex64;
use rustfft::FftPlanner;

use super::{HammingWindow, SpectrogramError};

/// One-sided STFT magnitudes, stored bin-major: `magnitudes[bin * frames + frame]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawStft {
    pub magnitudes: Vec<f64>,
    pub bins: usize,
    pub frames: usize,
    pub hop: usize,
    pub bin_hz: f64,
}

impl RawStft {
    pub fn get(&self, bin: usize, frame: usize) -> f64 {
        self.magnitudes[bin * self.frames + frame]
    }

    /// Magnitudes of one frame across all bins.
    pub fn frame(&self, frame: usize) -> Vec<f64> {
        (0..self.bins).map(|b| self.get(b, frame)).collect()
    }
}

fn check(
    len: usize,
    window: &HammingWindow,
    fft_len: usize,
    hop: usize,
) -> Result<usize, SpectrogramError> {
    if fft_len != window.len() {
        return Err(SpectrogramError::WindowMismatch {
            fft_len,
            window_len: window.len(),
        });
    }
    if hop == 0 {
        return Err(SpectrogramError::ZeroHop);
    }
    if len < fft_len {
        return Err(SpectrogramError::SegmentTooShort { len, fft_len });
    }
    Ok((len - fft_len) / hop + 1)
}

/// Complex one-sided spectra (`fft_len/2 + 1` bins) for every frame.
pub fn stft_frames(
    samples: &[f64],
    window: &HammingWindow,
    fft_len: usize,
    hop: usize,
) -> Result<Vec<Vec<Complex64>>, SpectrogramError> {
    let frames = check(samples.len(), window, fft_len, hop)?;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(fft_len);
    let bins = fft_len / 2 + 1;
    let mut buf = vec![Complex64::new(0.0, 0.0); fft_len];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut out = Vec::with_capacity(frames);
    for m in 0..frames {
        let chunk = &samples[m * hop..m * hop + fft_len];
        for ((b, &x), &h) in buf.iter_mut().zip(chunk).zip(&window.coefficients) {
            *b = Complex64::new(x * h, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        out.push(buf[..bins].to_vec());
    }
    Ok(out)
}

/// Windowed STFT magnitudes; frame `m` covers `[m·hop, m·hop + fft_len)`.
pub fn stft(
    samples: &[f64],
    window: &HammingWindow,
    fft_len: usize,
    hop: usize,
) -> Result<RawStft, SpectrogramError> {
    let spectra = stft_frames(samples, window, fft_len, hop)?;
    let frames = spectra.len();
    let bins = fft_len / 2 + 1;
    let mut magnitudes = vec![0.0; bins * frames];
    for (m, spec) in spectra.iter().enumerate() {
        for (k, c) in spec.iter().enumerate() {
            magnitudes[k * frames + m] = c.norm();
        }
    }
    Ok(RawStft {
        magnitudes,
        bins,
        frames,
        hop,
        // resolution is fixed by the canonical rate
        bin_hz: crate::CANONICAL_RATE as f64 / fft_len as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{hamming, FFT_LEN, HOP};
    use super::*;

    #[test]
    fn canonical_dimensions() {
        let w = hamming(FFT_LEN).unwrap();
        let s = stft(&vec![0.0; 16000], &w, FFT_LEN, HOP).unwrap();
        assert_eq!((s.bins, s.frames), (65, 249));
        assert_eq!(s.bin_hz, 15.625);
        assert!(s.magnitudes.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn errors() {
        let w = hamming(FFT_LEN).unwrap();
        assert!(matches!(
            stft(&[0.0; 100], &w, FFT_LEN, HOP),
            Err(SpectrogramError::SegmentTooShort { .. })
        ));
        assert!(matches!(
            stft(&[0.0; 1000], &w, 64, HOP),
            Err(SpectrogramError::WindowMismatch { .. })
        ));
        assert!(matches!(
            stft(&[0.0; 1000], &w, FFT_LEN, 0),
            Err(SpectrogramError::ZeroHop)
        ));
    }

    #[test]
    fn exactly_one_frame() {
        let w = hamming(FFT_LEN).unwrap();
        let s = stft(&[1.0; 128], &w, FFT_LEN, HOP).unwrap();
        assert_eq!(s.frames, 1);
        let dc: f64 = w.coefficients.iter().sum();
        assert!((s.get(0, 0) - dc).abs() < 1e-9);
    }
}
