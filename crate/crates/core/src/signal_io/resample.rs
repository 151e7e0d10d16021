//! Rational-ratio resampling with a Kaiser-windowed sinc low-pass.
//!
//! Conceptually: zero-stuff by `up`, low-pass at the smaller of the two
//! Nyquist frequencies, keep every `down`-th sample. The polyphase form below
//! only evaluates the taps that land on real input samples.

use std::f64::consts::PI;

use super::AudioRecording;

/// Kaiser shape parameter.
pub const KAISER_BETA: f64 = 8.6;
/// Sinc zero crossings kept on each side of the kernel center.
pub const ZERO_CROSSINGS: usize = 64;

#[derive(Debug, Clone)]
pub struct ResampleKernel {
    up: usize,
    down: usize,
    /// `phases[φ][i]` is the tap at upsampled offset `φ + up * (first_tap[φ] + i)`.
    phases: Vec<Vec<f64>>,
    first_tap: Vec<i64>,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = PI * x;
        px.sin() / px
    }
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > sum * 1e-17 {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

/// Builds the polyphase kernel for `source_rate -> target_rate`.
pub fn kaiser_sinc_kernel(source_rate: u32, target_rate: u32) -> ResampleKernel {
    assert!(source_rate > 0 && target_rate > 0, "rates must be positive");
    let g = gcd(source_rate as u64, target_rate as u64);
    let up = (target_rate as u64 / g) as usize;
    let down = (source_rate as u64 / g) as usize;

    // Zero-crossing spacing of the low-pass, in upsampled samples.
    let spacing = up.max(down);
    let half = (ZERO_CROSSINGS * spacing) as i64;
    let i0_beta = bessel_i0(KAISER_BETA);
    let tap = |k: i64| -> f64 {
        let r = k as f64 / half as f64;
        let w = bessel_i0(KAISER_BETA * (1.0 - r * r).max(0.0).sqrt()) / i0_beta;
        sinc(k as f64 / spacing as f64) * w
    };

    let upi = up as i64;
    let mut phases = Vec::with_capacity(up);
    let mut first_tap = Vec::with_capacity(up);
    for phase in 0..upi {
        // ceil((-half - phase) / up)
        let t_lo = -(half + phase).div_euclid(upi);
        let t_hi = (half - phase).div_euclid(upi);
        let mut taps: Vec<f64> = (t_lo..=t_hi).map(|t| tap(phase + upi * t)).collect();
        // Unity DC gain per phase.
        let sum: f64 = taps.iter().sum();
        taps.iter_mut().for_each(|w| *w /= sum);
        phases.push(taps);
        first_tap.push(t_lo);
    }
    ResampleKernel {
        up,
        down,
        phases,
        first_tap,
    }
}

impl ResampleKernel {
    pub fn ratio(&self) -> (usize, usize) {
        (self.up, self.down)
    }

    pub fn output_len(&self, input_len: usize) -> usize {
        (input_len * self.up + self.down / 2) / self.down
    }

    pub fn apply(&self, input: &[f64]) -> Vec<f64> {
        if self.up == self.down {
            return input.to_vec();
        }
        let n_out = self.output_len(input.len());
        let len = input.len() as i64;
        let mut out = Vec::with_capacity(n_out);
        for j in 0..n_out {
            let pos = (j * self.down) as i64;
            let phase = (pos % self.up as i64) as usize;
            let base = pos / self.up as i64;
            let taps = &self.phases[phase];
            let t0 = self.first_tap[phase];
            // input index = base - t for t = t0 + i
            let mut acc = 0.0;
            for (i, &w) in taps.iter().enumerate() {
                let idx = base - (t0 + i as i64);
                if idx < 0 {
                    break;
                }
                if idx < len {
                    acc += input[idx as usize] * w;
                }
            }
            out.push(acc);
        }
        out
    }
}

/// Resamples to `target_rate`. Identity (bit-exact copy) when the rates match.
pub fn resample(rec: &AudioRecording, target_rate: u32) -> AudioRecording {
    let samples = if rec.sample_rate == target_rate {
        rec.samples.clone()
    } else {
        kaiser_sinc_kernel(rec.sample_rate, target_rate).apply(&rec.samples)
    };
    AudioRecording {
        samples,
        sample_rate: target_rate,
        source_id: rec.source_id.clone(),
        dataset: rec.dataset,
        label: rec.label,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft_argmax(x: &[f64]) -> usize {
        let n = x.len();
        (0..=n / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (i, &v) in x.iter().enumerate() {
                    let a = -2.0 * PI * (k * i % n) as f64 / n as f64;
                    re += v * a.cos();
                    im += v * a.sin();
                }
                (k, re * re + im * im)
            })
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap()
            .0
    }

    #[test]
    fn bessel_i0_reference_values() {
        assert!((bessel_i0(0.0) - 1.0).abs() < 1e-15);
        // I0(1) = 1.2660658777520082
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_2).abs() < 1e-14);
    }

    #[test]
    fn constant_survives_downsampling() {
        let rec = AudioRecording::new(vec![0.5; 8000], 4000, "c");
        let out = resample(&rec, 2000);
        assert_eq!(out.sample_rate, 2000);
        assert_eq!(out.samples.len(), 4000);
        let interior = &out.samples[64..out.samples.len() - 64];
        let dev = interior.iter().map(|v| (v - 0.5).abs()).fold(0.0, f64::max);
        assert!(dev < 1e-3, "max deviation {dev}");
    }

    #[test]
    fn tone_frequency_preserved_8k_to_2k() {
        let n = 16000;
        let x: Vec<f64> = (0..n)
            .map(|i| (2.0 * PI * 100.0 * i as f64 / 8000.0).sin())
            .collect();
        let out = resample(&AudioRecording::new(x, 8000, "t"), 2000);
        assert_eq!(out.samples.len(), 4000);
        // bin spacing 2000/4000 = 0.5 Hz -> 100 Hz is bin 200
        assert_eq!(naive_dft_argmax(&out.samples), 200);
    }

    #[test]
    fn identity_when_rates_match() {
        let x: Vec<f64> = (0..777).map(|i| ((i * 31 % 17) as f64 - 8.0) / 9.0).collect();
        let rec = AudioRecording::new(x.clone(), 2000, "id");
        assert_eq!(resample(&rec, 2000).samples, x);
    }

    #[test]
    fn empty_input_gives_empty_output() {
        let rec = AudioRecording::new(vec![], 44100, "e");
        assert!(resample(&rec, 2000).samples.is_empty());
    }

    #[test]
    fn length_rounds_for_awkward_ratio() {
        let k = kaiser_sinc_kernel(44100, 2000);
        assert_eq!(k.ratio(), (20, 441));
        // 1000 * 20 / 441 = 45.35 -> 45
        assert_eq!(k.output_len(1000), 45);
        let rec = AudioRecording::new(vec![0.1; 44100], 44100, "p");
        let out = resample(&rec, 2000);
        assert_eq!(out.samples.len(), 2000);
        let mid = out.samples[1000];
        assert!((mid - 0.1).abs() < 1e-6);
    }

    #[test]
    fn upsampling_preserves_tone() {
        let x: Vec<f64> = (0..1000)
            .map(|i| (2.0 * PI * 50.0 * i as f64 / 1000.0).sin())
            .collect();
        let out = resample(&AudioRecording::new(x, 1000, "u"), 2000);
        assert_eq!(out.samples.len(), 2000);
        // 1 Hz bins at 2000 samples / 2000 Hz
        assert_eq!(naive_dft_argmax(&out.samples), 50);
    }

    #[test]
    fn alias_band_is_rejected() {
        // 1500 Hz at 8 kHz is above the 1 kHz output Nyquist and must vanish.
        let x: Vec<f64> = (0..16000)
            .map(|i| (2.0 * PI * 1500.0 * i as f64 / 8000.0).sin())
            .collect();
        let out = resample(&AudioRecording::new(x, 8000, "a"), 2000);
        let interior = &out.samples[200..3800];
        let peak = interior.iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(peak < 1e-3, "alias residue {peak}");
    }
}
