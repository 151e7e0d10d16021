//! Synthetic heart sounds for smoke runs and end-to-end tests.
//!
//! A "normal" recording is a train of two tone bursts per beat (S1 near
//! 60 Hz, S2 near 90 Hz) at 60-100 bpm over a faint noise floor. An
//! "abnormal" recording is the same plus a 150-350 Hz band-limited noise
//! murmur filling the systolic gap between S1 and S2.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dsp::{design_bandpass, filter_samples};
use crate::signal_io::{write_wav, AudioRecording, DatasetKind, Label, SignalIoError};

/// Generation rate; deliberately not the canonical rate so the resampler is
/// exercised.
pub const SYNTH_RATE: u32 = 4000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub sample_rate: u32,
    pub min_secs: f64,
    pub max_secs: f64,
    /// Murmur RMS relative to the S1 peak amplitude.
    pub murmur_level: f64,
    pub noise_level: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            sample_rate: SYNTH_RATE,
            min_secs: 8.0,
            max_secs: 12.0,
            murmur_level: 0.15,
            noise_level: 0.01,
        }
    }
}

fn burst(out: &mut [f64], fs: f64, start: f64, dur: f64, freq: f64, amp: f64) {
    let i0 = (start * fs).round() as usize;
    let n = (dur * fs).round() as usize;
    for k in 0..n {
        let Some(slot) = out.get_mut(i0 + k) else { break };
        let t = k as f64 / fs;
        let env = (PI * k as f64 / n as f64).sin().powi(2);
        *slot += amp * env * (2.0 * PI * freq * t).sin();
    }
}

/// One recording, deterministic in `(seed, label)`.
pub fn synth_recording(cfg: &SynthConfig, label: Label, seed: u64) -> AudioRecording {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((label.as_u8() as u64) << 63));
    let fs = cfg.sample_rate as f64;
    let secs = rng.gen_range(cfg.min_secs..=cfg.max_secs);
    let n = (secs * fs) as usize;
    let bpm = rng.gen_range(60.0..=100.0);
    let period = 60.0 / bpm;
    let s1_freq = rng.gen_range(50.0..70.0);
    let s2_freq = rng.gen_range(80.0..100.0);
    let systole = 0.3 * period;
    let (s1_len, s2_len) = (0.10, 0.08);

    let mut x: Vec<f64> = (0..n)
        .map(|_| -> f64 { cfg.noise_level * Distribution::<f64>::sample(&StandardNormal, &mut rng) })
        .collect();

    let mut murmur_mask = vec![0.0; n];
    let mut t = rng.gen_range(0.0..period);
    while t < secs {
        let amp = rng.gen_range(0.8..1.0);
        burst(&mut x, fs, t, s1_len, s1_freq, amp);
        burst(&mut x, fs, t + systole, s2_len, s2_freq, 0.7 * amp);
        let (a, b) = ((t + s1_len) * fs, (t + systole) * fs);
        let (a, b) = (a as usize, (b as usize).min(n));
        for (k, m) in murmur_mask.iter_mut().enumerate().take(b).skip(a) {
            let u = (k - a) as f64 / (b - a) as f64;
            *m = (PI * u).sin();
        }
        t += period;
    }

    if label == Label::Abnormal {
        let band = design_bandpass(4, 150.0, 350.0, cfg.sample_rate).expect("valid murmur band");
        let white: Vec<f64> = (0..n).map(|_| -> f64 { Distribution::<f64>::sample(&StandardNormal, &mut rng) }).collect();
        let noise = filter_samples(&band, &white);
        let rms = (noise.iter().map(|v| v * v).sum::<f64>() / n.max(1) as f64).sqrt();
        let gain = if rms > 0.0 { cfg.murmur_level / rms } else { 0.0 };
        for ((xi, ni), mi) in x.iter_mut().zip(&noise).zip(&murmur_mask) {
            *xi += gain * ni * mi;
        }
    }

    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.9 {
        x.iter_mut().for_each(|v| *v *= 0.9 / peak);
    }
    AudioRecording::new(x, cfg.sample_rate, format!("synth_{}_{seed:05}", label))
        .with_label(label)
        .with_dataset(DatasetKind::PhysioNet)
}

/// `per_class` recordings of each label, alternating normal/abnormal.
pub fn synth_corpus(cfg: &SynthConfig, per_class: usize, seed: u64) -> Vec<AudioRecording> {
    let mut out = Vec::with_capacity(2 * per_class);
    for i in 0..per_class as u64 {
        let s = seed.wrapping_mul(1_000_003).wrapping_add(i);
        out.push(synth_recording(cfg, Label::Normal, s));
        out.push(synth_recording(cfg, Label::Abnormal, s));
    }
    out
}

/// Writes recordings as 16-bit WAVs plus a `REFERENCE.csv` (`-1` normal,
/// `1` abnormal), the layout `build_manifest` reads for PhysioNet folders.
pub fn write_physionet_dir(dir: &Path, recs: &[AudioRecording]) -> Result<(), SignalIoError> {
    fs::create_dir_all(dir).map_err(|e| SignalIoError::io(dir, e))?;
    let mut reference = String::new();
    for r in recs {
        write_wav(dir.join(format!("{}.wav", r.source_id)), &r.samples, r.sample_rate)?;
        let code = match r.label {
            Some(Label::Abnormal) => "1",
            _ => "-1",
        };
        reference.push_str(&format!("{},{code}\n", r.source_id));
    }
    let path = dir.join("REFERENCE.csv");
    fs::write(&path, reference).map_err(|e| SignalIoError::io(&path, e))
}
