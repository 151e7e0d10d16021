use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use super::{AudioRecording, SignalIoError};

/// Two's-complement scaling: i16 -> [-1, 1).
const PCM_SCALE: f64 = 32768.0;

/// Reads a mono 16-bit PCM WAV file.
///
/// The source id is the file stem; dataset and label are left unset.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioRecording, SignalIoError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| SignalIoError::io(path, e))?;
    let reader = hound::WavReader::new(BufReader::new(file)).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int {
        return Err(unsupported(path, "floating-point samples"));
    }
    if spec.bits_per_sample != 16 {
        return Err(unsupported(
            path,
            format!("{}-bit samples (only 16-bit PCM)", spec.bits_per_sample),
        ));
    }
    if spec.channels != 1 {
        return Err(unsupported(
            path,
            format!("{} channels (only mono)", spec.channels),
        ));
    }
    if spec.sample_rate == 0 {
        return Err(SignalIoError::MalformedContainer {
            path: path.to_path_buf(),
            reason: "sample rate is zero".into(),
        });
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / PCM_SCALE))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| map_hound(path, e))?;
    let source_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(AudioRecording::new(samples, spec.sample_rate, source_id))
}

/// Writes samples as mono 16-bit PCM. Values are clamped to the i16 range.
pub fn write_wav(
    path: impl AsRef<Path>,
    samples: &[f64],
    sample_rate: u32,
) -> Result<(), SignalIoError> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let write_err = |e: hound::Error| match e {
        hound::Error::IoError(io) => SignalIoError::io(path, io),
        other => SignalIoError::io(path, std::io::Error::other(other.to_string())),
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(write_err)?;
    for &s in samples {
        let v = (s * PCM_SCALE).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
        writer.write_sample(v).map_err(write_err)?;
    }
    writer.finalize().map_err(write_err)
}

fn unsupported(path: &Path, reason: impl Into<String>) -> SignalIoError {
    SignalIoError::UnsupportedFormat {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Errors raised while decoding an already-opened file. Short reads mean a
/// truncated container.
fn map_hound(path: &Path, err: hound::Error) -> SignalIoError {
    match err {
        hound::Error::IoError(e) => SignalIoError::MalformedContainer {
            path: path.to_path_buf(),
            reason: e.to_string(),
        },
        hound::Error::FormatError(msg) => SignalIoError::MalformedContainer {
            path: path.to_path_buf(),
            reason: msg.to_string(),
        },
        hound::Error::Unsupported => unsupported(path, "non-PCM encoding"),
        hound::Error::TooWide | hound::Error::InvalidSampleFormat => {
            unsupported(path, err.to_string())
        }
        other => SignalIoError::MalformedContainer {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    }
}
