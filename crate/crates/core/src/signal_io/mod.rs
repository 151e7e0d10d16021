//! Recording ingestion: WAV decoding, resampling to the canonical rate and
//! labeled dataset manifests for PhysioNet 2016 and PASCAL.

mod manifest;
mod resample;
mod wav;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

pub use manifest::{build_manifest, build_pascal_manifest, DatasetManifest, ManifestEntry};
pub use resample::{kaiser_sinc_kernel, resample, ResampleKernel};
pub use wav::{load_wav, write_wav};

#[derive(Debug, Error)]
pub enum SignalIoError {
    #[error("{path}: malformed RIFF/WAVE container: {reason}")]
    MalformedContainer { path: PathBuf, reason: String },
    #[error("{path}: unsupported format: {reason}")]
    UnsupportedFormat { path: PathBuf, reason: String },
    #[error("{dir}: no label file found for the recordings in this directory")]
    MissingLabelFile { dir: PathBuf },
    #[error("{path}: recording has no label")]
    UnlabeledRecording { path: PathBuf },
    #[error("{dir}: cannot tell which dataset subset this directory holds")]
    UnknownLayout { dir: PathBuf },
    #[error("{path}: bad manifest: {reason}")]
    BadManifest { path: PathBuf, reason: String },
    #[error("{path}:{line}: {reason}")]
    BadLabelFile {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SignalIoError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SignalIoError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Binary screening label. Abnormal is the positive class everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Normal = 0,
    Abnormal = 1,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn from_u8(v: u8) -> Option<Label> {
        match v {
            0 => Some(Label::Normal),
            1 => Some(Label::Abnormal),
            _ => None,
        }
    }

    /// Training target, 0.0 or 1.0.
    pub fn target(self) -> f64 {
        self as u8 as f64
    }

    pub fn is_abnormal(self) -> bool {
        self == Label::Abnormal
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Normal => f.write_str("normal"),
            Label::Abnormal => f.write_str("abnormal"),
        }
    }
}

/// Which collection a recording came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DatasetKind {
    PhysioNet,
    PascalA,
    PascalB,
}

impl DatasetKind {
    pub fn tag(self) -> &'static str {
        match self {
            DatasetKind::PhysioNet => "physionet",
            DatasetKind::PascalA => "pascal_a",
            DatasetKind::PascalB => "pascal_b",
        }
    }

    pub fn is_pascal(self) -> bool {
        matches!(self, DatasetKind::PascalA | DatasetKind::PascalB)
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for DatasetKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "physionet" => Ok(DatasetKind::PhysioNet),
            "pascal_a" | "pascala" => Ok(DatasetKind::PascalA),
            "pascal_b" | "pascalb" => Ok(DatasetKind::PascalB),
            other => Err(format!("unknown dataset tag `{other}`")),
        }
    }
}

/// A mono recording with samples in [-1, 1].
///
/// `dataset` and `label` stay `None` until the recording is joined with a
/// manifest entry (or forever, for ad-hoc prediction inputs).
#[derive(Debug, Clone, PartialEq)]
pub struct AudioRecording {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub source_id: String,
    pub dataset: Option<DatasetKind>,
    pub label: Option<Label>,
}

impl AudioRecording {
    pub fn new(samples: Vec<f64>, sample_rate: u32, source_id: impl Into<String>) -> Self {
        AudioRecording {
            samples,
            sample_rate,
            source_id: source_id.into(),
            dataset: None,
            label: None,
        }
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.label = Some(label);
        self
    }

    pub fn with_dataset(mut self, dataset: DatasetKind) -> Self {
        self.dataset = Some(dataset);
        self
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}
