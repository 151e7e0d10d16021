//! Exit-code classification.

use std::fmt;
use std::process::ExitCode;

use pcg_core::dsp::DspError;
use pcg_core::nn::NnError;
use pcg_core::signal_io::SignalIoError;
use pcg_core::spectrogram::SpectrogramError;
use pcg_core::training::TrainingError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// Bad flags, missing paths, unusable configuration. Exit 2.
    Input,
    /// Data that violates a format or size contract. Exit 3.
    Contract,
    /// Anything else. Exit 1.
    Internal,
}

#[derive(Debug)]
pub struct Failure {
    pub kind: Kind,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn input(e: impl Into<anyhow::Error>) -> Failure {
        Failure { kind: Kind::Input, error: e.into() }
    }

    pub fn contract(e: impl Into<anyhow::Error>) -> Failure {
        Failure { kind: Kind::Contract, error: e.into() }
    }

    pub fn internal(e: impl Into<anyhow::Error>) -> Failure {
        Failure { kind: Kind::Internal, error: e.into() }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self.kind {
            Kind::Internal => 1,
            Kind::Input => 2,
            Kind::Contract => 3,
        })
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl From<SignalIoError> for Failure {
    fn from(e: SignalIoError) -> Self {
        match e {
            SignalIoError::Io { .. } | SignalIoError::UnknownLayout { .. } => Failure::input(e),
            _ => Failure::contract(e),
        }
    }
}

impl From<DspError> for Failure {
    fn from(e: DspError) -> Self {
        match e {
            DspError::SignalIo(inner) => inner.into(),
            DspError::Io { .. } => Failure::input(e),
            DspError::InvalidBand { .. } => Failure::internal(e),
            _ => Failure::contract(e),
        }
    }
}

impl From<SpectrogramError> for Failure {
    fn from(e: SpectrogramError) -> Self {
        match e {
            SpectrogramError::Io { .. } => Failure::input(e),
            SpectrogramError::CacheCorrupt { .. } => Failure::contract(e),
            _ => Failure::internal(e),
        }
    }
}

impl From<NnError> for Failure {
    fn from(e: NnError) -> Self {
        match e {
            NnError::Io { .. } | NnError::InvalidConfig(_) => Failure::input(e),
            NnError::CheckpointCorrupt { .. } | NnError::ShapeMismatch(_) => Failure::contract(e),
            NnError::NonFinite(_) => Failure::internal(e),
        }
    }
}

impl From<TrainingError> for Failure {
    fn from(e: TrainingError) -> Self {
        match e {
            TrainingError::Nn(inner) => inner.into(),
            TrainingError::TooFewSamples { .. } | TrainingError::MissingLabel(_) => Failure::contract(e),
            TrainingError::ConfigMismatch(_)
            | TrainingError::BadConfig { .. }
            | TrainingError::InvalidSetting(_) => Failure::input(e),
            _ => Failure::internal(e),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::internal(e)
    }
}
