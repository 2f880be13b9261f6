//! Command errors, their exit codes and the JSON written to stderr.

use std::path::Path;

use serde::Serialize;
use taukit::synth::SynthError;
use taukit::{BandError, DataError, EstimatorError, InferenceError};
use thiserror::Error;

use crate::plot::PlotError;

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_DEGENERATE: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Bands(#[from] BandError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Plot(#[from] PlotError),
    #[error("every tau value is undefined")]
    AllUndefined,
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub fn config(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

pub fn write_error(path: &Path, source: std::io::Error) -> CliError {
    CliError::Write {
        path: path.display().to_string(),
        source,
    }
}

fn estimator_code(e: &EstimatorError) -> u8 {
    match e {
        EstimatorError::GlobalOddsUndefined
        | EstimatorError::GlobalPrevalenceUndefined
        | EstimatorError::GlobalRateUndefined => EXIT_DEGENERATE,
        EstimatorError::WrongMode { .. } | EstimatorError::KTooLarge { .. } | EstimatorError::InvalidArgument(_) => {
            EXIT_CONFIG
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Bands(_) => EXIT_CONFIG,
            CliError::Data(DataError::InvalidRule(_)) => EXIT_CONFIG,
            CliError::Data(_) | CliError::Synth(SynthError::Data(_)) => EXIT_DATA,
            CliError::Synth(SynthError::InvalidConfig(_)) => EXIT_CONFIG,
            CliError::Estimator(e) | CliError::Inference(InferenceError::Estimator(e)) => estimator_code(e),
            CliError::Inference(
                InferenceError::AllCensored { .. } | InferenceError::NoCrossing | InferenceError::NoUsableBands,
            )
            | CliError::Plot(_)
            | CliError::AllUndefined => EXIT_DEGENERATE,
            CliError::Inference(_) => EXIT_CONFIG,
            CliError::Write { .. } => EXIT_DATA,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            EXIT_CONFIG => "config",
            EXIT_DATA => "data",
            _ => "numeric_degeneracy",
        }
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    kind: &'a str,
    exit_code: u8,
    message: String,
}

#[derive(Serialize)]
struct ErrorDoc<'a> {
    error: ErrorBody<'a>,
}

/// Machine-readable form of an error.
pub fn error_json(kind: &str, exit_code: u8, message: String) -> String {
    serde_json::to_string(&ErrorDoc {
        error: ErrorBody {
            kind,
            exit_code,
            message,
        },
    })
    .expect("error document serialises")
}
