use thiserror::Error;

use crate::pilot::NyquistReport;

/// Errors surfaced by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("argument outside domain: {0}")]
    Domain(String),

    #[error("path {path} has delay {delay} which is not on the tap grid of {fft_size} subcarriers / {num_taps} taps")]
    OffGridDelay {
        path: usize,
        delay: f64,
        fft_size: usize,
        num_taps: usize,
    },

    #[error("pilot pattern aliases: {0}")]
    Nyquist(NyquistReport),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("failed to parse config: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("failed to serialize config: {0}")]
    TomlSer(#[from] toml::ser::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
