//! Scenario presets, the simulation loop and its outputs.

mod config;
mod metrics;
mod run;
mod taxonomy;

pub use config::{preset, ChannelSettings, HfsConfig, PredictorKind, ScenarioConfig, UserSpec, PRESET_NAMES};
pub use metrics::{read_csv, summarize, write_csv, BlockRecord, HfsBalance, Summary, CSV_COLUMNS};
pub use run::{run, run_lanes, user_channel, user_rng, RunOutput};
pub use taxonomy::{prediction_error, PredictionError};
