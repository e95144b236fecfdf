//! Link-level simulator of a multiuser MIMO-OFDM downlink where terminals
//! predict their own fading channels from pilots and the base station
//! schedules zero-forcing beams on those predictions.

pub mod analytics;
pub mod channel;
pub mod error;
pub mod esprit;
pub mod linalg;
pub mod phy;
pub mod pilot;
pub mod scheduler;
pub mod sim;
pub mod tracker;
pub mod wiener;

pub use error::{Error, Result};
