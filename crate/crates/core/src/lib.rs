//! Network-based detection of compromised IoT devices.
//!
//! Every packet observed for a device is summarized into a 115-value snapshot
//! of damped traffic statistics ([`stats`]). A deep autoencoder trained on the
//! device's benign snapshots ([`autoencoder`]) reconstructs new snapshots; a
//! reconstruction error above the calibrated threshold marks an instance
//! anomalous, and a strict majority of anomalous instances over a calibrated
//! window marks the stream anomalous ([`calibration`], [`detector`]).

pub mod autoencoder;
pub mod calibration;
pub mod dataset;
pub mod detector;
pub mod error;
pub mod eval;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
