//! Damped per-stream statistics and the 115-slot behavioral snapshot.

mod extract;
mod kernel;
pub mod schema;

pub use extract::{extract_features, FeatureExtractor, StatRegistry, StreamKey};
pub use kernel::{decay_factor, DampedStat1D, DampedStat2D, Joint, Moments};
pub use schema::{DecayRate, FeatureSchema, KeyKind, Slot, Statistic, DECAY_RATES, FEATURE_COUNT, SCHEMA_VERSION};
