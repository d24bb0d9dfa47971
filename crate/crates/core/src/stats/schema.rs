//! Canonical ordering of the 115 snapshot slots.
//!
//! Slots are grouped decay-major: for each of the five decay rates (fastest
//! first) the same 23 statistics appear in the same order.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FEATURE_COUNT: usize = 115;
pub const STATS_PER_DECAY: usize = 23;
pub const SCHEMA_VERSION: u32 = 1;

/// Exponential decay rate, in 1/second, with its nominal window label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayRate {
    lambda: f64,
    window_label: &'static str,
}

impl DecayRate {
    pub const fn new_unchecked(lambda: f64, window_label: &'static str) -> Self {
        DecayRate { lambda, window_label }
    }

    pub fn new(lambda: f64, window_label: &'static str) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Contract(format!("decay rate must be positive, got {lambda}")));
        }
        Ok(Self::new_unchecked(lambda, window_label))
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn window_label(&self) -> &'static str {
        self.window_label
    }
}

/// The five decay rates, in descending lambda order.
pub const DECAY_RATES: [DecayRate; 5] = [
    DecayRate::new_unchecked(5.0, "100ms"),
    DecayRate::new_unchecked(3.0, "500ms"),
    DecayRate::new_unchecked(1.0, "1.5s"),
    DecayRate::new_unchecked(0.1, "10s"),
    DecayRate::new_unchecked(0.01, "1min"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KeyKind {
    SrcIp,
    SrcMacIp,
    Channel,
    ChannelJitter,
    Socket,
}

impl KeyKind {
    pub fn prefix(self) -> &'static str {
        match self {
            KeyKind::SrcIp => "srcip",
            KeyKind::SrcMacIp => "srcmacip",
            KeyKind::Channel => "channel",
            KeyKind::ChannelJitter => "jitter",
            KeyKind::Socket => "socket",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Statistic {
    Weight,
    Mean,
    Variance,
    Magnitude,
    Radius,
    Covariance,
    Pcc,
}

impl Statistic {
    pub fn suffix(self) -> &'static str {
        match self {
            Statistic::Weight => "weight",
            Statistic::Mean => "mean",
            Statistic::Variance => "variance",
            Statistic::Magnitude => "magnitude",
            Statistic::Radius => "radius",
            Statistic::Covariance => "covariance",
            Statistic::Pcc => "pcc",
        }
    }
}

const ONE_D: [Statistic; 3] = [Statistic::Weight, Statistic::Mean, Statistic::Variance];
const TWO_D: [Statistic; 7] = [
    Statistic::Weight,
    Statistic::Mean,
    Statistic::Variance,
    Statistic::Magnitude,
    Statistic::Radius,
    Statistic::Covariance,
    Statistic::Pcc,
];

/// Statistic groups in per-decay order: 3 + 3 + 7 + 3 + 7 = 23.
pub(crate) const GROUPS: [(KeyKind, &[Statistic]); 5] = [
    (KeyKind::SrcIp, &ONE_D),
    (KeyKind::SrcMacIp, &ONE_D),
    (KeyKind::Channel, &TWO_D),
    (KeyKind::ChannelJitter, &ONE_D),
    (KeyKind::Socket, &TWO_D),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Slot {
    pub kind: KeyKind,
    pub stat: Statistic,
    /// Index into [`DECAY_RATES`].
    pub decay: usize,
}

impl Slot {
    pub fn decay_rate(&self) -> DecayRate {
        DECAY_RATES[self.decay]
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}_{}_{}",
            self.kind.prefix(),
            DECAY_RATES[self.decay].window_label,
            self.stat.suffix()
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSchema {
    version: u32,
    slots: Vec<Slot>,
}

impl FeatureSchema {
    pub fn v1() -> Self {
        let mut slots = Vec::with_capacity(FEATURE_COUNT);
        for decay in 0..DECAY_RATES.len() {
            for (kind, stats) in GROUPS {
                for &stat in stats {
                    slots.push(Slot { kind, stat, decay });
                }
            }
        }
        debug_assert_eq!(slots.len(), FEATURE_COUNT);
        FeatureSchema {
            version: SCHEMA_VERSION,
            slots,
        }
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.slots.iter().map(Slot::to_string).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.slots.iter().position(|s| s.to_string() == name)
    }
}

impl Default for FeatureSchema {
    fn default() -> Self {
        Self::v1()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn v1_has_115_unique_slots() {
        let schema = FeatureSchema::v1();
        assert_eq!(schema.len(), FEATURE_COUNT);
        let names: HashSet<String> = schema.names().into_iter().collect();
        assert_eq!(names.len(), FEATURE_COUNT);
        let per_decay: usize = GROUPS.iter().map(|(_, s)| s.len()).sum();
        assert_eq!(per_decay, STATS_PER_DECAY);
    }

    #[test]
    fn decay_rates_descending() {
        assert!(DECAY_RATES.windows(2).all(|w| w[0].lambda() > w[1].lambda()));
        assert!(DecayRate::new(0.0, "x").is_err());
        assert!(DecayRate::new(-1.0, "x").is_err());
    }

    #[test]
    fn first_and_last_names() {
        let names = FeatureSchema::v1().names();
        assert_eq!(names[0], "srcip_100ms_weight");
        assert_eq!(names[22], "socket_100ms_pcc");
        assert_eq!(names[23], "srcip_500ms_weight");
        assert_eq!(names[114], "socket_1min_pcc");
    }
}
