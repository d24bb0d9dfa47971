use std::collections::HashMap;
use std::net::IpAddr;

use crate::dataset::{AttackLabel, Direction, FeatureRecord, MacAddr, PacketEvent};
use crate::error::{Error, Result};

use super::kernel::{DampedStat1D, DampedStat2D, Joint, Moments};
use super::schema::{FeatureSchema, KeyKind, DECAY_RATES, FEATURE_COUNT, SCHEMA_VERSION};

const RATES: usize = DECAY_RATES.len();

/// Identity of one aggregated stream.
///
/// Channel and socket identities are oriented so the monitored device's side
/// comes first: an inbound packet from `p` to `d` belongs to the same stream
/// as an outbound packet from `d` to `p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamKey {
    SrcIp(IpAddr),
    SrcMacIp(MacAddr, IpAddr),
    Channel(IpAddr, IpAddr),
    Socket(IpAddr, Option<u16>, IpAddr, Option<u16>),
}

impl StreamKey {
    pub fn kind(&self) -> KeyKind {
        match self {
            StreamKey::SrcIp(_) => KeyKind::SrcIp,
            StreamKey::SrcMacIp(..) => KeyKind::SrcMacIp,
            StreamKey::Channel(..) => KeyKind::Channel,
            StreamKey::Socket(..) => KeyKind::Socket,
        }
    }

    pub fn src_ip(e: &PacketEvent) -> Self {
        StreamKey::SrcIp(e.src_ip)
    }

    pub fn src_mac_ip(e: &PacketEvent) -> Self {
        StreamKey::SrcMacIp(e.src_mac, e.src_ip)
    }

    pub fn channel(e: &PacketEvent) -> Self {
        match e.direction {
            Direction::Outbound => StreamKey::Channel(e.src_ip, e.dst_ip),
            Direction::Inbound => StreamKey::Channel(e.dst_ip, e.src_ip),
        }
    }

    pub fn socket(e: &PacketEvent) -> Self {
        match e.direction {
            Direction::Outbound => StreamKey::Socket(e.src_ip, e.src_port, e.dst_ip, e.dst_port),
            Direction::Inbound => StreamKey::Socket(e.dst_ip, e.dst_port, e.src_ip, e.src_port),
        }
    }
}

#[derive(Debug, Clone, Default)]
struct JitterCell {
    last_arrival: f64,
    stats: [DampedStat1D; RATES],
}

/// All per-stream statistic cells for one monitored device.
///
/// Keys are never evicted. A key that was never updated reads as zeros.
#[derive(Debug, Clone, Default)]
pub struct StatRegistry {
    src_ip: HashMap<StreamKey, [DampedStat1D; RATES]>,
    src_mac_ip: HashMap<StreamKey, [DampedStat1D; RATES]>,
    channel: HashMap<StreamKey, [DampedStat2D; RATES]>,
    // Directed (src_ip, dst_ip); inter-arrival times of one sender on a channel.
    jitter: HashMap<(IpAddr, IpAddr), JitterCell>,
    socket: HashMap<StreamKey, [DampedStat2D; RATES]>,
    clock: Option<f64>,
}

impl StatRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of distinct streams tracked, across all key kinds.
    pub fn stream_count(&self) -> usize {
        self.src_ip.len() + self.src_mac_ip.len() + self.channel.len() + self.jitter.len() + self.socket.len()
    }

    /// Timestamp of the latest packet absorbed.
    pub fn clock(&self) -> Option<f64> {
        self.clock
    }

    pub fn read_1d(&self, key: &StreamKey, decay: usize, t: f64) -> Result<Moments> {
        let table = match key.kind() {
            KeyKind::SrcIp => &self.src_ip,
            KeyKind::SrcMacIp => &self.src_mac_ip,
            _ => return Err(Error::Contract(format!("{key:?} is not a one-dimensional stream"))),
        };
        match table.get(key) {
            Some(cells) => cells[decay].read_at(t, DECAY_RATES[decay]),
            None => Ok(Moments::default()),
        }
    }

    pub fn read_2d(&self, key: &StreamKey, decay: usize, t: f64) -> Result<(Moments, Moments, Joint)> {
        let table = match key.kind() {
            KeyKind::Channel => &self.channel,
            KeyKind::Socket => &self.socket,
            _ => return Err(Error::Contract(format!("{key:?} is not a two-dimensional stream"))),
        };
        let rate = DECAY_RATES[decay];
        match table.get(key) {
            Some(cells) => {
                let c = &cells[decay];
                Ok((c.a.read_at(t, rate)?, c.b.read_at(t, rate)?, c.read_at(t, rate)?))
            }
            None => Ok(Default::default()),
        }
    }

    pub fn read_jitter(&self, src: IpAddr, dst: IpAddr, decay: usize, t: f64) -> Result<Moments> {
        match self.jitter.get(&(src, dst)) {
            Some(cell) => cell.stats[decay].read_at(t, DECAY_RATES[decay]),
            None => Ok(Moments::default()),
        }
    }

    fn absorb(&mut self, e: &PacketEvent) -> Result<()> {
        let t = e.timestamp;
        let x = f64::from(e.size);

        // Size statistics keyed by the packet's own source.
        let cells = self.src_ip.entry(StreamKey::src_ip(e)).or_default();
        for (cell, rate) in cells.iter_mut().zip(DECAY_RATES) {
            cell.update(x, t, rate)?;
        }
        let cells = self.src_mac_ip.entry(StreamKey::src_mac_ip(e)).or_default();
        for (cell, rate) in cells.iter_mut().zip(DECAY_RATES) {
            cell.update(x, t, rate)?;
        }

        let cells = self.channel.entry(StreamKey::channel(e)).or_default();
        for (cell, rate) in cells.iter_mut().zip(DECAY_RATES) {
            cell.update(x, e.direction, t, rate)?;
        }
        let cells = self.socket.entry(StreamKey::socket(e)).or_default();
        for (cell, rate) in cells.iter_mut().zip(DECAY_RATES) {
            cell.update(x, e.direction, t, rate)?;
        }

        match self.jitter.get_mut(&(e.src_ip, e.dst_ip)) {
            Some(cell) => {
                let gap = t - cell.last_arrival;
                for (stat, rate) in cell.stats.iter_mut().zip(DECAY_RATES) {
                    stat.update(gap, t, rate)?;
                }
                cell.last_arrival = t;
            }
            None => {
                // First packet on the channel only starts the arrival clock.
                self.jitter.insert(
                    (e.src_ip, e.dst_ip),
                    JitterCell {
                        last_arrival: t,
                        ..Default::default()
                    },
                );
            }
        }
        Ok(())
    }

    fn snapshot(&self, e: &PacketEvent, out: &mut Vec<f64>) -> Result<()> {
        let t = e.timestamp;
        let src_ip = StreamKey::src_ip(e);
        let src_mac_ip = StreamKey::src_mac_ip(e);
        let channel = StreamKey::channel(e);
        let socket = StreamKey::socket(e);
        let own = |a: Moments, b: Moments| match e.direction {
            Direction::Outbound => a,
            Direction::Inbound => b,
        };
        let moments = |m: Moments| [m.weight, m.mean, m.variance];
        let joint = |j: Joint| [j.magnitude, j.radius, j.covariance, j.pcc];

        for decay in 0..RATES {
            out.extend(moments(self.read_1d(&src_ip, decay, t)?));
            out.extend(moments(self.read_1d(&src_mac_ip, decay, t)?));
            let (a, b, j) = self.read_2d(&channel, decay, t)?;
            out.extend(moments(own(a, b)));
            out.extend(joint(j));
            out.extend(moments(self.read_jitter(e.src_ip, e.dst_ip, decay, t)?));
            let (a, b, j) = self.read_2d(&socket, decay, t)?;
            out.extend(moments(own(a, b)));
            out.extend(joint(j));
        }
        Ok(())
    }
}

/// Absorbs one packet into `registry` and returns its behavioral snapshot in
/// the canonical slot order of `schema`.
///
/// Packets must arrive in non-decreasing timestamp order; a packet older than
/// the registry's clock is rejected before any state changes.
pub fn extract_features(
    event: &PacketEvent,
    registry: &mut StatRegistry,
    schema: &FeatureSchema,
) -> Result<FeatureRecord> {
    if schema.version() != SCHEMA_VERSION || schema.len() != FEATURE_COUNT {
        return Err(Error::VersionMismatch {
            expected: format!("feature schema v{SCHEMA_VERSION}"),
            found: format!("v{} with {} slots", schema.version(), schema.len()),
        });
    }
    event.validate().map_err(Error::Contract)?;
    if let Some(clock) = registry.clock {
        if event.timestamp < clock {
            return Err(Error::Contract(format!(
                "packet at {} arrived after {clock}",
                event.timestamp
            )));
        }
    }
    registry.absorb(event)?;
    registry.clock = Some(event.timestamp);

    let mut features = Vec::with_capacity(FEATURE_COUNT);
    registry.snapshot(event, &mut features)?;
    FeatureRecord::new(features, AttackLabel::BENIGN, Some(event.timestamp))
}

/// Stateful wrapper around a [`StatRegistry`] for one monitored device.
#[derive(Debug, Clone, Default)]
pub struct FeatureExtractor {
    registry: StatRegistry,
    schema: FeatureSchema,
}

impl FeatureExtractor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn registry(&self) -> &StatRegistry {
        &self.registry
    }

    pub fn extract(&mut self, event: &PacketEvent) -> Result<FeatureRecord> {
        extract_features(event, &mut self.registry, &self.schema)
    }

    pub fn extract_all<'a>(&mut self, events: impl IntoIterator<Item = &'a PacketEvent>) -> Result<Vec<FeatureRecord>> {
        events.into_iter().map(|e| self.extract(e)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::schema::{Slot, Statistic};

    fn ev(t: f64, src: &str, dst: &str, size: u32, dir: Direction) -> PacketEvent {
        PacketEvent {
            timestamp: t,
            src_mac: "02:00:00:00:00:01".parse().unwrap(),
            src_ip: src.parse().unwrap(),
            dst_ip: dst.parse().unwrap(),
            src_port: Some(40000),
            dst_port: Some(443),
            size,
            direction: dir,
        }
    }

    fn slot_value(schema: &FeatureSchema, rec: &FeatureRecord, kind: KeyKind, stat: Statistic, decay: usize) -> f64 {
        let idx = schema
            .slots()
            .iter()
            .position(|s| *s == Slot { kind, stat, decay })
            .unwrap();
        rec.features()[idx]
    }

    #[test]
    fn first_packet_snapshot() {
        let mut fx = FeatureExtractor::new();
        let rec = fx
            .extract(&ev(10.0, "10.0.0.5", "10.0.0.9", 60, Direction::Outbound))
            .unwrap();
        assert_eq!(rec.features().len(), FEATURE_COUNT);
        let schema = FeatureSchema::v1();
        for decay in 0..RATES {
            assert_eq!(slot_value(&schema, &rec, KeyKind::SrcIp, Statistic::Weight, decay), 1.0);
            assert_eq!(slot_value(&schema, &rec, KeyKind::SrcIp, Statistic::Mean, decay), 60.0);
            assert_eq!(
                slot_value(&schema, &rec, KeyKind::SrcIp, Statistic::Variance, decay),
                0.0
            );
            assert_eq!(slot_value(&schema, &rec, KeyKind::Channel, Statistic::Pcc, decay), 0.0);
            assert_eq!(
                slot_value(&schema, &rec, KeyKind::ChannelJitter, Statistic::Weight, decay),
                0.0
            );
        }
    }

    #[test]
    fn jitter_starts_on_second_packet() {
        let mut fx = FeatureExtractor::new();
        let schema = FeatureSchema::v1();
        fx.extract(&ev(1.0, "10.0.0.5", "10.0.0.9", 60, Direction::Outbound))
            .unwrap();
        let rec = fx
            .extract(&ev(1.25, "10.0.0.5", "10.0.0.9", 60, Direction::Outbound))
            .unwrap();
        assert_eq!(
            slot_value(&schema, &rec, KeyKind::ChannelJitter, Statistic::Weight, 0),
            1.0
        );
        assert_eq!(
            slot_value(&schema, &rec, KeyKind::ChannelJitter, Statistic::Mean, 0),
            0.25
        );
    }

    #[test]
    fn inbound_reply_joins_outbound_channel() {
        let mut fx = FeatureExtractor::new();
        let schema = FeatureSchema::v1();
        fx.extract(&ev(1.0, "10.0.0.5", "10.0.0.9", 3, Direction::Outbound))
            .unwrap();
        let mut reply = ev(1.0, "10.0.0.9", "10.0.0.5", 4, Direction::Inbound);
        reply.src_port = Some(443);
        reply.dst_port = Some(40000);
        let rec = fx.extract(&reply).unwrap();
        for kind in [KeyKind::Channel, KeyKind::Socket] {
            assert_eq!(slot_value(&schema, &rec, kind, Statistic::Magnitude, 0), 5.0);
            // Own-direction moments are the inbound side.
            assert_eq!(slot_value(&schema, &rec, kind, Statistic::Mean, 0), 4.0);
        }
    }

    #[test]
    fn out_of_order_rejected_without_mutation() {
        let mut fx = FeatureExtractor::new();
        fx.extract(&ev(5.0, "10.0.0.5", "10.0.0.9", 60, Direction::Outbound))
            .unwrap();
        let before = fx.registry().stream_count();
        let err = fx.extract(&ev(4.0, "10.0.0.7", "10.0.0.9", 60, Direction::Outbound));
        assert!(matches!(err, Err(Error::Contract(_))));
        assert_eq!(fx.registry().stream_count(), before);
    }

    #[test]
    fn spoofed_source_reads_as_single_observation() {
        let mut fx = FeatureExtractor::new();
        let schema = FeatureSchema::v1();
        for i in 0..50 {
            fx.extract(&ev(
                i as f64 * 0.1,
                "10.0.0.5",
                "10.0.0.9",
                100 + i,
                Direction::Outbound,
            ))
            .unwrap();
        }
        let rec = fx
            .extract(&ev(5.0, "203.0.113.77", "10.0.0.9", 512, Direction::Inbound))
            .unwrap();
        for decay in 0..RATES {
            assert_eq!(slot_value(&schema, &rec, KeyKind::SrcIp, Statistic::Weight, decay), 1.0);
            assert_eq!(slot_value(&schema, &rec, KeyKind::SrcIp, Statistic::Mean, decay), 512.0);
            assert_eq!(
                slot_value(&schema, &rec, KeyKind::SrcMacIp, Statistic::Weight, decay),
                1.0
            );
        }
    }
}
