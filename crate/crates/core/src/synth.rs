//! Seeded synthetic packet streams with labeled attack segments.
//!
//! Benign traffic is a stationary exchange between the device and a fixed set
//! of peers. An attack segment replaces it for its duration with a flood from
//! the device whose rate, packet size and target fan-out are scaled, and whose
//! source address may be spoofed. Benign packets are drawn for the whole run
//! first, so moving or adding a segment leaves all other benign packets
//! unchanged.

use std::net::{IpAddr, Ipv4Addr};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Deserializer, Serialize};

use crate::dataset::{AttackLabel, Direction, LabelSegment, MacAddr, PacketEvent, Vector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenignProfile {
    /// Packets per second.
    pub rate: f64,
    pub size_mean: f64,
    pub size_std: f64,
    /// Distinct peers the device talks to.
    pub peers: usize,
    /// Service ports on the peers.
    pub ports: Vec<u16>,
    /// Fraction of packets sent by the device.
    pub outbound_fraction: f64,
}

impl Default for BenignProfile {
    fn default() -> Self {
        BenignProfile {
            rate: 100.0,
            size_mean: 300.0,
            size_std: 40.0,
            peers: 4,
            ports: vec![80, 443, 8883],
            outbound_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSegment {
    pub onset: f64,
    pub duration: f64,
    #[serde(deserialize_with = "label_from_str", serialize_with = "label_to_str")]
    pub label: AttackLabel,
    #[serde(default = "one")]
    pub rate_multiplier: f64,
    #[serde(default = "one")]
    pub size_multiplier: f64,
    /// Distinct targets; defaults to 256 for scans and 1 otherwise.
    #[serde(default)]
    pub fan_out: Option<usize>,
    /// Draw a random source address for every attack packet.
    #[serde(default)]
    pub spoof: bool,
}

fn one() -> f64 {
    1.0
}

fn label_from_str<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<AttackLabel, D::Error> {
    let s = String::deserialize(d)?;
    s.parse().map_err(serde::de::Error::custom)
}

fn label_to_str<S: serde::Serializer>(l: &AttackLabel, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(l)
}

impl AttackSegment {
    pub fn end(&self) -> f64 {
        self.onset + self.duration
    }

    fn fan_out(&self) -> usize {
        self.fan_out
            .unwrap_or(if self.label.vector() == Vector::Scan { 256 } else { 1 })
            .max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub device_ip: IpAddr,
    pub device_mac: MacAddr,
    pub start_time: f64,
    /// Seconds.
    pub duration: f64,
    pub seed: u64,
    pub benign: BenignProfile,
    pub attacks: Vec<AttackSegment>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            device_ip: IpAddr::V4(Ipv4Addr::new(192, 168, 1, 10)),
            device_mac: MacAddr([0x02, 0, 0, 0, 0, 0x10]),
            start_time: 0.0,
            duration: 60.0,
            seed: 0,
            benign: BenignProfile::default(),
            attacks: Vec::new(),
        }
    }
}

impl SynthConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: SynthConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let b = &self.benign;
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.duration) {
            return Err(Error::Config(format!(
                "duration must be positive, got {}",
                self.duration
            )));
        }
        if !(self.start_time >= 0.0 && self.start_time.is_finite()) {
            return Err(Error::Config("start_time must be finite and non-negative".into()));
        }
        if !positive(b.rate) || !positive(b.size_mean) || !(b.size_std >= 0.0 && b.size_std.is_finite()) {
            return Err(Error::Config("benign rate and size must be positive".into()));
        }
        if b.peers == 0 || b.ports.is_empty() {
            return Err(Error::Config("benign traffic needs at least one peer and port".into()));
        }
        if !(0.0..=1.0).contains(&b.outbound_fraction) {
            return Err(Error::Config("outbound_fraction must lie in [0, 1]".into()));
        }
        let mut segs: Vec<&AttackSegment> = self.attacks.iter().collect();
        segs.sort_by(|a, b| a.onset.total_cmp(&b.onset));
        for s in &segs {
            if s.label.is_benign() {
                return Err(Error::Config("attack segments need an attack label".into()));
            }
            if s.onset.is_nan() || s.onset < 0.0 || !positive(s.duration) || s.end() > self.duration {
                return Err(Error::Config(format!(
                    "segment {} at {}s for {}s does not fit in {}s",
                    s.label, s.onset, s.duration, self.duration
                )));
            }
            if !positive(s.rate_multiplier) || !positive(s.size_multiplier) {
                return Err(Error::Config("segment multipliers must be positive".into()));
            }
        }
        for w in segs.windows(2) {
            if w[1].onset < w[0].end() {
                return Err(Error::Config(format!(
                    "segments {} at {}s and {} at {}s overlap",
                    w[0].label, w[0].onset, w[1].label, w[1].onset
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub events: Vec<PacketEvent>,
    /// Absolute-time label windows, one per attack segment.
    pub labels: Vec<LabelSegment>,
}

/// Whole microseconds to seconds; matches what a CSV round trip reads back.
fn micros_to_secs(us: i64) -> f64 {
    us as f64 / 1e6
}

fn secs_to_micros(t: f64) -> i64 {
    (t * 1e6).round() as i64
}

fn peer_ip(device: IpAddr, k: usize) -> IpAddr {
    match device {
        IpAddr::V4(v4) => {
            let o = v4.octets();
            IpAddr::V4(Ipv4Addr::new(o[0], o[1], o[2], (o[3] as usize + 1 + k) as u8))
        }
        IpAddr::V6(v6) => {
            let mut s = v6.segments();
            s[7] = s[7].wrapping_add(1 + k as u16);
            IpAddr::from(s)
        }
    }
}

fn target_ip(k: usize) -> IpAddr {
    IpAddr::V4(Ipv4Addr::new(203, 0, (k >> 8) as u8, k as u8))
}

fn spoofed_ip(rng: &mut impl Rng) -> IpAddr {
    IpAddr::V4(Ipv4Addr::new(
        rng.gen_range(1..=223),
        rng.gen(),
        rng.gen(),
        rng.gen_range(1..=254),
    ))
}

fn peer_mac(k: usize) -> MacAddr {
    MacAddr([0x02, 0, 0, 0, 1, k as u8])
}

fn draw_size(rng: &mut impl Rng, dist: &Normal<f64>) -> u32 {
    dist.sample(rng).round().clamp(40.0, 1514.0) as u32
}

/// `count` instants spread uniformly over `[from, to)` microseconds, one per
/// equal slot with a random offset inside the slot.
fn slot_times(rng: &mut impl Rng, from: i64, to: i64, count: usize) -> Vec<i64> {
    let span = (to - from) as f64;
    (0..count)
        .map(|i| {
            let lo = span * i as f64 / count as f64;
            let hi = span * (i + 1) as f64 / count as f64;
            from + (lo + rng.gen::<f64>() * (hi - lo)).floor() as i64
        })
        .collect()
}

/// Independent stream for attack segment `k`, so benign traffic does not
/// depend on where attacks are placed.
fn segment_rng(seed: u64, k: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (k as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

pub fn synthesize(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let start = secs_to_micros(cfg.start_time);
    let end = start + secs_to_micros(cfg.duration);

    let mut segs = cfg.attacks.clone();
    segs.sort_by(|x, y| x.onset.total_cmp(&y.onset));
    let windows: Vec<(i64, i64)> = segs
        .iter()
        .map(|s| (start + secs_to_micros(s.onset), start + secs_to_micros(s.end())))
        .collect();
    let in_attack = |t: i64| windows.iter().any(|&(on, off)| t >= on && t < off);

    let mut events = benign_events(cfg, start, end)?
        .into_iter()
        .filter(|(t, _)| !in_attack(*t))
        .collect::<Vec<_>>();

    let mut labels = Vec::with_capacity(segs.len());
    for (k, (s, &(from, to))) in segs.iter().zip(&windows).enumerate() {
        labels.push(LabelSegment {
            onset: micros_to_secs(from),
            end: micros_to_secs(to),
            label: s.label,
        });
        events.extend(attack_events(cfg, s, from, to, &mut segment_rng(cfg.seed, k))?);
    }
    events.sort_by_key(|(t, _)| *t);
    Ok(SynthOutput {
        events: events.into_iter().map(|(_, e)| e).collect(),
        labels,
    })
}

fn benign_events(cfg: &SynthConfig, from: i64, to: i64) -> Result<Vec<(i64, PacketEvent)>> {
    let b = &cfg.benign;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sizes = Normal::new(b.size_mean, b.size_std).map_err(|e| Error::Config(e.to_string()))?;
    let client_ports: Vec<u16> = (0..b.peers).map(|k| 49152 + k as u16).collect();
    let count = (b.rate * (to - from) as f64 / 1e6).round() as usize;
    let mut out = Vec::with_capacity(count);
    for t in slot_times(&mut rng, from, to, count) {
        let k = rng.gen_range(0..b.peers);
        let port = b.ports[k % b.ports.len()];
        let peer = peer_ip(cfg.device_ip, k);
        let outbound = rng.gen::<f64>() < b.outbound_fraction;
        let size = draw_size(&mut rng, &sizes);
        let event = if outbound {
            PacketEvent {
                timestamp: micros_to_secs(t),
                src_mac: cfg.device_mac,
                src_ip: cfg.device_ip,
                dst_ip: peer,
                src_port: Some(client_ports[k]),
                dst_port: Some(port),
                size,
                direction: Direction::Outbound,
            }
        } else {
            PacketEvent {
                timestamp: micros_to_secs(t),
                src_mac: peer_mac(k),
                src_ip: peer,
                dst_ip: cfg.device_ip,
                src_port: Some(port),
                dst_port: Some(client_ports[k]),
                size,
                direction: Direction::Inbound,
            }
        };
        out.push((t, event));
    }
    Ok(out)
}

fn attack_events(
    cfg: &SynthConfig,
    s: &AttackSegment,
    from: i64,
    to: i64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(i64, PacketEvent)>> {
    let b = &cfg.benign;
    let count = (b.rate * s.rate_multiplier * (to - from) as f64 / 1e6).round() as usize;
    let sizes = Normal::new(b.size_mean * s.size_multiplier, b.size_std * s.size_multiplier)
        .map_err(|e| Error::Config(e.to_string()))?;
    let fan_out = s.fan_out();
    let dst_port = match s.label.vector() {
        Vector::Scan => 23,
        Vector::Udp | Vector::Udpplain => 53,
        _ => 80,
    };
    let times = slot_times(rng, from, to, count);
    Ok(times
        .into_iter()
        .enumerate()
        .map(|(i, t)| {
            let src_ip = if s.spoof { spoofed_ip(rng) } else { cfg.device_ip };
            let event = PacketEvent {
                timestamp: micros_to_secs(t),
                src_mac: cfg.device_mac,
                src_ip,
                dst_ip: target_ip(i % fan_out),
                src_port: Some(rng.gen_range(1024..=65535)),
                dst_port: Some(dst_port),
                size: draw_size(rng, &sizes),
                direction: if src_ip == cfg.device_ip {
                    Direction::Outbound
                } else {
                    Direction::Inbound
                },
            };
            (t, event)
        })
        .collect())
}
