//! Shared helpers for integration tests: a full-history reference for the
//! feature extractor and a random trace generator.

#![allow(dead_code)]

use std::collections::HashMap;
use std::net::{IpAddr, Ipv4Addr};

use iotguard::dataset::{Direction, MacAddr, PacketEvent};
use iotguard::stats::{DECAY_RATES, FEATURE_COUNT};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const RATES: usize = 5;

/// One expected slot value plus the magnitude its rounding error scales with.
/// `scale` is infinite when the slot is numerically undefined (a correlation
/// over a variance that rounds to zero).
#[derive(Debug, Clone, Copy)]
pub struct Expected {
    pub value: f64,
    pub scale: f64,
}

impl Expected {
    fn new(value: f64, scale: f64) -> Self {
        Expected { value, scale }
    }

    pub fn accepts(&self, got: f64, rel: f64) -> bool {
        if self.scale.is_infinite() || rel * self.scale >= 2.0 {
            return (-1.0..=1.0).contains(&got);
        }
        (got - self.value).abs() <= rel * self.value.abs().max(self.scale)
    }

    pub fn relative_error(&self, got: f64) -> f64 {
        if self.scale.is_infinite() {
            return 0.0;
        }
        let denom = self.value.abs().max(self.scale);
        if denom == 0.0 {
            (got - self.value).abs()
        } else {
            (got - self.value).abs() / denom
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Sums {
    w: f64,
    mean: f64,
    var: f64,
    /// Weighted mean of squares.
    e2: f64,
}

/// Decayed moments of `(t_j, x_j)` seen from time `t`, computed from scratch
/// with a two-pass variance.
fn moments(history: &[(f64, f64)], t: f64, lambda: f64) -> Sums {
    if history.is_empty() {
        return Sums::default();
    }
    let g: Vec<f64> = history.iter().map(|&(tj, _)| (-lambda * (t - tj)).exp2()).collect();
    let w: f64 = g.iter().sum();
    let mean = g.iter().zip(history).map(|(g, (_, x))| g * x).sum::<f64>() / w;
    let var = g
        .iter()
        .zip(history)
        .map(|(g, (_, x))| g * (x - mean) * (x - mean))
        .sum::<f64>()
        / w;
    let e2 = g.iter().zip(history).map(|(g, (_, x))| g * x * x).sum::<f64>() / w;
    Sums { w, mean, var, e2 }
}

#[derive(Debug, Clone, Copy)]
struct JointPacket {
    t: f64,
    outbound: bool,
    residual: [f64; RATES],
    /// Most recent residual of the opposite side before this packet.
    partner: [f64; RATES],
}

/// Every packet of one bidirectional stream, with residuals computed at
/// arrival from the full side history.
#[derive(Debug, Default)]
struct JointHistory {
    out: Vec<(f64, f64)>,
    inb: Vec<(f64, f64)>,
    packets: Vec<JointPacket>,
}

impl JointHistory {
    fn push(&mut self, t: f64, x: f64, outbound: bool) {
        let side = if outbound { &mut self.out } else { &mut self.inb };
        side.push((t, x));
        let mut residual = [0.0; RATES];
        for (d, r) in residual.iter_mut().enumerate() {
            *r = x - moments(side, t, DECAY_RATES[d].lambda()).mean;
        }
        let partner = self
            .packets
            .iter()
            .rev()
            .find(|p| p.outbound != outbound)
            .map(|p| p.residual)
            .unwrap_or([0.0; RATES]);
        self.packets.push(JointPacket {
            t,
            outbound,
            residual,
            partner,
        });
    }

    /// Own-side moments plus (magnitude, radius, covariance, pcc).
    fn expected(&self, t: f64, d: usize, outbound: bool) -> [Expected; 7] {
        let lambda = DECAY_RATES[d].lambda();
        let a = moments(&self.out, t, lambda);
        let b = moments(&self.inb, t, lambda);
        let own = if outbound { a } else { b };

        let magnitude = (a.mean * a.mean + b.mean * b.mean).sqrt();
        let radius = (a.var * a.var + b.var * b.var).sqrt();
        let total = a.w + b.w;
        let (rms_a, rms_b) = (a.e2.sqrt(), b.e2.sqrt());
        let mut sr = 0.0;
        let mut sr_scale = 0.0;
        for p in &self.packets {
            let g = (-lambda * (t - p.t)).exp2();
            let (r, q) = (p.residual[d], p.partner[d]);
            sr += g * r * q;
            let (rms_own, rms_other) = if p.outbound { (rms_a, rms_b) } else { (rms_b, rms_a) };
            sr_scale += g * (r.abs() + rms_own) * (q.abs() + rms_other);
        }
        let (cov, cov_scale) = if total == 0.0 {
            (0.0, 0.0)
        } else {
            (sr / total, sr_scale / total)
        };

        let (sa, sb) = (a.var.sqrt(), b.var.sqrt());
        let pcc_expected = if self.out.len() < 2 || self.inb.len() < 2 {
            // A side with at most one packet has exactly zero variance.
            Expected::new(0.0, 0.0)
        } else if sa * sb == 0.0 {
            Expected::new(0.0, f64::INFINITY)
        } else {
            let pcc = (cov / (sa * sb)).clamp(-1.0, 1.0);
            let cond = cov_scale / (sa * sb) + pcc.abs() * (a.e2 / (2.0 * a.var) + b.e2 / (2.0 * b.var));
            Expected::new(pcc, cond)
        };

        [
            Expected::new(own.w, 0.0),
            Expected::new(own.mean, own.e2.sqrt()),
            Expected::new(own.var, own.e2),
            Expected::new(magnitude, (a.e2 + b.e2).sqrt()),
            Expected::new(radius, (a.e2 * a.e2 + b.e2 * b.e2).sqrt()),
            Expected::new(cov, cov_scale),
            pcc_expected,
        ]
    }
}

fn expected_1d(history: &[(f64, f64)], t: f64, d: usize) -> [Expected; 3] {
    let m = moments(history, t, DECAY_RATES[d].lambda());
    [
        Expected::new(m.w, 0.0),
        Expected::new(m.mean, m.e2.sqrt()),
        Expected::new(m.var, m.e2),
    ]
}

/// Brute-force feature extractor: keeps every packet and recomputes each
/// statistic from its complete history on every request.
#[derive(Debug, Default)]
pub struct FullHistory {
    src_ip: HashMap<IpAddr, Vec<(f64, f64)>>,
    src_mac_ip: HashMap<(MacAddr, IpAddr), Vec<(f64, f64)>>,
    channel: HashMap<(IpAddr, IpAddr), JointHistory>,
    socket: HashMap<(IpAddr, Option<u16>, IpAddr, Option<u16>), JointHistory>,
    arrivals: HashMap<(IpAddr, IpAddr), Vec<f64>>,
}

impl FullHistory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records the packet and returns the expected 115 slots.
    pub fn push(&mut self, e: &PacketEvent) -> Vec<Expected> {
        let t = e.timestamp;
        let x = f64::from(e.size);
        let outbound = e.direction == Direction::Outbound;
        let (near, far, near_port, far_port) = if outbound {
            (e.src_ip, e.dst_ip, e.src_port, e.dst_port)
        } else {
            (e.dst_ip, e.src_ip, e.dst_port, e.src_port)
        };

        self.src_ip.entry(e.src_ip).or_default().push((t, x));
        self.src_mac_ip.entry((e.src_mac, e.src_ip)).or_default().push((t, x));
        self.channel.entry((near, far)).or_default().push(t, x, outbound);
        self.socket
            .entry((near, near_port, far, far_port))
            .or_default()
            .push(t, x, outbound);
        let arrivals = self.arrivals.entry((e.src_ip, e.dst_ip)).or_default();
        arrivals.push(t);
        let gaps: Vec<(f64, f64)> = arrivals.windows(2).map(|w| (w[1], w[1] - w[0])).collect();

        let mut out = Vec::with_capacity(FEATURE_COUNT);
        for d in 0..RATES {
            out.extend(expected_1d(&self.src_ip[&e.src_ip], t, d));
            out.extend(expected_1d(&self.src_mac_ip[&(e.src_mac, e.src_ip)], t, d));
            out.extend(self.channel[&(near, far)].expected(t, d, outbound));
            out.extend(expected_1d(&gaps, t, d));
            out.extend(self.socket[&(near, near_port, far, far_port)].expected(t, d, outbound));
        }
        out
    }
}

/// Random packets among a device and `hosts` peers: each packet picks a
/// sender and a different receiver uniformly, so many streams stay short.
/// Direction follows whether the sender is the device.
pub fn random_trace(seed: u64, packets: usize, hosts: usize) -> Vec<PacketEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ips: Vec<IpAddr> = (0..=hosts)
        .map(|i| IpAddr::V4(Ipv4Addr::new(10, 0, (i / 250) as u8, (i % 250 + 1) as u8)))
        .collect();
    let device = ips[0];
    let macs = |i: usize, k: u8| MacAddr([0x02, 0, 0, (i >> 8) as u8, i as u8, k]);
    let ports = [53u16, 80, 443, 8883];
    let mut t = 1_000.0;
    (0..packets)
        .map(|_| {
            // Some packets share a timestamp.
            if rng.gen_bool(0.9) {
                t += -0.004 * (1.0 - rng.gen::<f64>()).ln();
            }
            let s = rng.gen_range(0..ips.len());
            let mut r = rng.gen_range(0..ips.len() - 1);
            if r >= s {
                r += 1;
            }
            let (src_port, dst_port) = if rng.gen_bool(0.1) {
                (None, None)
            } else {
                (
                    Some(ports[rng.gen_range(0..ports.len())]),
                    Some(ports[rng.gen_range(0..ports.len())]),
                )
            };
            PacketEvent {
                timestamp: t,
                src_mac: macs(s, rng.gen_range(0..2)),
                src_ip: ips[s],
                dst_ip: ips[r],
                src_port,
                dst_port,
                size: rng.gen_range(60..=1514),
                direction: if ips[s] == device {
                    Direction::Outbound
                } else {
                    Direction::Inbound
                },
            }
        })
        .collect()
}

/// Worst relative error and count of ill-conditioned slots over one trace.
#[derive(Debug, Default, Clone)]
pub struct OracleReport {
    pub packets: usize,
    pub worst: f64,
    pub worst_slot: usize,
    pub failures: usize,
    /// Slots whose error bound exceeds the value range.
    pub unresolvable: usize,
    /// Slots checked against a scale a thousand times their value.
    pub ill_conditioned: usize,
}

pub fn compare_trace(events: &[PacketEvent], rel: f64) -> OracleReport {
    use iotguard::stats::FeatureExtractor;
    let mut extractor = FeatureExtractor::new();
    let mut oracle = FullHistory::new();
    let mut report = OracleReport::default();
    for e in events {
        let got = extractor.extract(e).expect("valid trace");
        let want = oracle.push(e);
        for (i, (g, w)) in got.features().iter().zip(&want).enumerate() {
            if w.scale.is_infinite() || rel * w.scale >= 2.0 {
                report.unresolvable += 1;
            } else if w.scale > 1e3 * w.value.abs().max(1.0) {
                report.ill_conditioned += 1;
            }
            if !w.accepts(*g, rel) {
                report.failures += 1;
            }
            let err = w.relative_error(*g);
            if err > report.worst {
                report.worst = err;
                report.worst_slot = i;
            }
        }
        report.packets += 1;
    }
    report
}
