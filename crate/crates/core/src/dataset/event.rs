use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::IpAddr;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EVENT_CSV_HEADER: &str = "timestamp,src_mac,src_ip,dst_ip,src_port,dst_port,size,direction";

/// 6-byte hardware address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct MacAddr(pub [u8; 6]);

impl FromStr for MacAddr {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = [0u8; 6];
        let mut parts = s.split([':', '-']);
        for byte in out.iter_mut() {
            let part = parts.next().ok_or_else(|| format!("bad MAC address {s:?}"))?;
            if part.len() != 2 {
                return Err(format!("bad MAC address {s:?}"));
            }
            *byte = u8::from_str_radix(part, 16).map_err(|_| format!("bad MAC address {s:?}"))?;
        }
        if parts.next().is_some() {
            return Err(format!("bad MAC address {s:?}"));
        }
        Ok(MacAddr(out))
    }
}

impl fmt::Display for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            b[0], b[1], b[2], b[3], b[4], b[5]
        )
    }
}

impl Serialize for MacAddr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MacAddr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Direction of a packet relative to the monitored device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "out", alias = "outbound")]
    Outbound,
    #[serde(rename = "in", alias = "inbound")]
    Inbound,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Outbound => "out",
            Direction::Inbound => "in",
        }
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "out" | "outbound" => Ok(Direction::Outbound),
            "in" | "inbound" => Ok(Direction::Inbound),
            other => Err(format!("unknown direction {other:?}")),
        }
    }
}

/// Canonical per-packet record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketEvent {
    pub timestamp: f64,
    pub src_mac: MacAddr,
    pub src_ip: IpAddr,
    pub dst_ip: IpAddr,
    pub src_port: Option<u16>,
    pub dst_port: Option<u16>,
    pub size: u32,
    pub direction: Direction,
}

impl PacketEvent {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !self.timestamp.is_finite() || self.timestamp < 0.0 {
            return Err(format!("timestamp {} must be finite and non-negative", self.timestamp));
        }
        if self.src_port.is_some() != self.dst_port.is_some() {
            return Err("ports must be both present or both absent".into());
        }
        Ok(())
    }

    /// Recomputes `direction` from the monitored device's address.
    pub fn orient_to(&mut self, device_ip: IpAddr) {
        self.direction = if self.src_ip == device_ip {
            Direction::Outbound
        } else {
            Direction::Inbound
        };
    }

    fn to_csv_line(&self) -> String {
        let port = |p: Option<u16>| p.map(|p| p.to_string()).unwrap_or_default();
        format!(
            "{:.6},{},{},{},{},{},{},{}",
            self.timestamp,
            self.src_mac,
            self.src_ip,
            self.dst_ip,
            port(self.src_port),
            port(self.dst_port),
            self.size,
            self.direction.as_str()
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventFormat {
    Csv,
    Jsonl,
}

impl FromStr for EventFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "canonical-event-csv" | "csv" => Ok(EventFormat::Csv),
            "canonical-event-jsonl" | "jsonl" => Ok(EventFormat::Jsonl),
            other => Err(Error::Config(format!("unknown event format {other:?}"))),
        }
    }
}

impl EventFormat {
    /// Picks the format from a file extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("ndjson") => EventFormat::Jsonl,
            _ => EventFormat::Csv,
        }
    }
}

/// Events in file order plus the number of timestamps that went backwards.
#[derive(Debug, Clone, Default)]
pub struct EventLog {
    pub events: Vec<PacketEvent>,
    pub non_monotonic: usize,
}

pub fn read_events(path: impl AsRef<Path>, format: EventFormat) -> Result<EventLog> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let events = match format {
        EventFormat::Csv => parse_csv_events(reader, path)?,
        EventFormat::Jsonl => parse_jsonl_events(reader, path)?,
    };
    let non_monotonic = events.windows(2).filter(|w| w[1].timestamp < w[0].timestamp).count();
    Ok(EventLog { events, non_monotonic })
}

fn parse_csv_events(reader: impl BufRead, path: &Path) -> Result<Vec<PacketEvent>> {
    let mut lines = reader.lines().enumerate();
    match lines.next() {
        None => return Ok(Vec::new()),
        Some((_, header)) => {
            let header = header.map_err(|e| Error::io(path, e))?;
            let normalized: String = header.trim().trim_start_matches('\u{feff}').into();
            if normalized != EVENT_CSV_HEADER {
                return Err(Error::parse(1, format!("unexpected header {normalized:?}")));
            }
        }
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_csv_event(&line).map_err(|m| Error::parse(idx + 1, m))?);
    }
    Ok(out)
}

fn parse_csv_event(line: &str) -> std::result::Result<PacketEvent, String> {
    let cells: Vec<&str> = line.trim_end_matches('\r').split(',').collect();
    if cells.len() != 8 {
        return Err(format!("expected 8 fields, found {}", cells.len()));
    }
    let timestamp: f64 = cells[0]
        .trim()
        .parse()
        .map_err(|_| format!("bad timestamp {:?}", cells[0]))?;
    let src_mac: MacAddr = cells[1].trim().parse()?;
    let src_ip: IpAddr = cells[2]
        .trim()
        .parse()
        .map_err(|_| format!("bad src_ip {:?}", cells[2]))?;
    let dst_ip: IpAddr = cells[3]
        .trim()
        .parse()
        .map_err(|_| format!("bad dst_ip {:?}", cells[3]))?;
    let src_port = parse_port(cells[4], "src_port")?;
    let dst_port = parse_port(cells[5], "dst_port")?;
    let size: u32 = cells[6]
        .trim()
        .parse()
        .map_err(|_| format!("bad size {:?}", cells[6]))?;
    let direction: Direction = cells[7].parse()?;
    let event = PacketEvent {
        timestamp,
        src_mac,
        src_ip,
        dst_ip,
        src_port,
        dst_port,
        size,
        direction,
    };
    event.validate()?;
    Ok(event)
}

fn parse_port(cell: &str, name: &str) -> std::result::Result<Option<u16>, String> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    let value: u32 = cell.parse().map_err(|_| format!("bad {name} {cell:?}"))?;
    u16::try_from(value)
        .map(Some)
        .map_err(|_| format!("{name} {value} out of range 0-65535"))
}

fn parse_jsonl_events(reader: impl BufRead, path: &Path) -> Result<Vec<PacketEvent>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let event: PacketEvent = serde_json::from_str(&line).map_err(|e| Error::parse(idx + 1, e.to_string()))?;
        event.validate().map_err(|m| Error::parse(idx + 1, m))?;
        out.push(event);
    }
    Ok(out)
}

pub fn write_events(path: impl AsRef<Path>, events: &[PacketEvent], format: EventFormat) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res = (|| -> std::io::Result<()> {
        match format {
            EventFormat::Csv => {
                writeln!(w, "{EVENT_CSV_HEADER}")?;
                for e in events {
                    writeln!(w, "{}", e.to_csv_line())?;
                }
            }
            EventFormat::Jsonl => {
                for e in events {
                    serde_json::to_writer(&mut w, e)?;
                    writeln!(w)?;
                }
            }
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}
