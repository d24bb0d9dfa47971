use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Benign,
    Bashlite,
    Mirai,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Vector {
    None,
    Scan,
    Junk,
    Udp,
    Tcp,
    Combo,
    Ack,
    Syn,
    Udpplain,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Benign => "benign",
            Family::Bashlite => "bashlite",
            Family::Mirai => "mirai",
        }
    }
}

impl Vector {
    pub fn as_str(self) -> &'static str {
        match self {
            Vector::None => "none",
            Vector::Scan => "scan",
            Vector::Junk => "junk",
            Vector::Udp => "udp",
            Vector::Tcp => "tcp",
            Vector::Combo => "combo",
            Vector::Ack => "ack",
            Vector::Syn => "syn",
            Vector::Udpplain => "udpplain",
        }
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "benign" => Ok(Family::Benign),
            // Gafgyt is the name the public captures use for BASHLITE.
            "bashlite" | "gafgyt" => Ok(Family::Bashlite),
            "mirai" => Ok(Family::Mirai),
            other => Err(format!("unknown attack family {other:?}")),
        }
    }
}

impl FromStr for Vector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" | "" => Ok(Vector::None),
            "scan" => Ok(Vector::Scan),
            "junk" => Ok(Vector::Junk),
            "udp" => Ok(Vector::Udp),
            "tcp" => Ok(Vector::Tcp),
            "combo" => Ok(Vector::Combo),
            "ack" => Ok(Vector::Ack),
            "syn" => Ok(Vector::Syn),
            "udpplain" => Ok(Vector::Udpplain),
            other => Err(format!("unknown attack vector {other:?}")),
        }
    }
}

/// Ground-truth label of one instance. Only valid family/vector pairs can be
/// constructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct AttackLabel {
    family: Family,
    vector: Vector,
}

impl AttackLabel {
    pub const BENIGN: AttackLabel = AttackLabel {
        family: Family::Benign,
        vector: Vector::None,
    };

    pub fn new(family: Family, vector: Vector) -> std::result::Result<Self, String> {
        use Vector::*;
        let ok = match family {
            Family::Benign => vector == None,
            Family::Bashlite => matches!(vector, Scan | Junk | Udp | Tcp | Combo),
            Family::Mirai => matches!(vector, Scan | Ack | Syn | Udp | Udpplain),
        };
        if ok {
            Ok(AttackLabel { family, vector })
        } else {
            Err(format!(
                "vector {} is not valid for family {}",
                vector.as_str(),
                family.as_str()
            ))
        }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn vector(&self) -> Vector {
        self.vector
    }

    pub fn is_benign(&self) -> bool {
        self.family == Family::Benign
    }

    /// Infers the label from a public-dataset file path such as
    /// `Ecobee_Thermostat/mirai_attacks/udpplain.csv` or `benign_traffic.csv`.
    pub fn from_dataset_path(path: &Path) -> Option<Self> {
        let stem = path.file_stem()?.to_str()?.to_ascii_lowercase();
        if stem.starts_with("benign") {
            return Some(Self::BENIGN);
        }
        let parent = path
            .parent()
            .and_then(|p| p.file_name())
            .and_then(|n| n.to_str())
            .map(|n| n.trim_end_matches("_attacks"));
        let family: Family = parent
            .into_iter()
            .chain(stem.split(['.', '_']))
            .find_map(|tok| tok.parse().ok())?;
        let vector: Vector = stem.rsplit(['.', '_']).next()?.parse().ok()?;
        Self::new(family, vector).ok()
    }
}

impl Default for AttackLabel {
    fn default() -> Self {
        Self::BENIGN
    }
}

impl fmt::Display for AttackLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_benign() {
            f.write_str("benign")
        } else {
            write!(f, "{}:{}", self.family.as_str(), self.vector.as_str())
        }
    }
}

impl FromStr for AttackLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (family, vector) = s.split_once([':', '/']).unwrap_or((s, "none"));
        Self::new(family.parse()?, vector.parse()?)
    }
}

impl<'de> Deserialize<'de> for AttackLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            family: Family,
            vector: Vector,
        }
        let raw = Raw::deserialize(d)?;
        AttackLabel::new(raw.family, raw.vector).map_err(serde::de::Error::custom)
    }
}

/// A labeled time window `[onset, end)` in an event stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelSegment {
    pub onset: f64,
    pub end: f64,
    pub label: AttackLabel,
}

impl LabelSegment {
    pub fn contains(&self, t: f64) -> bool {
        t >= self.onset && t < self.end
    }
}

pub const LABEL_SIDECAR_HEADER: &str = "onset,end,label_family,label_vector";

/// Returns the label of the first segment covering `t`, benign otherwise.
pub fn label_at(segments: &[LabelSegment], t: f64) -> AttackLabel {
    segments
        .iter()
        .find(|s| s.contains(t))
        .map(|s| s.label)
        .unwrap_or(AttackLabel::BENIGN)
}

pub fn write_label_segments(path: impl AsRef<Path>, segments: &[LabelSegment]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res = (|| -> std::io::Result<()> {
        writeln!(w, "{LABEL_SIDECAR_HEADER}")?;
        for s in segments {
            writeln!(
                w,
                "{:.6},{:.6},{},{}",
                s.onset,
                s.end,
                s.label.family().as_str(),
                s.label.vector().as_str()
            )?;
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

pub fn read_label_segments(path: impl AsRef<Path>) -> Result<Vec<LabelSegment>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if idx == 0 {
            if line != LABEL_SIDECAR_HEADER {
                return Err(Error::parse(1, format!("unexpected header {line:?}")));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        let parsed = (|| -> std::result::Result<LabelSegment, String> {
            if cells.len() != 4 {
                return Err(format!("expected 4 fields, found {}", cells.len()));
            }
            let onset: f64 = cells[0].parse().map_err(|_| format!("bad onset {:?}", cells[0]))?;
            let end: f64 = cells[1].parse().map_err(|_| format!("bad end {:?}", cells[1]))?;
            let label = AttackLabel::new(cells[2].parse()?, cells[3].parse()?)?;
            Ok(LabelSegment { onset, end, label })
        })();
        out.push(parsed.map_err(|m| Error::parse(idx + 1, m))?);
    }
    Ok(out)
}
