use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::ops::Range;
use std::path::Path;

use crate::error::{Error, Result};
use crate::stats::schema::{FeatureSchema, KeyKind, Statistic, DECAY_RATES, FEATURE_COUNT};

use super::label::{AttackLabel, Family, Vector};

/// One 115-slot behavioral snapshot plus its ground-truth label.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    features: Vec<f64>,
    pub label: AttackLabel,
    pub timestamp: Option<f64>,
}

impl FeatureRecord {
    pub fn new(features: Vec<f64>, label: AttackLabel, timestamp: Option<f64>) -> Result<Self> {
        if features.len() != FEATURE_COUNT {
            return Err(Error::Contract(format!(
                "feature vector has {} entries, expected {FEATURE_COUNT}",
                features.len()
            )));
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::Contract(format!("feature {i} is not finite ({})", features[i])));
        }
        Ok(FeatureRecord {
            features,
            label,
            timestamp,
        })
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn with_label(mut self, label: AttackLabel) -> Self {
        self.label = label;
        self
    }
}

/// How a source column feeds a canonical slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SourceColumn {
    Value(String),
    /// Column holds a standard deviation; the canonical slot is its square.
    StdDev(String),
}

impl SourceColumn {
    fn name(&self) -> &str {
        match self {
            SourceColumn::Value(n) | SourceColumn::StdDev(n) => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelRule {
    Fixed(AttackLabel),
    Columns { family: String, vector: String },
}

/// Maps canonical slot names to source CSV columns.
///
/// Text form, one `key = value` per line, `#` comments:
///
/// ```text
/// srcip_100ms_weight = H_L5_weight
/// channel_100ms_variance = std:HH_L5_std
/// label = mirai:udp            # or: label.family = col / label.vector = col
/// timestamp = ts               # optional
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct HeaderMapping {
    slots: Vec<Option<SourceColumn>>,
    label: Option<LabelRule>,
    timestamp: Option<String>,
}

impl HeaderMapping {
    /// Identity mapping for canonical feature CSVs.
    pub fn canonical() -> Self {
        let schema = FeatureSchema::v1();
        HeaderMapping {
            slots: schema
                .names()
                .into_iter()
                .map(|n| Some(SourceColumn::Value(n)))
                .collect(),
            label: Some(LabelRule::Columns {
                family: "label_family".into(),
                vector: "label_vector".into(),
            }),
            timestamp: Some("timestamp".into()),
        }
    }

    /// Mapping for the public per-device N-BaIoT feature files.
    ///
    /// Their columns are named `<group>_L<lambda>_<stat>` with groups
    /// `H` (source IP), `MI_dir` (source MAC-IP), `HH` (channel), `HH_jit`
    /// (channel jitter) and `HpHp` (socket). One-dimensional groups publish a
    /// `variance` column; the channel and socket groups publish `std`, which
    /// is squared into the canonical variance. The files carry no label or
    /// timestamp column, so the label comes from [`with_label`](Self::with_label).
    pub fn nbaiot() -> Self {
        let schema = FeatureSchema::v1();
        let lambdas = ["5", "3", "1", "0.1", "0.01"];
        debug_assert_eq!(lambdas.len(), DECAY_RATES.len());
        let slots = schema
            .slots()
            .iter()
            .map(|slot| {
                let group = match slot.kind {
                    KeyKind::SrcIp => "H",
                    KeyKind::SrcMacIp => "MI_dir",
                    KeyKind::Channel => "HH",
                    KeyKind::ChannelJitter => "HH_jit",
                    KeyKind::Socket => "HpHp",
                };
                let two_d = matches!(slot.kind, KeyKind::Channel | KeyKind::Socket);
                let prefix = format!("{group}_L{}", lambdas[slot.decay]);
                Some(match slot.stat {
                    Statistic::Variance if two_d => SourceColumn::StdDev(format!("{prefix}_std")),
                    stat => SourceColumn::Value(format!("{prefix}_{}", stat.suffix())),
                })
            })
            .collect();
        HeaderMapping {
            slots,
            label: None,
            timestamp: None,
        }
    }

    pub fn with_label(mut self, label: AttackLabel) -> Self {
        self.label = Some(LabelRule::Fixed(label));
        self
    }

    pub fn label_rule(&self) -> Option<&LabelRule> {
        self.label.as_ref()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let schema = FeatureSchema::v1();
        let mut mapping = HeaderMapping {
            slots: vec![None; FEATURE_COUNT],
            label: None,
            timestamp: None,
        };
        let mut family_col = None;
        let mut vector_col = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(idx + 1, format!("expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "label" => {
                    let label = value.parse().map_err(|m: String| Error::parse(idx + 1, m))?;
                    mapping.label = Some(LabelRule::Fixed(label));
                }
                "label.family" => family_col = Some(value.to_string()),
                "label.vector" => vector_col = Some(value.to_string()),
                "timestamp" => mapping.timestamp = Some(value.to_string()),
                slot => {
                    let i = schema
                        .index_of(slot)
                        .ok_or_else(|| Error::parse(idx + 1, format!("unknown slot {slot:?}")))?;
                    mapping.slots[i] = Some(match value.strip_prefix("std:") {
                        Some(col) => SourceColumn::StdDev(col.trim().to_string()),
                        None => SourceColumn::Value(value.to_string()),
                    });
                }
            }
        }
        match (family_col, vector_col) {
            (Some(family), Some(vector)) => mapping.label = Some(LabelRule::Columns { family, vector }),
            (None, None) => {}
            _ => {
                return Err(Error::Config(
                    "label.family and label.vector must be given together".into(),
                ))
            }
        }
        let unmapped: Vec<String> = schema
            .names()
            .into_iter()
            .zip(&mapping.slots)
            .filter(|(_, s)| s.is_none())
            .map(|(n, _)| n)
            .collect();
        if !unmapped.is_empty() {
            return Err(Error::Config(format!(
                "mapping does not cover slots [{}]",
                unmapped.join(", ")
            )));
        }
        Ok(mapping)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let schema = FeatureSchema::v1();
        let mut out = String::new();
        for (name, src) in schema.names().iter().zip(&self.slots) {
            match src {
                Some(SourceColumn::Value(c)) => out.push_str(&format!("{name} = {c}\n")),
                Some(SourceColumn::StdDev(c)) => out.push_str(&format!("{name} = std:{c}\n")),
                None => {}
            }
        }
        match &self.label {
            Some(LabelRule::Fixed(l)) => out.push_str(&format!("label = {l}\n")),
            Some(LabelRule::Columns { family, vector }) => {
                out.push_str(&format!("label.family = {family}\nlabel.vector = {vector}\n"))
            }
            None => {}
        }
        if let Some(ts) = &self.timestamp {
            out.push_str(&format!("timestamp = {ts}\n"));
        }
        out
    }
}

pub fn read_feature_csv(path: impl AsRef<Path>, mapping: &HeaderMapping) -> Result<Vec<FeatureRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_feature_csv_from(file, mapping)
}

pub fn read_feature_csv_from(reader: impl std::io::Read, mapping: &HeaderMapping) -> Result<Vec<FeatureRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::parse(1, e.to_string()))?.clone();
    let column: HashMap<&str, usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| (h.trim_start_matches('\u{feff}'), i))
        .collect();

    let mut missing = Vec::new();
    let mut slot_cols = Vec::with_capacity(FEATURE_COUNT);
    for (i, src) in mapping.slots.iter().enumerate() {
        let src = src
            .as_ref()
            .ok_or_else(|| Error::Config(format!("mapping leaves slot {i} unmapped")))?;
        match column.get(src.name()) {
            Some(&c) => slot_cols.push((c, matches!(src, SourceColumn::StdDev(_)))),
            None => missing.push(src.name().to_string()),
        }
    }
    let label_cols = match &mapping.label {
        Some(LabelRule::Columns { family, vector }) => {
            let f = column.get(family.as_str()).copied();
            let v = column.get(vector.as_str()).copied();
            if f.is_none() {
                missing.push(family.clone());
            }
            if v.is_none() {
                missing.push(vector.clone());
            }
            f.zip(v)
        }
        Some(LabelRule::Fixed(_)) => None,
        None => {
            return Err(Error::Config(
                "mapping has no label rule; supply a fixed label or label columns".into(),
            ))
        }
    };
    if !missing.is_empty() {
        return Err(Error::Schema { missing });
    }
    // The canonical timestamp column is optional in the file itself.
    let ts_col = mapping
        .timestamp
        .as_ref()
        .and_then(|name| column.get(name.as_str()).copied());

    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let line = row + 2;
        let rec = rec.map_err(|e| Error::parse(line, e.to_string()))?;
        let mut features = Vec::with_capacity(FEATURE_COUNT);
        for &(c, is_std) in &slot_cols {
            let cell = rec.get(c).unwrap_or("");
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::parse(line, format!("non-numeric cell {cell:?} in column {:?}", &headers[c])))?;
            features.push(if is_std { v * v } else { v });
        }
        let label = match (&mapping.label, label_cols) {
            (Some(LabelRule::Fixed(l)), _) => *l,
            (_, Some((f, v))) => {
                let family: Family = rec
                    .get(f)
                    .unwrap_or("")
                    .parse()
                    .map_err(|m: String| Error::parse(line, m))?;
                let vector: Vector = rec
                    .get(v)
                    .unwrap_or("")
                    .parse()
                    .map_err(|m: String| Error::parse(line, m))?;
                AttackLabel::new(family, vector).map_err(|m| Error::parse(line, m))?
            }
            _ => unreachable!("label rule checked above"),
        };
        let timestamp = match ts_col.and_then(|c| rec.get(c)).filter(|s| !s.is_empty()) {
            Some(s) => Some(
                s.parse::<f64>()
                    .map_err(|_| Error::parse(line, format!("bad timestamp {s:?}")))?,
            ),
            None => None,
        };
        let record = FeatureRecord::new(features, label, timestamp).map_err(|e| Error::parse(line, e.to_string()))?;
        out.push(record);
    }
    Ok(out)
}

/// Writes canonical-feature-csv: 115 slot columns, `label_family`,
/// `label_vector`, then `timestamp` when any record carries one.
pub fn write_feature_csv(path: impl AsRef<Path>, records: &[FeatureRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_feature_csv_to(&mut w, records)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn write_feature_csv_to(w: &mut impl Write, records: &[FeatureRecord]) -> std::io::Result<()> {
    let with_ts = records.iter().any(|r| r.timestamp.is_some());
    let mut header = FeatureSchema::v1().names().join(",");
    header.push_str(",label_family,label_vector");
    if with_ts {
        header.push_str(",timestamp");
    }
    writeln!(w, "{header}")?;
    let mut line = String::new();
    for r in records {
        line.clear();
        for v in &r.features {
            // Shortest representation that parses back to the same bits.
            line.push_str(&format!("{v:?},"));
        }
        line.push_str(r.label.family().as_str());
        line.push(',');
        line.push_str(r.label.vector().as_str());
        if with_ts {
            line.push(',');
            if let Some(t) = r.timestamp {
                line.push_str(&format!("{t:?}"));
            }
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Chronological thirds of a benign sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub trn: Range<usize>,
    pub opt: Range<usize>,
    pub tst: Range<usize>,
}

impl DatasetSplit {
    pub fn boundaries(&self) -> (usize, usize) {
        (self.trn.end, self.opt.end)
    }

    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.trn.len(), self.opt.len(), self.tst.len())
    }
}

/// Splits `n` instances into three contiguous, near-equal ranges; the
/// remainder goes to the earliest ranges.
pub fn split_sizes(n: usize) -> Result<DatasetSplit> {
    if n < 3 {
        return Err(Error::InsufficientData(format!(
            "need at least 3 benign instances to split, got {n}"
        )));
    }
    let base = n / 3;
    let rem = n % 3;
    let trn = base + usize::from(rem > 0);
    let opt = base + usize::from(rem > 1);
    Ok(DatasetSplit {
        trn: 0..trn,
        opt: trn..trn + opt,
        tst: trn + opt..n,
    })
}

pub fn split_chronological(records: &[FeatureRecord]) -> Result<DatasetSplit> {
    if let Some(i) = records.iter().position(|r| !r.label.is_benign()) {
        return Err(Error::Contract(format!(
            "record {i} is labeled {}; the split takes benign instances only",
            records[i].label
        )));
    }
    split_sizes(records.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(seed: f64, label: AttackLabel) -> FeatureRecord {
        let features = (0..FEATURE_COUNT).map(|i| seed * (i as f64 + 1.0) / 7.0).collect();
        FeatureRecord::new(features, label, None).unwrap()
    }

    #[test]
    fn record_invariants() {
        assert!(FeatureRecord::new(vec![0.0; 114], AttackLabel::BENIGN, None).is_err());
        let mut v = vec![0.0; FEATURE_COUNT];
        v[3] = f64::NAN;
        assert!(FeatureRecord::new(v, AttackLabel::BENIGN, None).is_err());
    }

    #[test]
    fn split_examples() {
        assert_eq!(split_sizes(9).unwrap().sizes(), (3, 3, 3));
        assert_eq!(split_sizes(10).unwrap().sizes(), (4, 3, 3));
        assert_eq!(split_sizes(11).unwrap().sizes(), (4, 4, 3));
        assert_eq!(split_sizes(13_113).unwrap().sizes(), (4371, 4371, 4371));
        assert!(matches!(split_sizes(2), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn split_rejects_attack_labels() {
        let recs = vec![
            record(1.0, AttackLabel::BENIGN),
            record(2.0, "mirai:syn".parse().unwrap()),
            record(3.0, AttackLabel::BENIGN),
        ];
        assert!(split_chronological(&recs).is_err());
    }

    proptest! {
        #[test]
        fn split_partitions_everything(n in 3usize..100_000) {
            let s = split_sizes(n).unwrap();
            prop_assert_eq!(s.trn.start, 0);
            prop_assert_eq!(s.trn.end, s.opt.start);
            prop_assert_eq!(s.opt.end, s.tst.start);
            prop_assert_eq!(s.tst.end, n);
            let (a, b, c) = s.sizes();
            prop_assert!(a.max(b).max(c) - a.min(b).min(c) <= 1);
            prop_assert!(a >= b && b >= c);
        }

        #[test]
        fn canonical_csv_round_trip(values in proptest::collection::vec(-1e12f64..1e12, FEATURE_COUNT), ts in proptest::option::of(0.0f64..2e9)) {
            let recs = vec![
                FeatureRecord::new(values.clone(), "bashlite:combo".parse().unwrap(), ts).unwrap(),
                FeatureRecord::new(values.iter().map(|v| v / 3.0).collect(), AttackLabel::BENIGN, ts).unwrap(),
            ];
            let mut buf = Vec::new();
            write_feature_csv_to(&mut buf, &recs).unwrap();
            let back = read_feature_csv_from(buf.as_slice(), &HeaderMapping::canonical()).unwrap();
            prop_assert_eq!(back, recs);
        }
    }

    fn csv_with_columns(order: &[usize], rows: &[FeatureRecord]) -> Vec<u8> {
        let names = FeatureSchema::v1().names();
        let mut out = String::new();
        let header: Vec<&str> = order.iter().map(|&i| names[i].as_str()).collect();
        out.push_str(&header.join(","));
        out.push_str(",label_family,label_vector\n");
        for r in rows {
            let cells: Vec<String> = order.iter().map(|&i| format!("{:?}", r.features()[i])).collect();
            out.push_str(&cells.join(","));
            out.push_str(&format!(
                ",{},{}\n",
                r.label.family().as_str(),
                r.label.vector().as_str()
            ));
        }
        out.into_bytes()
    }

    #[test]
    fn permuted_columns_read_identically() {
        let rows = vec![
            record(1.5, AttackLabel::BENIGN),
            record(-2.0, "mirai:ack".parse().unwrap()),
        ];
        let straight: Vec<usize> = (0..FEATURE_COUNT).collect();
        let mut permuted = straight.clone();
        permuted.reverse();
        permuted.swap(3, 70);
        let m = HeaderMapping::canonical();
        let a = read_feature_csv_from(csv_with_columns(&straight, &rows).as_slice(), &m).unwrap();
        let b = read_feature_csv_from(csv_with_columns(&permuted, &rows).as_slice(), &m).unwrap();
        assert_eq!(a, rows);
        assert_eq!(a, b);
    }

    #[test]
    fn missing_column_is_schema_error() {
        let rows = vec![record(1.0, AttackLabel::BENIGN)];
        let cols: Vec<usize> = (0..FEATURE_COUNT).filter(|&i| i != 42).collect();
        let err =
            read_feature_csv_from(csv_with_columns(&cols, &rows).as_slice(), &HeaderMapping::canonical()).unwrap_err();
        match err {
            Error::Schema { missing } => assert_eq!(missing, vec![FeatureSchema::v1().names()[42].clone()]),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn non_numeric_cell_is_parse_error() {
        let rows = vec![record(1.0, AttackLabel::BENIGN)];
        let cols: Vec<usize> = (0..FEATURE_COUNT).collect();
        let text = String::from_utf8(csv_with_columns(&cols, &rows)).unwrap();
        let broken = text.replacen(",0.", ",abc", 1);
        let err = read_feature_csv_from(broken.as_bytes(), &HeaderMapping::canonical()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn mapping_text_round_trip_and_std_conversion() {
        let m = HeaderMapping::nbaiot().with_label("mirai:udp".parse().unwrap());
        let parsed = HeaderMapping::parse(&m.to_text()).unwrap();
        assert_eq!(parsed, m);

        let names: Vec<String> = m.slots.iter().map(|s| s.as_ref().unwrap().name().to_string()).collect();
        assert_eq!(names[0], "H_L5_weight");
        assert_eq!(names[3], "MI_dir_L5_weight");
        assert_eq!(names[8], "HH_L5_std");
        assert_eq!(names[13], "HH_jit_L5_weight");
        assert_eq!(names[114], "HpHp_L0.01_pcc");

        let mut csv = names.join(",");
        csv.push('\n');
        let cells: Vec<String> = (0..FEATURE_COUNT)
            .map(|i| if i == 8 { "3".into() } else { "1".into() })
            .collect();
        csv.push_str(&cells.join(","));
        csv.push('\n');
        let recs = read_feature_csv_from(csv.as_bytes(), &m).unwrap();
        assert_eq!(recs[0].features()[8], 9.0);
        assert_eq!(recs[0].label.to_string(), "mirai:udp");
    }

    #[test]
    fn incomplete_mapping_rejected() {
        let text: String = HeaderMapping::canonical()
            .to_text()
            .lines()
            .skip(1)
            .map(|l| format!("{l}\n"))
            .collect();
        assert!(matches!(HeaderMapping::parse(&text), Err(Error::Config(_))));
    }
}
