//! Batch evaluation of a profile over a labeled feature stream.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::calibration::DetectorProfile;
use crate::dataset::{AttackLabel, FeatureRecord};
use crate::detector::Monitor;
use crate::error::{Error, Result};

/// Published reference figures, echoed in every report for comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTargets {
    pub tpr: f64,
    pub fpr_mean: f64,
    pub fpr_std: f64,
    pub latency_ms_mean: f64,
    pub latency_ms_std: f64,
}

impl Default for ReferenceTargets {
    fn default() -> Self {
        ReferenceTargets {
            tpr: 1.0,
            fpr_mean: 0.007,
            fpr_std: 0.01,
            latency_ms_mean: 174.0,
            latency_ms_std: 212.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileInfo {
    pub device_id: String,
    pub tr_star: f64,
    pub ws_star: usize,
    pub eta: f64,
    pub epochs: usize,
    pub schema_version: u32,
}

/// Verdict-level confusion counts over all instances.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub true_positive: usize,
    pub false_negative: usize,
    pub false_positive: usize,
    pub true_negative: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.true_positive + self.false_negative + self.false_positive + self.true_negative
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InstanceCounts {
    pub total: usize,
    pub benign: usize,
    pub malicious: usize,
    /// Malicious instances per attack label.
    pub per_label: BTreeMap<String, usize>,
}

/// A maximal run of consecutive instances with the same attack label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentResult {
    pub label: String,
    /// Index of the first instance of the run.
    pub start: usize,
    pub len: usize,
    pub onset_time: Option<f64>,
    pub detected: bool,
    /// Index of the first anomalous verdict inside the run.
    pub first_alert_instance: Option<usize>,
    /// Malicious instances seen up to and including that verdict.
    pub instances_to_alert: Option<usize>,
    pub latency_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorResult {
    pub label: String,
    pub segments: usize,
    pub detected_segments: usize,
    pub segment_tpr: f64,
    pub instances: usize,
    pub detected_instances: usize,
    pub instance_tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub count: usize,
    pub mean_ms: Option<f64>,
    /// Sample standard deviation; absent below two entries.
    pub std_ms: Option<f64>,
    /// How entries are weighted.
    pub aggregation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub profile: ProfileInfo,
    pub counts: InstanceCounts,
    pub confusion: Confusion,
    /// Benign instances under an anomalous verdict, over all benign instances.
    pub fpr: f64,
    /// Benign instances individually above tr*, over all benign instances.
    pub instance_flag_fpr: f64,
    /// Detected attack segments over all attack segments; absent without
    /// attacks.
    pub segment_tpr: Option<f64>,
    /// Malicious instances under an anomalous verdict over all malicious
    /// instances.
    pub instance_tpr: Option<f64>,
    pub vectors: Vec<VectorResult>,
    pub segments: Vec<SegmentResult>,
    pub alerts: usize,
    pub latency: LatencyStats,
    pub reference: ReferenceTargets,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Runs the detector over `records` in order and scores every verdict
/// against the labels.
pub fn evaluate(profile: &DetectorProfile, records: &[FeatureRecord]) -> Result<EvalReport> {
    if records.is_empty() {
        return Err(Error::InsufficientData("nothing to evaluate".into()));
    }
    let mut monitor = Monitor::new(profile);
    let mut confusion = Confusion::default();
    let mut counts = InstanceCounts::default();
    let mut flagged_benign = 0;
    let mut segments: Vec<SegmentResult> = Vec::new();
    let mut current: Option<AttackLabel> = None;
    let mut detected_per_label: BTreeMap<String, usize> = BTreeMap::new();

    for (i, r) in records.iter().enumerate() {
        let step = monitor.step(r)?;
        let anomalous = step.verdict.anomalous;
        counts.total += 1;
        if r.label.is_benign() {
            counts.benign += 1;
            flagged_benign += usize::from(step.flag.anomalous);
            if anomalous {
                confusion.false_positive += 1;
            } else {
                confusion.true_negative += 1;
            }
            current = None;
            continue;
        }
        counts.malicious += 1;
        *counts.per_label.entry(r.label.to_string()).or_default() += 1;
        if anomalous {
            confusion.true_positive += 1;
            *detected_per_label.entry(r.label.to_string()).or_default() += 1;
        } else {
            confusion.false_negative += 1;
        }
        if current != Some(r.label) {
            current = Some(r.label);
            segments.push(SegmentResult {
                label: r.label.to_string(),
                start: i,
                len: 0,
                onset_time: r.timestamp,
                detected: false,
                first_alert_instance: None,
                instances_to_alert: None,
                latency_ms: None,
            });
        }
        let seg = segments.last_mut().expect("segment opened above");
        seg.len += 1;
        if anomalous && !seg.detected {
            seg.detected = true;
            seg.first_alert_instance = Some(i);
            seg.instances_to_alert = Some(i - seg.start + 1);
            seg.latency_ms = seg.onset_time.zip(r.timestamp).map(|(t0, t)| (t - t0) * 1000.0);
        }
    }

    let mut by_label: BTreeMap<&str, VectorResult> = BTreeMap::new();
    for s in &segments {
        let v = by_label.entry(&s.label).or_insert_with(|| VectorResult {
            label: s.label.clone(),
            segments: 0,
            detected_segments: 0,
            segment_tpr: 0.0,
            instances: 0,
            detected_instances: 0,
            instance_tpr: 0.0,
        });
        v.segments += 1;
        v.detected_segments += usize::from(s.detected);
        v.instances += s.len;
    }
    let mut vectors: Vec<VectorResult> = by_label.into_values().collect();
    for v in &mut vectors {
        v.detected_instances = detected_per_label.get(&v.label).copied().unwrap_or(0);
        v.segment_tpr = v.detected_segments as f64 / v.segments as f64;
        v.instance_tpr = v.detected_instances as f64 / v.instances as f64;
    }

    let latencies: Vec<f64> = segments.iter().filter_map(|s| s.latency_ms).collect();
    let mean = (!latencies.is_empty()).then(|| latencies.iter().sum::<f64>() / latencies.len() as f64);
    let std = mean
        .filter(|_| latencies.len() >= 2)
        .map(|m| (latencies.iter().map(|l| (l - m) * (l - m)).sum::<f64>() / (latencies.len() - 1) as f64).sqrt());
    let detected = segments.iter().filter(|s| s.detected).count();

    Ok(EvalReport {
        profile: ProfileInfo {
            device_id: profile.device_id().to_owned(),
            tr_star: profile.tr_star(),
            ws_star: profile.ws_star(),
            eta: profile.eta(),
            epochs: profile.epochs(),
            schema_version: profile.schema_version(),
        },
        fpr: ratio(confusion.false_positive, counts.benign).unwrap_or(0.0),
        instance_flag_fpr: ratio(flagged_benign, counts.benign).unwrap_or(0.0),
        segment_tpr: ratio(detected, segments.len()),
        instance_tpr: ratio(confusion.true_positive, counts.malicious),
        counts,
        confusion,
        vectors,
        alerts: monitor.summary().alerts,
        latency: LatencyStats {
            count: latencies.len(),
            mean_ms: mean,
            std_ms: std,
            aggregation: "one entry per detected attack segment, equal weight".into(),
        },
        segments,
        reference: ReferenceTargets::default(),
    })
}

pub const PLOT_CSV_HEADER: &str =
    "device_id,label,segments,segment_tpr,instance_tpr,latency_mean_ms,latency_std_ms,fpr";

/// One row per attack label plus a `benign` row, ready for bar charts.
pub fn write_plot_csv(w: &mut impl Write, report: &EvalReport) -> std::io::Result<()> {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    writeln!(w, "{PLOT_CSV_HEADER}")?;
    let device = &report.profile.device_id;
    for v in &report.vectors {
        let lat: Vec<f64> = report
            .segments
            .iter()
            .filter(|s| s.label == v.label)
            .filter_map(|s| s.latency_ms)
            .collect();
        let mean = (!lat.is_empty()).then(|| lat.iter().sum::<f64>() / lat.len() as f64);
        let std = mean
            .filter(|_| lat.len() >= 2)
            .map(|m| (lat.iter().map(|l| (l - m) * (l - m)).sum::<f64>() / (lat.len() - 1) as f64).sqrt());
        writeln!(
            w,
            "{device},{},{},{},{},{},{},",
            v.label,
            v.segments,
            v.segment_tpr,
            v.instance_tpr,
            opt(mean),
            opt(std)
        )?;
    }
    writeln!(w, "{device},benign,0,,,,,{}", report.fpr)
}
