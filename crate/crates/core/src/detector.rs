//! Online monitoring: instance flags, strict-majority voting and alerts.

use std::collections::VecDeque;
use std::io::Write;

use serde::Serialize;

use crate::autoencoder::{ReconstructionError, Workspace};
use crate::calibration::DetectorProfile;
use crate::dataset::{AttackLabel, FeatureRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceFlag {
    pub mse: ReconstructionError,
    /// `mse > tr*`, strictly.
    pub anomalous: bool,
    pub timestamp: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct StreamVerdict {
    pub anomalous: bool,
    pub window_fill: usize,
    pub vote_count: usize,
}

/// Scores records against one profile, reusing scratch buffers.
#[derive(Debug)]
pub struct Scorer<'p> {
    profile: &'p DetectorProfile,
    normalized: Vec<f64>,
    ws: Workspace,
}

impl<'p> Scorer<'p> {
    pub fn new(profile: &'p DetectorProfile) -> Self {
        Scorer {
            profile,
            normalized: Vec::with_capacity(profile.normalizer().dim()),
            ws: Workspace::default(),
        }
    }

    pub fn score(&mut self, record: &FeatureRecord) -> Result<InstanceFlag> {
        self.profile
            .normalizer()
            .transform_into(record.features(), &mut self.normalized)?;
        let mse = self.profile.model().mse_with(&self.normalized, &mut self.ws)?;
        Ok(InstanceFlag {
            mse,
            anomalous: mse.0 > self.profile.tr_star(),
            timestamp: record.timestamp,
        })
    }
}

pub fn score_instance(profile: &DetectorProfile, record: &FeatureRecord) -> Result<InstanceFlag> {
    Scorer::new(profile).score(record)
}

/// Sliding strict-majority vote over the last `ws` flags.
#[derive(Debug, Clone)]
pub struct MajorityVoter {
    ws: usize,
    window: VecDeque<bool>,
    votes: usize,
}

impl MajorityVoter {
    pub fn new(ws: usize) -> Result<Self> {
        if ws == 0 {
            return Err(Error::Contract("voting window must hold at least 1 flag".into()));
        }
        Ok(MajorityVoter {
            ws,
            window: VecDeque::with_capacity(ws),
            votes: 0,
        })
    }

    pub fn window_size(&self) -> usize {
        self.ws
    }

    /// Verdicts stay benign until the window is full.
    pub fn push(&mut self, anomalous: bool) -> StreamVerdict {
        if self.window.len() == self.ws && self.window.pop_front() == Some(true) {
            self.votes -= 1;
        }
        self.window.push_back(anomalous);
        self.votes += usize::from(anomalous);
        let fill = self.window.len();
        StreamVerdict {
            anomalous: fill == self.ws && 2 * self.votes > self.ws,
            window_fill: fill,
            vote_count: self.votes,
        }
    }
}

pub fn vote_stream(flags: &[InstanceFlag], ws_star: usize) -> Result<Vec<StreamVerdict>> {
    let mut voter = MajorityVoter::new(ws_star)?;
    Ok(flags.iter().map(|f| voter.push(f.anomalous)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlertEvent {
    pub device_id: String,
    /// Zero-based position of the alerting instance in the stream.
    pub instance: usize,
    /// Timestamp of the oldest anomalous flag still in the window.
    pub first_flag_time: Option<f64>,
    pub verdict_time: Option<f64>,
    /// Instances from the oldest anomalous flag in the window to the verdict,
    /// inclusive.
    pub instances_to_alert: usize,
    pub vote_count: usize,
    pub window_fill: usize,
    /// Instances from the labeled attack onset to the verdict, inclusive.
    /// Known only when the input carries labels.
    pub instances_since_onset: Option<usize>,
    /// Milliseconds from the labeled attack onset to the verdict. Known only
    /// when the input carries labels and timestamps.
    pub latency_ms: Option<f64>,
}

pub trait AlertSink {
    fn emit(&mut self, alert: &AlertEvent) -> Result<()>;
}

impl AlertSink for Vec<AlertEvent> {
    fn emit(&mut self, alert: &AlertEvent) -> Result<()> {
        self.push(alert.clone());
        Ok(())
    }
}

/// Newline-delimited JSON alert records.
pub struct NdjsonSink<W: Write> {
    out: W,
}

#[derive(Serialize)]
struct AlertRecord<'a> {
    device_id: &'a str,
    instance: usize,
    verdict_time: Option<f64>,
    vote_count: usize,
    window_fill: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    latency_ms: Option<f64>,
}

impl<W: Write> NdjsonSink<W> {
    pub fn new(out: W) -> Self {
        NdjsonSink { out }
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> AlertSink for NdjsonSink<W> {
    fn emit(&mut self, a: &AlertEvent) -> Result<()> {
        let rec = AlertRecord {
            device_id: &a.device_id,
            instance: a.instance,
            verdict_time: a.verdict_time,
            vote_count: a.vote_count,
            window_fill: a.window_fill,
            latency_ms: a.latency_ms,
        };
        let mut line = serde_json::to_vec(&rec).map_err(|e| Error::Sink(e.to_string()))?;
        line.push(b'\n');
        self.out
            .write_all(&line)
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::Sink(e.to_string()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunSummary {
    pub instances: usize,
    pub anomalous_instances: usize,
    pub anomalous_verdicts: usize,
    pub alerts: usize,
    pub first_alert_instance: Option<usize>,
    pub first_alert_latency_ms: Option<f64>,
}

/// Outcome of one monitored instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub flag: InstanceFlag,
    pub verdict: StreamVerdict,
    pub alert: Option<AlertEvent>,
}

/// Stateful per-device monitor: score, vote, and raise an alert on every
/// benign-to-anomalous verdict transition. The window keeps sliding after an
/// alert.
#[derive(Debug)]
pub struct Monitor<'p> {
    scorer: Scorer<'p>,
    voter: MajorityVoter,
    /// (index, timestamp) of anomalous flags inside the window.
    flagged: VecDeque<(usize, Option<f64>)>,
    onset: Option<(AttackLabel, usize, Option<f64>)>,
    previous: bool,
    summary: RunSummary,
}

impl<'p> Monitor<'p> {
    pub fn new(profile: &'p DetectorProfile) -> Self {
        Monitor {
            scorer: Scorer::new(profile),
            voter: MajorityVoter::new(profile.ws_star()).expect("profile ws* >= 1"),
            flagged: VecDeque::new(),
            onset: None,
            previous: false,
            summary: RunSummary::default(),
        }
    }

    pub fn summary(&self) -> &RunSummary {
        &self.summary
    }

    pub fn step(&mut self, record: &FeatureRecord) -> Result<Step> {
        let flag = self.scorer.score(record)?;
        let index = self.summary.instances;
        let ws = self.voter.window_size();

        if record.label.is_benign() {
            self.onset = None;
        } else if self.onset.is_none_or(|(l, _, _)| l != record.label) {
            self.onset = Some((record.label, index, record.timestamp));
        }

        if flag.anomalous {
            self.flagged.push_back((index, flag.timestamp));
        }
        while self.flagged.front().is_some_and(|&(i, _)| i + ws <= index) {
            self.flagged.pop_front();
        }
        let verdict = self.voter.push(flag.anomalous);

        self.summary.instances += 1;
        self.summary.anomalous_instances += usize::from(flag.anomalous);
        self.summary.anomalous_verdicts += usize::from(verdict.anomalous);

        let alert = (verdict.anomalous && !self.previous).then(|| {
            let &(first, first_time) = self.flagged.front().expect("majority implies a flag");
            let (since_onset, latency_ms) = match self.onset {
                Some((_, start, start_time)) => (
                    Some(index - start + 1),
                    start_time.zip(flag.timestamp).map(|(t0, t)| (t - t0) * 1000.0),
                ),
                None => (None, None),
            };
            AlertEvent {
                device_id: self.scorer.profile.device_id().to_owned(),
                instance: index,
                first_flag_time: first_time,
                verdict_time: flag.timestamp,
                instances_to_alert: index - first + 1,
                vote_count: verdict.vote_count,
                window_fill: verdict.window_fill,
                instances_since_onset: since_onset,
                latency_ms,
            }
        });
        self.previous = verdict.anomalous;
        if let Some(a) = &alert {
            self.summary.alerts += 1;
            if self.summary.first_alert_instance.is_none() {
                self.summary.first_alert_instance = Some(a.instance);
                self.summary.first_alert_latency_ms = a.latency_ms;
            }
        }
        Ok(Step { flag, verdict, alert })
    }
}

/// Monitor aborted by an upstream or sink error, with totals up to the
/// failing instance.
#[derive(Debug)]
pub struct Aborted {
    pub error: Error,
    pub partial: RunSummary,
}

impl std::fmt::Display for Aborted {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} (after {} instances, {} alerts)",
            self.error, self.partial.instances, self.partial.alerts
        )
    }
}

impl std::error::Error for Aborted {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

pub fn monitor<I>(
    profile: &DetectorProfile,
    input: I,
    sink: &mut dyn AlertSink,
) -> std::result::Result<RunSummary, Aborted>
where
    I: IntoIterator<Item = Result<FeatureRecord>>,
{
    let mut m = Monitor::new(profile);
    for record in input {
        let step = record.and_then(|r| m.step(&r));
        let step = match step {
            Ok(s) => s,
            Err(error) => {
                return Err(Aborted {
                    error,
                    partial: m.summary.clone(),
                })
            }
        };
        if let Some(alert) = &step.alert {
            if let Err(error) = sink.emit(alert) {
                return Err(Aborted {
                    error,
                    partial: m.summary.clone(),
                });
            }
        }
    }
    Ok(m.summary)
}
