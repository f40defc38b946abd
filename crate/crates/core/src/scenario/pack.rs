//! Scenario pack model and its line-delimited JSON encoding.
//!
//! File layout: one JSON object per line, each tagged with a `record` field.
//! The first line is the `header`; it is followed by `event`, `truth`,
//! `reading`, `tweet` and `failure` records in that order.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{Category, DisasterEvent, ScenarioError, TweetRecord};

pub const PACK_FORMAT_VERSION: u32 = 1;

/// One observation as it leaves a field sensor cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reading {
    pub reading_id: String,
    /// Sensor cluster that produced the reading; readings sharing a site
    /// describe the same physical incident.
    pub site_id: String,
    /// Ground-truth event this reading belongs to; `None` for false readings.
    /// Simulation instrumentation only, never shown to agents.
    pub event_ref: Option<String>,
    pub severity: f64,
    pub lat: f64,
    pub lon: f64,
    pub text: String,
    /// Field estimate of required units per resource type.
    pub demand: [u32; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorSample {
    /// Milliseconds since scenario start.
    pub t_ms: u64,
    pub source_node: String,
    pub reading: Reading,
}

/// Post-incident ground truth for one event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTruth {
    pub event_id: String,
    pub site_id: String,
    pub category: Category,
    pub onset_ms: u64,
    pub end_ms: u64,
    pub lat: f64,
    pub lon: f64,
    /// True units required per resource type.
    pub demand: [u32; 4],
    /// Severity sampled every `path_step_s` seconds from onset.
    pub severity_path: Vec<f64>,
}

impl EventTruth {
    /// True severity at `t_ms`, or `None` outside the recorded path.
    pub fn severity_at(&self, t_ms: u64, path_step_s: u64) -> Option<f64> {
        if t_ms < self.onset_ms || path_step_s == 0 {
            return None;
        }
        let idx = ((t_ms - self.onset_ms) / (path_step_s * 1000)) as usize;
        self.severity_path.get(idx).copied()
    }

    pub fn is_active_near(&self, t_ms: u64, slack_ms: u64) -> bool {
        t_ms + slack_ms >= self.onset_ms && t_ms <= self.end_ms + slack_ms
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FailureTargetSpec {
    Link { a: String, b: String },
    Node { id: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureSpec {
    pub target: FailureTargetSpec,
    pub at_ms: u64,
    pub duration_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackHeader {
    pub format_version: u32,
    pub pack_id: String,
    pub seed: u64,
    /// UTC epoch seconds of simulation time zero.
    pub start_epoch: i64,
    pub duration_s: u64,
    pub path_step_s: u64,
    /// Units per resource type (Medical, Fire, Rescue, Logistics).
    pub resources: [u32; 4],
    pub edge_nodes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioPack {
    pub pack_id: String,
    pub seed: u64,
    pub start_epoch: i64,
    pub duration_s: u64,
    pub path_step_s: u64,
    pub resources: [u32; 4],
    pub edge_nodes: Vec<String>,
    /// Sorted by onset time.
    pub events: Vec<DisasterEvent>,
    /// Sorted by time.
    pub sensor_streams: Vec<SensorSample>,
    pub ground_truth: Vec<EventTruth>,
    /// Labelled text corpus for training the assessment classifier.
    pub tweets: Vec<TweetRecord>,
    pub failures: Vec<FailureSpec>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Record {
    Header(PackHeader),
    Event(DisasterEvent),
    Truth(EventTruth),
    Reading(SensorSample),
    Tweet(TweetRecord),
    Failure(FailureSpec),
}

impl ScenarioPack {
    pub fn empty(pack_id: &str, seed: u64) -> Self {
        ScenarioPack {
            pack_id: pack_id.into(),
            seed,
            start_epoch: 0,
            duration_s: 0,
            path_step_s: 300,
            resources: [0; 4],
            edge_nodes: vec![],
            events: vec![],
            sensor_streams: vec![],
            ground_truth: vec![],
            tweets: vec![],
            failures: vec![],
        }
    }

    pub fn header(&self) -> PackHeader {
        PackHeader {
            format_version: PACK_FORMAT_VERSION,
            pack_id: self.pack_id.clone(),
            seed: self.seed,
            start_epoch: self.start_epoch,
            duration_s: self.duration_s,
            path_step_s: self.path_step_s,
            resources: self.resources,
            edge_nodes: self.edge_nodes.clone(),
        }
    }

    pub fn truth(&self, event_id: &str) -> Option<&EventTruth> {
        self.ground_truth.iter().find(|t| t.event_id == event_id)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::InvalidPack(m));
        if self.events.windows(2).any(|w| w[0].onset_time > w[1].onset_time) {
            return bad("events not sorted by onset".into());
        }
        if self.sensor_streams.windows(2).any(|w| w[0].t_ms > w[1].t_ms) {
            return bad("sensor stream not sorted by time".into());
        }
        for ev in &self.events {
            if let Err(e) = ev.validate() {
                return bad(format!("event {}: {e}", ev.event_id));
            }
        }
        for t in &self.ground_truth {
            if !self.events.iter().any(|e| e.event_id == t.event_id) {
                return bad(format!("truth for unknown event {}", t.event_id));
            }
            if t.end_ms < t.onset_ms {
                return bad(format!("truth {} ends before onset", t.event_id));
            }
        }
        for s in &self.sensor_streams {
            if !self.edge_nodes.contains(&s.source_node) {
                return bad(format!("reading {} from unknown node {}", s.reading.reading_id, s.source_node));
            }
            if !(0.0..=10.0).contains(&s.reading.severity) {
                return bad(format!("reading {} severity out of range", s.reading.reading_id));
            }
        }
        if self.path_step_s == 0 {
            return bad("path_step_s must be positive".into());
        }
        Ok(())
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<(), ScenarioError> {
        let mut line = |rec: &Record| -> Result<(), ScenarioError> {
            serde_json::to_writer(&mut out, rec).map_err(|e| ScenarioError::InvalidPack(e.to_string()))?;
            out.write_all(b"\n")?;
            Ok(())
        };
        line(&Record::Header(self.header()))?;
        for e in &self.events {
            line(&Record::Event(e.clone()))?;
        }
        for t in &self.ground_truth {
            line(&Record::Truth(t.clone()))?;
        }
        for s in &self.sensor_streams {
            line(&Record::Reading(s.clone()))?;
        }
        for t in &self.tweets {
            line(&Record::Tweet(t.clone()))?;
        }
        for f in &self.failures {
            line(&Record::Failure(f.clone()))?;
        }
        Ok(())
    }

    pub fn to_jsonl_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self, ScenarioError> {
        let mut pack: Option<ScenarioPack> = None;
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(&line)
                .map_err(|e| ScenarioError::Record { line: i + 1, message: e.to_string() })?;
            match (rec, pack.as_mut()) {
                (Record::Header(h), None) => {
                    if h.format_version != PACK_FORMAT_VERSION {
                        return Err(ScenarioError::InvalidPack(format!(
                            "unsupported format version {}",
                            h.format_version
                        )));
                    }
                    let mut p = ScenarioPack::empty(&h.pack_id, h.seed);
                    p.start_epoch = h.start_epoch;
                    p.duration_s = h.duration_s;
                    p.path_step_s = h.path_step_s;
                    p.resources = h.resources;
                    p.edge_nodes = h.edge_nodes;
                    pack = Some(p);
                }
                (Record::Header(_), Some(_)) => {
                    return Err(ScenarioError::Record { line: i + 1, message: "duplicate header".into() })
                }
                (_, None) => {
                    return Err(ScenarioError::Record { line: i + 1, message: "record before header".into() })
                }
                (Record::Event(e), Some(p)) => p.events.push(e),
                (Record::Truth(t), Some(p)) => p.ground_truth.push(t),
                (Record::Reading(s), Some(p)) => p.sensor_streams.push(s),
                (Record::Tweet(t), Some(p)) => p.tweets.push(t),
                (Record::Failure(f), Some(p)) => p.failures.push(f),
            }
        }
        let pack = pack.ok_or(ScenarioError::EmptyInput)?;
        pack.validate()?;
        Ok(pack)
    }
}
