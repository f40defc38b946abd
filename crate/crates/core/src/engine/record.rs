use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::alloc::NUM_TYPES;
use crate::kgraph::KnowledgeGraph;
use crate::netsim::NetStats;
use crate::predict::StepForecast;
use crate::scenario::{Category, EventClass, FailureTargetSpec};
use crate::SimTime;

pub const RECORD_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Batch,
    Interactive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Agentic,
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecisionStatus {
    Pending,
    AutoApproved,
    Approved,
    Overridden,
    Modified,
}

impl DecisionStatus {
    pub fn is_terminal(self) -> bool {
        self != DecisionStatus::Pending
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OverrideVerdict {
    Approve,
    Override,
    Modify,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverrideDirective {
    pub decision_id: String,
    pub verdict: OverrideVerdict,
    /// Encoded allocation actions; required for Override and Modify.
    #[serde(default)]
    pub replacement: Option<Vec<usize>>,
    pub author: String,
    /// Wall-clock receipt time in milliseconds, informational only.
    #[serde(default)]
    pub received_wall_ms: Option<u64>,
}

/// A directive as it was applied: after `after_step` processed events, when
/// `after_seq` log entries existed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub after_step: u64,
    pub after_seq: u64,
    pub time: SimTime,
    pub directive: OverrideDirective,
}

/// A human correction kept for offline retraining.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackSample {
    pub decision_id: String,
    pub verdict: OverrideVerdict,
    pub state: Vec<f64>,
    pub proposed: Vec<usize>,
    pub replacement: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleIncident {
    pub incident_id: String,
    pub site_id: String,
    pub true_severity: f64,
    pub true_unmet: [u32; NUM_TYPES],
    pub travel_h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub incident_id: String,
    pub fused_severity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data")]
pub enum LogEvent {
    FailureInject {
        target: FailureTargetSpec,
        duration_ms: u64,
    },
    SensorReading {
        reading_id: String,
        site_id: String,
        source: String,
        forwarded: bool,
        class: Option<EventClass>,
        confidence: Option<f64>,
    },
    MessageDelivery {
        msg_id: String,
        src: String,
        dst: String,
        slice: String,
        size_bytes: u64,
        enqueued: SimTime,
    },
    MessageDropped {
        msg_id: String,
        src: String,
        dst: String,
        size_bytes: u64,
    },
    Alert {
        alert_id: String,
        incident_id: String,
        site_id: String,
        class: EventClass,
        confidence: f64,
        lat: f64,
        lon: f64,
    },
    IncidentOpened {
        incident_id: String,
        site_id: String,
        category: Option<Category>,
        severity: f64,
        demand: [u32; NUM_TYPES],
        lat: f64,
        lon: f64,
    },
    /// A decision round (AgentDecisionDue) that had work to do.
    Frame {
        frame_id: u64,
        incidents: Vec<FrameEntry>,
    },
    OracleSnapshot {
        frame_id: u64,
        available: [u32; NUM_TYPES],
        incidents: Vec<OracleIncident>,
    },
    ClaimDenied {
        frame_id: u64,
        incident_id: String,
        requested: [u32; NUM_TYPES],
    },
    DecisionIssued {
        decision_id: String,
        frame_id: u64,
        incident_id: String,
        agent: String,
        actions: Vec<usize>,
        units: [u32; NUM_TYPES],
        status: DecisionStatus,
        window_closes: Option<SimTime>,
    },
    DecisionResolved {
        decision_id: String,
        frame_id: u64,
        incident_id: String,
        status: DecisionStatus,
        actions: Vec<usize>,
        units: [u32; NUM_TYPES],
        author: String,
    },
    WindowExpired {
        decision_id: String,
    },
    OverrideRejected {
        decision_id: String,
        reason: String,
    },
    Forecast {
        incident_id: String,
        site_id: String,
        category: Category,
        step_s: u64,
        steps: Vec<StepForecast>,
    },
    Dispatch {
        dispatch_id: String,
        decision_id: String,
        incident_id: String,
        units: [u32; NUM_TYPES],
        depot: usize,
        eta: SimTime,
    },
    DispatchArrival {
        dispatch_id: String,
        decision_id: String,
        incident_id: String,
        units: [u32; NUM_TYPES],
    },
    IncidentResolved {
        incident_id: String,
        site_id: String,
        released: [u32; NUM_TYPES],
    },
    ScenarioEnd {
        net: NetStats,
    },
}

impl LogEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            LogEvent::FailureInject { .. } => "FailureInject",
            LogEvent::SensorReading { .. } => "SensorReading",
            LogEvent::MessageDelivery { .. } => "MessageDelivery",
            LogEvent::MessageDropped { .. } => "MessageDropped",
            LogEvent::Alert { .. } => "Alert",
            LogEvent::IncidentOpened { .. } => "IncidentOpened",
            LogEvent::Frame { .. } => "Frame",
            LogEvent::OracleSnapshot { .. } => "OracleSnapshot",
            LogEvent::ClaimDenied { .. } => "ClaimDenied",
            LogEvent::DecisionIssued { .. } => "DecisionIssued",
            LogEvent::DecisionResolved { .. } => "DecisionResolved",
            LogEvent::WindowExpired { .. } => "WindowExpired",
            LogEvent::OverrideRejected { .. } => "OverrideRejected",
            LogEvent::Forecast { .. } => "Forecast",
            LogEvent::Dispatch { .. } => "Dispatch",
            LogEvent::DispatchArrival { .. } => "DispatchArrival",
            LogEvent::IncidentResolved { .. } => "IncidentResolved",
            LogEvent::ScenarioEnd { .. } => "ScenarioEnd",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    pub time: SimTime,
    pub event: LogEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub format_version: u32,
    pub pack_id: String,
    pub seed: u64,
    pub mode: Mode,
    pub policy: PolicyKind,
    pub end_time: SimTime,
}

/// Everything a run leaves behind.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub meta: RunMeta,
    pub log: Vec<LogEntry>,
    pub kgraph: KnowledgeGraph,
    /// Topic name to its JSONL snapshot.
    pub bus: BTreeMap<String, Vec<u8>>,
    pub transcript: Vec<TranscriptEntry>,
    pub feedback: Vec<FeedbackSample>,
}

pub fn write_jsonl<T: Serialize, W: Write>(items: &[T], mut out: W) -> Result<(), EngineError> {
    for it in items {
        serde_json::to_writer(&mut out, it).map_err(|e| EngineError::Record(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>, R: BufRead>(input: R) -> Result<Vec<T>, EngineError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| EngineError::Record(format!("line {}: {e}", i + 1)))?);
    }
    Ok(out)
}

impl RunRecord {
    pub fn log_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        write_jsonl(&self.log, &mut buf).expect("in-memory write");
        buf
    }

    pub fn kgraph_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.kgraph.snapshot(&mut buf).expect("in-memory write");
        buf
    }

    /// Layout: `meta.json`, `events.jsonl`, `kgraph.jsonl`,
    /// `transcript.jsonl`, `feedback.jsonl` and `bus/<topic>.jsonl`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), EngineError> {
        fs::create_dir_all(dir.join("bus"))?;
        let meta = serde_json::to_vec_pretty(&self.meta).map_err(|e| EngineError::Record(e.to_string()))?;
        fs::write(dir.join("meta.json"), meta)?;
        fs::write(dir.join("events.jsonl"), self.log_bytes())?;
        fs::write(dir.join("kgraph.jsonl"), self.kgraph_bytes())?;
        let mut t = Vec::new();
        write_jsonl(&self.transcript, &mut t)?;
        fs::write(dir.join("transcript.jsonl"), t)?;
        let mut f = Vec::new();
        write_jsonl(&self.feedback, &mut f)?;
        fs::write(dir.join("feedback.jsonl"), f)?;
        for (topic, bytes) in &self.bus {
            fs::write(dir.join("bus").join(format!("{topic}.jsonl")), bytes)?;
        }
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self, EngineError> {
        let meta: RunMeta = serde_json::from_slice(&fs::read(dir.join("meta.json"))?)
            .map_err(|e| EngineError::Record(format!("meta.json: {e}")))?;
        let log = read_jsonl(fs::read(dir.join("events.jsonl"))?.as_slice())?;
        let kgraph = KnowledgeGraph::load(fs::read(dir.join("kgraph.jsonl"))?.as_slice())?;
        let transcript = read_jsonl(fs::read(dir.join("transcript.jsonl"))?.as_slice())?;
        let feedback = read_jsonl(fs::read(dir.join("feedback.jsonl"))?.as_slice())?;
        let mut bus = BTreeMap::new();
        let bus_dir = dir.join("bus");
        if bus_dir.is_dir() {
            for entry in fs::read_dir(&bus_dir)? {
                let p = entry?.path();
                if let Some(topic) = p.file_name().and_then(|n| n.to_str()).and_then(|n| n.strip_suffix(".jsonl")) {
                    bus.insert(topic.to_string(), fs::read(&p)?);
                }
            }
        }
        Ok(RunRecord { meta, log, kgraph, bus, transcript, feedback })
    }
}
