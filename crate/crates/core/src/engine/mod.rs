//! Deterministic discrete-event orchestrator for one scenario run.
//!
//! Sensor readings enter at their edge node, cross the simulated network to
//! the central node, are fused into situation frames every decision cadence,
//! and turn into allocation decisions that dispatch units. Every state
//! change is appended to an ordered event log; the knowledge graph and the
//! bus topics are written alongside.
//!
//! Two pipelines share the loop:
//!
//! * agentic: the edge runs the assessment classifier and forwards only
//!   confident hazard evidence; the PPO policy proposes dispatches and the
//!   predictor publishes severity forecasts.
//! * baseline: raw telemetry is shipped to central, a two-reading
//!   confirmation rule raises alerts, keywords pick the hazard and the ICS
//!   package fixes the request.

mod bench;
mod classify;
mod coordinate;
mod perceive;
mod record;
#[cfg(test)]
mod tests;

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bench::{
    benchmark_suite, sweep, sweep_pack, train_agents, training_pack, AgentBundle, BenchmarkScenario, SweepPoint,
    TrainReport, TrainSpec, SWEEP_LADDER,
};
pub use classify::{ics_package, keyword_classify};
pub use coordinate::{claim_order, coordinate, Claim};
pub use perceive::{perceive, DeliveredReading, FrameIncident, SituationFrame};
pub use record::{
    read_jsonl, write_jsonl, DecisionStatus, FeedbackSample, FrameEntry, LogEntry, LogEvent, Mode, OracleIncident,
    OverrideDirective, OverrideVerdict, PolicyKind, RunMeta, RunRecord, TranscriptEntry, RECORD_FORMAT_VERSION,
};

use crate::alloc::{AllocAction, AllocConfig, AllocWorld, ResourcePool, NUM_ACTIONS, NUM_SLOTS, NUM_TYPES};
use crate::assess::Assessment;
use crate::bus::{Broker, BusError};
use crate::geo::haversine_km;
use crate::kgraph::{labels, Edge, GraphError, KnowledgeGraph, Node, NodeKind, Verdict};
use crate::netsim::{
    FailureTarget, NetConfig, NetError, NetSim, Topology, Transmission, MISSION_CRITICAL, TELEMETRY,
};
use crate::predict::{Characteristics, PredInput};
use crate::scenario::{Category, EventClass, FailureTargetSpec, ScenarioPack};
use crate::SimTime;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid scenario pack: {0}")]
    InvalidPack(String),
    #[error("invalid engine config: {0}")]
    InvalidConfig(String),
    #[error("training failed: {0}")]
    Training(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("record error: {0}")]
    Record(String),
}

pub mod topics {
    pub const READINGS: &str = "readings";
    pub const ALERTS: &str = "alerts";
    pub const PREDICTIONS: &str = "predictions";
    pub const DECISIONS: &str = "decisions";
    pub const DISPATCHES: &str = "dispatches";
    pub const AUDIT: &str = "audit";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub decision_interval_ms: u64,
    /// Compute time charged per incident in a decision round.
    pub decision_cost_ms: u64,
    pub override_window_ms: u64,
    pub fusion_window_ms: u64,
    /// An incident closes after this long without new evidence.
    pub close_after_ms: u64,
    pub edge_inference_ms: u64,
    pub forecast_interval_ms: u64,
    pub evidence_bytes: u64,
    pub telemetry_bytes: u64,
    pub dispatch_bytes: u64,
    pub baseline_min_severity: f64,
    pub baseline_confirm_window_ms: u64,
    /// Unit staging points as (lat, lon).
    pub depots: Vec<(f64, f64)>,
    pub travel_speed_kmh: f64,
    pub central_node: String,
    /// `None` uses the default edge/central topology sized to the pack.
    pub topology: Option<Topology>,
    pub net: NetConfig,
    pub alloc: AllocConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            decision_interval_ms: 5_000,
            decision_cost_ms: 200,
            override_window_ms: 10_000,
            fusion_window_ms: 60_000,
            close_after_ms: 600_000,
            edge_inference_ms: 20,
            forecast_interval_ms: 300_000,
            evidence_bytes: 512,
            telemetry_bytes: 2_048,
            dispatch_bytes: 256,
            baseline_min_severity: 3.0,
            baseline_confirm_window_ms: 60_000,
            depots: vec![(38.7, -121.83), (38.7, -121.5), (38.7, -121.17)],
            travel_speed_kmh: 100.0,
            central_node: "central".into(),
            topology: None,
            net: NetConfig::default(),
            alloc: AllocConfig::default(),
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: &str| Err(EngineError::InvalidConfig(m.into()));
        if self.decision_interval_ms == 0 {
            return bad("decision_interval_ms must be positive");
        }
        if self.depots.is_empty() {
            return bad("at least one depot required");
        }
        if !(self.travel_speed_kmh.is_finite() && self.travel_speed_kmh > 0.0) {
            return bad("travel_speed_kmh must be positive");
        }
        if self.fusion_window_ms == 0 || self.close_after_ms == 0 {
            return bad("fusion_window_ms and close_after_ms must be positive");
        }
        Ok(())
    }

    fn topology_for(&self, pack: &ScenarioPack) -> Topology {
        self.topology.clone().unwrap_or_else(|| Topology::default_5g(pack.edge_nodes.len().max(1)))
    }
}

#[derive(Debug, Clone)]
pub enum Policy {
    Agentic(Box<AgentBundle>),
    Baseline,
}

impl Policy {
    pub fn kind(&self) -> PolicyKind {
        match self {
            Policy::Agentic(_) => PolicyKind::Agentic,
            Policy::Baseline => PolicyKind::Baseline,
        }
    }
}

/// Why a directive was not applied.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("directive on {decision_id} rejected: {reason}")]
pub struct Rejection {
    pub decision_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub decision_id: String,
    pub frame_id: u64,
    pub incident_id: String,
    pub agent: String,
    /// Slot of the target incident in the frame's allocation world.
    pub slot: usize,
    /// Incident id per slot of that world.
    pub slot_map: Vec<String>,
    pub proposed: Vec<usize>,
    pub actions: Vec<usize>,
    pub units: [u32; NUM_TYPES],
    pub issued: SimTime,
    pub window_closes: Option<SimTime>,
    pub status: DecisionStatus,
    #[serde(skip)]
    applied: Option<(OverrideVerdict, Option<Vec<usize>>)>,
    #[serde(skip)]
    state: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncidentView {
    pub incident_id: String,
    pub site_id: String,
    pub category: Option<Category>,
    pub opened: SimTime,
    pub lat: f64,
    pub lon: f64,
    pub fused_severity: f64,
    pub demand: [u32; NUM_TYPES],
    pub committed: [u32; NUM_TYPES],
    pub unmet: [u32; NUM_TYPES],
    pub first_arrival: Option<SimTime>,
    pub closed: bool,
}

/// Immutable copy of the world taken at an event boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSnapshot {
    /// Number of log entries that exist at the snapshot.
    pub seq: u64,
    pub time: SimTime,
    pub finished: bool,
    pub pool: ResourcePool,
    pub incidents: Vec<IncidentView>,
    pub pending: Vec<Decision>,
}

/// Event kinds in tie-break priority order (earlier variants run first at
/// equal timestamps).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    FailureInject,
    MessageDelivery,
    SensorReading,
    EdgeForward,
    AgentDecisionDue,
    DecisionsReady,
    OverrideWindowExpiry,
    DispatchArrival,
    IncidentResolved,
    ScenarioEnd,
}

#[derive(Debug, Clone)]
struct Draft {
    frame_id: u64,
    incident_id: String,
    slot: usize,
    slot_map: Vec<String>,
    proposed: Vec<usize>,
    actions: Vec<usize>,
    units: [u32; NUM_TYPES],
    state: Vec<f64>,
}

#[derive(Debug, Clone)]
enum Payload {
    Failure(usize),
    Delivery(Transmission),
    Reading(usize),
    Forward(usize, Option<Assessment>),
    DecisionDue,
    Ready(Box<Draft>),
    Expiry(String),
    Arrival(String),
    Resolve(String, SimTime),
    End,
}

/// A scheduled simulation event.
#[derive(Debug, Clone)]
struct SimEvent {
    time: SimTime,
    kind: EventKind,
    seq: u64,
    payload: Payload,
}

impl SimEvent {
    fn key(&self) -> (SimTime, EventKind, u64) {
        (self.time, self.kind, self.seq)
    }
}

impl PartialEq for SimEvent {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}
impl Eq for SimEvent {}
impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for SimEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

#[derive(Debug, Clone)]
struct Incident {
    id: String,
    site_id: String,
    category: Option<Category>,
    opened: SimTime,
    lat: f64,
    lon: f64,
    source: String,
    demand: [u32; NUM_TYPES],
    committed: [u32; NUM_TYPES],
    recent: Vec<DeliveredReading>,
    fused: f64,
    history: Vec<f64>,
    last_evidence: SimTime,
    last_forecast: Option<SimTime>,
    first_arrival: Option<SimTime>,
    /// A decision for this incident is being computed or awaits a verdict.
    busy: bool,
    closed: bool,
}

impl Incident {
    fn unmet(&self) -> [u32; NUM_TYPES] {
        std::array::from_fn(|r| self.demand[r].saturating_sub(self.committed[r]))
    }

    fn view(&self) -> IncidentView {
        IncidentView {
            incident_id: self.id.clone(),
            site_id: self.site_id.clone(),
            category: self.category,
            opened: self.opened,
            lat: self.lat,
            lon: self.lon,
            fused_severity: self.fused,
            demand: self.demand,
            committed: self.committed,
            unmet: self.unmet(),
            first_arrival: self.first_arrival,
            closed: self.closed,
        }
    }
}

#[derive(Debug, Clone)]
struct DispatchRec {
    decision_id: String,
    incident_id: String,
    units: [u32; NUM_TYPES],
    cancelled: bool,
}

#[derive(Debug, Clone)]
enum Transit {
    Reading(usize, Option<Assessment>),
    Order,
}

fn units_of(actions: &[usize]) -> [u32; NUM_TYPES] {
    let mut u = [0; NUM_TYPES];
    for &k in actions {
        if let Ok(AllocAction::Dispatch { rtype, .. }) = AllocAction::decode(k) {
            u[rtype] += 1;
        }
    }
    u
}

fn actions_csv(actions: &[usize]) -> String {
    actions.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(",")
}

fn units_str(u: &[u32; NUM_TYPES]) -> String {
    u.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(",")
}

pub struct Engine {
    pack: ScenarioPack,
    cfg: EngineConfig,
    policy: Policy,
    mode: Mode,
    net: NetSim,
    bus: Broker,
    graph: KnowledgeGraph,
    queue: BinaryHeap<Reverse<SimEvent>>,
    next_seq: u64,
    now: SimTime,
    end: SimTime,
    finished: bool,
    steps: u64,
    log: Vec<LogEntry>,
    incidents: BTreeMap<String, Incident>,
    open_by_site: BTreeMap<String, String>,
    site_generation: BTreeMap<String, u32>,
    pending_site_readings: BTreeMap<String, Vec<(SimTime, f64)>>,
    pool: ResourcePool,
    decisions: BTreeMap<String, Decision>,
    dispatches: BTreeMap<String, DispatchRec>,
    in_transit: BTreeMap<String, Transit>,
    busy_until: SimTime,
    counters: Counters,
    transcript: Vec<TranscriptEntry>,
    feedback: Vec<FeedbackSample>,
    truth_by_site: BTreeMap<String, usize>,
}

#[derive(Debug, Default)]
struct Counters {
    frame: u64,
    decision: u64,
    alert: u64,
    dispatch: u64,
    msg: u64,
}

impl Engine {
    /// Validates inputs and schedules the pack's readings, failures and the
    /// end of the scenario. No event executes here.
    pub fn new(pack: ScenarioPack, cfg: EngineConfig, policy: Policy, mode: Mode) -> Result<Self, EngineError> {
        cfg.validate()?;
        pack.validate().map_err(|e| EngineError::InvalidPack(e.to_string()))?;
        let topo = cfg.topology_for(&pack);
        topo.validate()?;
        if topo.node_index(&cfg.central_node).is_none() {
            return Err(EngineError::InvalidConfig(format!("central node {} not in topology", cfg.central_node)));
        }
        for e in &pack.edge_nodes {
            if topo.node_index(e).is_none() {
                return Err(EngineError::InvalidPack(format!("edge node {e} not in topology")));
            }
        }
        let mut net_cfg = cfg.net.clone();
        net_cfg.jitter_seed = crate::rng::derive_seed(pack.seed, net_cfg.jitter_seed);
        let mut net = NetSim::new(topo, net_cfg)?;
        for f in &pack.failures {
            let target = match &f.target {
                FailureTargetSpec::Link { a, b } => FailureTarget::Link(a.clone(), b.clone()),
                FailureTargetSpec::Node { id } => FailureTarget::Node(id.clone()),
            };
            net.inject_failure(&target, SimTime::from_ms(f.at_ms), SimTime::from_ms(f.duration_ms))
                .map_err(|e| EngineError::InvalidPack(format!("failure spec: {e}")))?;
        }
        let truth_by_site = pack.ground_truth.iter().enumerate().map(|(i, t)| (t.site_id.clone(), i)).collect();
        let end = SimTime::from_secs(pack.duration_s);
        let mut eng = Engine {
            pool: ResourcePool::new(pack.resources),
            pack,
            cfg,
            policy,
            mode,
            net,
            bus: Broker::new(),
            graph: KnowledgeGraph::new(),
            queue: BinaryHeap::new(),
            next_seq: 0,
            now: SimTime::ZERO,
            end,
            finished: false,
            log: Vec::new(),
            incidents: BTreeMap::new(),
            open_by_site: BTreeMap::new(),
            site_generation: BTreeMap::new(),
            pending_site_readings: BTreeMap::new(),
            decisions: BTreeMap::new(),
            dispatches: BTreeMap::new(),
            in_transit: BTreeMap::new(),
            busy_until: SimTime::ZERO,
            counters: Counters::default(),
            transcript: Vec::new(),
            feedback: Vec::new(),
            truth_by_site,
            steps: 0,
        };
        for i in 0..eng.pack.failures.len() {
            eng.schedule(SimTime::from_ms(eng.pack.failures[i].at_ms), EventKind::FailureInject, Payload::Failure(i));
        }
        for i in 0..eng.pack.sensor_streams.len() {
            eng.schedule(SimTime::from_ms(eng.pack.sensor_streams[i].t_ms), EventKind::SensorReading, Payload::Reading(i));
        }
        eng.schedule(SimTime::from_ms(eng.cfg.decision_interval_ms), EventKind::AgentDecisionDue, Payload::DecisionDue);
        eng.schedule(end, EventKind::ScenarioEnd, Payload::End);
        Ok(eng)
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Number of events processed so far.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn graph(&self) -> &KnowledgeGraph {
        &self.graph
    }

    pub fn bus(&self) -> &Broker {
        &self.bus
    }

    pub fn transcript(&self) -> &[TranscriptEntry] {
        &self.transcript
    }

    pub fn decision(&self, id: &str) -> Option<&Decision> {
        self.decisions.get(id)
    }

    /// Time of the next event to execute.
    pub fn next_event_time(&self) -> Option<SimTime> {
        if self.finished {
            return None;
        }
        let q = self.queue.peek().map(|e| e.0.time);
        match (q, self.net.next_event_time()) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    pub fn snapshot(&self) -> WorldSnapshot {
        WorldSnapshot {
            seq: self.log.len() as u64,
            time: self.now,
            finished: self.finished,
            pool: self.pool,
            incidents: self.incidents.values().filter(|i| !i.closed).map(Incident::view).collect(),
            pending: self.decisions.values().filter(|d| d.status == DecisionStatus::Pending).cloned().collect(),
        }
    }

    fn schedule(&mut self, time: SimTime, kind: EventKind, payload: Payload) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(SimEvent { time, kind, seq, payload }));
    }

    fn emit(&mut self, event: LogEvent) -> Result<(), EngineError> {
        let entry = LogEntry { seq: self.log.len() as u64, time: self.now, event };
        let bytes = serde_json::to_vec(&entry).map_err(|e| EngineError::Record(e.to_string()))?;
        self.bus.publish(topics::AUDIT, Some(entry.event.kind()), bytes, self.now)?;
        self.log.push(entry);
        Ok(())
    }

    fn publish<T: Serialize>(&self, topic: &str, key: &str, value: &T) -> Result<(), EngineError> {
        let bytes = serde_json::to_vec(value).map_err(|e| EngineError::Record(e.to_string()))?;
        self.bus.publish(topic, Some(key), bytes, self.now)?;
        Ok(())
    }

    fn collect_deliveries(&mut self) {
        for tx in self.net.drain_delivered() {
            let t = tx.deliver_time.expect("delivered transmissions carry a time");
            self.schedule(t, EventKind::MessageDelivery, Payload::Delivery(tx));
        }
    }

    /// Executes the next event. Returns `false` once the scenario has ended.
    pub fn step(&mut self) -> Result<bool, EngineError> {
        if self.finished {
            return Ok(false);
        }
        loop {
            let tq = self.queue.peek().map(|e| e.0.time).expect("ScenarioEnd stays queued until the run ends");
            match self.net.next_event_time() {
                Some(tn) if tn <= tq && tn >= self.net.now() => {
                    self.net.advance_to(tn);
                    self.collect_deliveries();
                    if self.net.next_event_time() == Some(tn) && self.net.now() == tn {
                        // nothing further can happen at tn without new input
                        break;
                    }
                }
                _ => break,
            }
        }
        let Reverse(ev) = self.queue.pop().expect("queue non-empty");
        self.now = ev.time;
        self.steps += 1;
        match ev.payload {
            Payload::Failure(i) => {
                let f = self.pack.failures[i].clone();
                self.emit(LogEvent::FailureInject { target: f.target, duration_ms: f.duration_ms })?;
            }
            Payload::Delivery(tx) => self.on_delivery(tx)?,
            Payload::Reading(i) => self.on_reading(i)?,
            Payload::Forward(i, a) => self.forward(i, a)?,
            Payload::DecisionDue => self.on_decision_due()?,
            Payload::Ready(d) => self.on_ready(*d)?,
            Payload::Expiry(id) => self.on_expiry(&id)?,
            Payload::Arrival(id) => self.on_arrival(&id)?,
            Payload::Resolve(id, due) => self.on_resolve_check(&id, due)?,
            Payload::End => self.on_end()?,
        }
        Ok(!self.finished)
    }

    fn on_reading(&mut self, idx: usize) -> Result<(), EngineError> {
        let s = self.pack.sensor_streams[idx].clone();
        match &self.policy {
            Policy::Agentic(b) => {
                let a = b.assess.assess_text(&s.reading.text);
                let forwarded = a.class != EventClass::None && a.confidence >= b.assess.confidence_threshold;
                self.emit(LogEvent::SensorReading {
                    reading_id: s.reading.reading_id.clone(),
                    site_id: s.reading.site_id.clone(),
                    source: s.source_node.clone(),
                    forwarded,
                    class: Some(a.class),
                    confidence: Some(a.confidence),
                })?;
                if forwarded {
                    let at = self.now + SimTime::from_ms(self.cfg.edge_inference_ms);
                    self.schedule(at, EventKind::EdgeForward, Payload::Forward(idx, Some(a)));
                }
            }
            Policy::Baseline => {
                self.emit(LogEvent::SensorReading {
                    reading_id: s.reading.reading_id.clone(),
                    site_id: s.reading.site_id.clone(),
                    source: s.source_node.clone(),
                    forwarded: true,
                    class: None,
                    confidence: None,
                })?;
                self.forward(idx, None)?;
            }
        }
        Ok(())
    }

    fn transmit(&mut self, msg_id: String, src: &str, dst: &str, size: u64, slice: &str, what: Transit) -> Result<(), EngineError> {
        match self.net.transmit(&msg_id, src, dst, size, slice, self.now) {
            Ok(_) => {
                self.in_transit.insert(msg_id, what);
            }
            Err(NetError::Unroutable { .. }) => {
                self.emit(LogEvent::MessageDropped { msg_id, src: src.into(), dst: dst.into(), size_bytes: size })?;
            }
            Err(e) => return Err(e.into()),
        }
        self.collect_deliveries();
        Ok(())
    }

    fn forward(&mut self, idx: usize, a: Option<Assessment>) -> Result<(), EngineError> {
        self.counters.msg += 1;
        let src = self.pack.sensor_streams[idx].source_node.clone();
        let central = self.cfg.central_node.clone();
        let (id, size, slice) = if a.is_some() {
            (format!("ev-{:06}", self.counters.msg), self.cfg.evidence_bytes, MISSION_CRITICAL)
        } else {
            (format!("tm-{:06}", self.counters.msg), self.cfg.telemetry_bytes, TELEMETRY)
        };
        self.transmit(id, &src, &central, size, slice, Transit::Reading(idx, a))
    }

    fn on_delivery(&mut self, tx: Transmission) -> Result<(), EngineError> {
        let deliver = tx.deliver_time.unwrap_or(self.now);
        self.emit(LogEvent::MessageDelivery {
            msg_id: tx.msg_id.clone(),
            src: tx.src.clone(),
            dst: tx.dst.clone(),
            slice: tx.slice.clone(),
            size_bytes: tx.size_bytes,
            enqueued: tx.enqueue_time,
        })?;
        debug_assert_eq!(deliver, self.now);
        match self.in_transit.remove(&tx.msg_id) {
            Some(Transit::Reading(idx, a)) => self.on_evidence(idx, a),
            _ => Ok(()),
        }
    }

    fn on_evidence(&mut self, idx: usize, a: Option<Assessment>) -> Result<(), EngineError> {
        let r = self.pack.sensor_streams[idx].reading.clone();
        let source = self.pack.sensor_streams[idx].source_node.clone();
        #[derive(Serialize)]
        struct ReadingMsg<'a> {
            reading_id: &'a str,
            site_id: &'a str,
            severity: f64,
        }
        self.publish(
            topics::READINGS,
            &r.site_id,
            &ReadingMsg { reading_id: &r.reading_id, site_id: &r.site_id, severity: r.severity },
        )?;
        if let Some(inc_id) = self.open_by_site.get(&r.site_id).cloned() {
            self.add_evidence(&inc_id, r.severity)?;
            return Ok(());
        }
        let (class, confidence, demand, prior) = match a {
            Some(a) => (a.class, a.confidence, r.demand, vec![]),
            None => {
                let window = SimTime::from_ms(self.cfg.baseline_confirm_window_ms);
                let min = self.cfg.baseline_min_severity;
                let now = self.now;
                let buf = self.pending_site_readings.entry(r.site_id.clone()).or_default();
                buf.retain(|(t, _)| now.saturating_sub(*t) <= window);
                let confirmed = r.severity >= min && buf.iter().any(|(_, s)| *s >= min);
                buf.push((now, r.severity));
                if !confirmed {
                    return Ok(());
                }
                let prior = self.pending_site_readings.remove(&r.site_id).unwrap_or_default();
                let class = keyword_classify(&r.text);
                (class, 1.0, ics_package(class), prior)
            }
        };
        let gen = self.site_generation.entry(r.site_id.clone()).or_insert(0);
        *gen += 1;
        let inc_id = format!("inc-{}-{}", r.site_id, gen);
        self.counters.alert += 1;
        let alert_id = format!("alert-{:05}", self.counters.alert);
        self.emit(LogEvent::Alert {
            alert_id: alert_id.clone(),
            incident_id: inc_id.clone(),
            site_id: r.site_id.clone(),
            class,
            confidence,
            lat: r.lat,
            lon: r.lon,
        })?;
        #[derive(Serialize)]
        struct AlertMsg<'a> {
            alert_id: &'a str,
            incident_id: &'a str,
            class: EventClass,
            confidence: f64,
        }
        self.publish(
            topics::ALERTS,
            &alert_id,
            &AlertMsg { alert_id: &alert_id, incident_id: &inc_id, class, confidence },
        )?;
        let category = class.category();
        self.emit(LogEvent::IncidentOpened {
            incident_id: inc_id.clone(),
            site_id: r.site_id.clone(),
            category,
            severity: r.severity,
            demand,
            lat: r.lat,
            lon: r.lon,
        })?;
        let mut node = Node::new(&inc_id, NodeKind::Incident)
            .with("site_id", r.site_id.as_str())
            .with("severity", r.severity)
            .with("opened_us", self.now.0 as f64)
            .with("demand", units_str(&demand));
        if let Some(c) = category {
            node = node.with("category", c.to_string());
        }
        self.graph.upsert_node(node)?;
        let mut recent: Vec<DeliveredReading> = prior
            .into_iter()
            .map(|(t, s)| DeliveredReading { incident_id: inc_id.clone(), time: t, severity: s })
            .filter(|d| d.time < self.now)
            .collect();
        recent.push(DeliveredReading { incident_id: inc_id.clone(), time: self.now, severity: r.severity });
        self.incidents.insert(
            inc_id.clone(),
            Incident {
                id: inc_id.clone(),
                site_id: r.site_id.clone(),
                category,
                opened: self.now,
                lat: r.lat,
                lon: r.lon,
                source,
                demand,
                committed: [0; NUM_TYPES],
                recent,
                fused: r.severity,
                history: vec![],
                last_evidence: self.now,
                last_forecast: None,
                first_arrival: None,
                busy: false,
                closed: false,
            },
        );
        self.open_by_site.insert(r.site_id, inc_id.clone());
        self.schedule_close_check(&inc_id);
        Ok(())
    }

    fn add_evidence(&mut self, inc_id: &str, severity: f64) -> Result<(), EngineError> {
        let now = self.now;
        let window = SimTime::from_ms(self.cfg.fusion_window_ms);
        let inc = self.incidents.get_mut(inc_id).expect("open incident");
        inc.recent.push(DeliveredReading { incident_id: inc_id.into(), time: now, severity });
        // keep the fusion window plus the newest reading
        let keep_from = now.saturating_sub(window);
        inc.recent.retain(|d| d.time >= keep_from);
        inc.last_evidence = now;
        self.schedule_close_check(inc_id);
        Ok(())
    }

    fn schedule_close_check(&mut self, inc_id: &str) {
        let due = self.now + SimTime::from_ms(self.cfg.close_after_ms);
        self.schedule(due, EventKind::IncidentResolved, Payload::Resolve(inc_id.into(), self.now));
    }

    fn on_resolve_check(&mut self, inc_id: &str, evidence_at: SimTime) -> Result<(), EngineError> {
        let Some(inc) = self.incidents.get(inc_id) else { return Ok(()) };
        if inc.closed || inc.last_evidence != evidence_at {
            return Ok(());
        }
        let released = inc.committed;
        let site = inc.site_id.clone();
        let first_arrival = inc.first_arrival;
        for (avail, n) in self.pool.available.iter_mut().zip(released) {
            *avail += n;
        }
        {
            let inc = self.incidents.get_mut(inc_id).unwrap();
            inc.committed = [0; NUM_TYPES];
            inc.closed = true;
        }
        self.open_by_site.remove(&site);
        for d in self.dispatches.values_mut().filter(|d| d.incident_id == inc_id) {
            d.cancelled = true;
        }
        self.emit(LogEvent::IncidentResolved { incident_id: inc_id.into(), site_id: site, released })?;
        let out_id = format!("outcome-{inc_id}");
        let mut node = Node::new(&out_id, NodeKind::Outcome)
            .with("resolved_us", self.now.0 as f64)
            .with("served", first_arrival.is_some());
        if let Some(t) = first_arrival {
            node = node.with("first_arrival_us", t.0 as f64);
        }
        self.graph.upsert_node(node)?;
        self.graph.add_edge(Edge::new(inc_id, &out_id, labels::RESULTED_IN))?;
        Ok(())
    }

    fn on_decision_due(&mut self) -> Result<(), EngineError> {
        if self.now < self.busy_until {
            self.schedule(self.busy_until, EventKind::AgentDecisionDue, Payload::DecisionDue);
            return Ok(());
        }
        let next = self.now + SimTime::from_ms(self.cfg.decision_interval_ms);
        if next <= self.end {
            self.schedule(next, EventKind::AgentDecisionDue, Payload::DecisionDue);
        }
        let readings: Vec<DeliveredReading> =
            self.incidents.values().filter(|i| !i.closed).flat_map(|i| i.recent.iter().cloned()).collect();
        self.counters.frame += 1;
        let frame_id = self.counters.frame;
        let frame = perceive(frame_id, &readings, self.now, SimTime::from_ms(self.cfg.fusion_window_ms));
        for fi in &frame.incidents {
            if let Some(inc) = self.incidents.get_mut(&fi.incident_id) {
                inc.fused = fi.fused_severity;
            }
        }
        self.run_forecasts()?;

        let mut candidates: Vec<&Incident> = self
            .incidents
            .values()
            .filter(|i| !i.closed && !i.busy)
            .filter(|i| {
                let u = i.unmet();
                (0..NUM_TYPES).any(|r| u[r] > 0 && self.pool.available[r] > 0)
            })
            .collect();
        if candidates.is_empty() {
            self.counters.frame -= 1;
            return Ok(());
        }
        candidates.sort_by(|a, b| b.fused.total_cmp(&a.fused).then(a.opened.cmp(&b.opened)).then(a.id.cmp(&b.id)));
        let candidate_ids: Vec<String> = candidates.iter().map(|i| i.id.clone()).collect();

        self.emit(LogEvent::Frame {
            frame_id,
            incidents: frame
                .incidents
                .iter()
                .map(|f| FrameEntry { incident_id: f.incident_id.clone(), fused_severity: f.fused_severity })
                .collect(),
        })?;
        let oracle = self.oracle_snapshot();
        self.emit(LogEvent::OracleSnapshot { frame_id, available: self.pool.available, incidents: oracle })?;

        let mut drafts: Vec<Draft> = Vec::new();
        for group in candidate_ids.chunks(NUM_SLOTS) {
            let mut world = AllocWorld::new(self.pool.total, self.cfg.alloc.clone());
            world.pool = self.pool;
            world.clock_s = self.now.as_secs_f64();
            for id in group {
                let inc = &self.incidents[id];
                world
                    .add_incident(id, inc.fused.clamp(0.0, 10.0), inc.unmet(), (self.now - inc.opened).as_secs_f64())
                    .expect("fresh world");
            }
            let slot_map: Vec<String> = world.slots.iter().map(|s| s.incident_id.clone()).collect();
            let state = world.encode_state().to_vec();
            let mut claims = Vec::new();
            let mut proposals = Vec::new();
            for id in group {
                let slot = world.slot_of(id).expect("group fits the slots");
                let proposal = match &self.policy {
                    Policy::Agentic(b) => ppo_proposal(&b.ppo, &world, slot),
                    Policy::Baseline => full_request(&world, slot),
                };
                let inc = &self.incidents[id];
                claims.push(Claim {
                    incident_id: id.clone(),
                    severity: inc.fused,
                    onset: inc.opened,
                    slot,
                    requested: units_of(&proposal),
                });
                proposals.push(proposal);
            }
            let grants = coordinate(&claims, self.pool.available);
            let mut order: Vec<usize> = (0..claims.len()).collect();
            order.sort_by(|&i, &j| claim_order(&claims[i], &claims[j]).then(i.cmp(&j)));
            for i in order {
                let granted = grants[i];
                let requested = claims[i].requested;
                if requested.iter().all(|u| *u == 0) {
                    continue;
                }
                if granted.iter().all(|u| *u == 0) {
                    self.emit(LogEvent::ClaimDenied { frame_id, incident_id: claims[i].incident_id.clone(), requested })?;
                    continue;
                }
                let mut left = granted;
                let mut actions = Vec::new();
                for &k in &proposals[i] {
                    if let Ok(AllocAction::Dispatch { rtype, .. }) = AllocAction::decode(k) {
                        if left[rtype] > 0 {
                            left[rtype] -= 1;
                            actions.push(k);
                        }
                    }
                }
                for (avail, n) in self.pool.available.iter_mut().zip(granted) {
                    *avail -= n;
                }
                let inc = self.incidents.get_mut(&claims[i].incident_id).unwrap();
                for (c, n) in inc.committed.iter_mut().zip(granted) {
                    *c += n;
                }
                inc.busy = true;
                drafts.push(Draft {
                    frame_id,
                    incident_id: claims[i].incident_id.clone(),
                    slot: claims[i].slot,
                    slot_map: slot_map.clone(),
                    proposed: proposals[i].clone(),
                    actions,
                    units: granted,
                    state: state.clone(),
                });
            }
        }
        let cost = SimTime::from_ms(self.cfg.decision_cost_ms);
        let n = candidate_ids.len() as u64;
        self.busy_until = self.now + SimTime(cost.0 * n);
        for (k, d) in drafts.into_iter().enumerate() {
            let pos = candidate_ids.iter().position(|c| *c == d.incident_id).unwrap() as u64;
            let _ = k;
            self.schedule(self.now + SimTime(cost.0 * (pos + 1)), EventKind::DecisionsReady, Payload::Ready(Box::new(d)));
        }
        Ok(())
    }

    fn travel_hours(&self, lat: f64, lon: f64) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, d) in self.cfg.depots.iter().enumerate() {
            let km = haversine_km(*d, (lat, lon));
            if km < best.1 {
                best = (i, km);
            }
        }
        (best.0, best.1 / self.cfg.travel_speed_kmh)
    }

    /// Decision-time ground truth for every open incident, for scoring only.
    fn oracle_snapshot(&self) -> Vec<OracleIncident> {
        let t_ms = self.now.0 / 1_000;
        self.incidents
            .values()
            .filter(|i| !i.closed)
            .map(|i| {
                let truth = self.truth_by_site.get(&i.site_id).map(|&k| &self.pack.ground_truth[k]);
                let (sev, demand) = match truth {
                    Some(t) if t.is_active_near(t_ms, self.cfg.close_after_ms) => (
                        t.severity_at(t_ms, self.pack.path_step_s)
                            .or_else(|| t.severity_path.last().copied())
                            .unwrap_or(0.0),
                        t.demand,
                    ),
                    _ => (0.0, [0; NUM_TYPES]),
                };
                OracleIncident {
                    incident_id: i.id.clone(),
                    site_id: i.site_id.clone(),
                    true_severity: sev,
                    true_unmet: std::array::from_fn(|r| demand[r].saturating_sub(i.committed[r])),
                    travel_h: self.travel_hours(i.lat, i.lon).1,
                }
            })
            .collect()
    }

    fn run_forecasts(&mut self) -> Result<(), EngineError> {
        let Policy::Agentic(b) = &self.policy else { return Ok(()) };
        let Some(net) = &b.predict else { return Ok(()) };
        let interval = SimTime::from_ms(self.cfg.forecast_interval_ms);
        let mut out = Vec::new();
        for inc in self.incidents.values_mut().filter(|i| !i.closed) {
            let Some(category) = inc.category else { continue };
            if inc.last_forecast.is_some_and(|t| self.now.saturating_sub(t) < interval) {
                continue;
            }
            inc.last_forecast = Some(self.now);
            inc.history.push(inc.fused);
            let c = Characteristics {
                category,
                severity: inc.fused,
                lat: inc.lat,
                lon: inc.lon,
                time: self.pack.start_epoch + (self.now.0 / 1_000_000) as i64,
                trailing: inc.history.clone(),
                weather: [0.0; 6],
                engaged: [0.0; 4],
            };
            let Ok(pred) = net.forecast(&PredInput::build(&c)) else { continue };
            out.push((inc.id.clone(), inc.site_id.clone(), category, pred.steps));
        }
        for (incident_id, site_id, category, steps) in out {
            self.publish(topics::PREDICTIONS, &incident_id, &steps)?;
            self.emit(LogEvent::Forecast { incident_id, site_id, category, step_s: self.pack.path_step_s, steps })?;
        }
        Ok(())
    }

    fn on_ready(&mut self, d: Draft) -> Result<(), EngineError> {
        if self.incidents.get(&d.incident_id).is_none_or(|i| i.closed) {
            return Ok(());
        }
        self.counters.decision += 1;
        let decision_id = format!("dec-{:05}", self.counters.decision);
        let agent = match self.policy {
            Policy::Agentic(_) => "ppo",
            Policy::Baseline => "ics",
        };
        let window_closes = match self.mode {
            Mode::Batch => None,
            Mode::Interactive => Some(self.now + SimTime::from_ms(self.cfg.override_window_ms)),
        };
        let dec = Decision {
            decision_id: decision_id.clone(),
            frame_id: d.frame_id,
            incident_id: d.incident_id.clone(),
            agent: agent.into(),
            slot: d.slot,
            slot_map: d.slot_map,
            proposed: d.proposed,
            actions: d.actions,
            units: d.units,
            issued: self.now,
            window_closes,
            status: DecisionStatus::Pending,
            applied: None,
            state: d.state,
        };
        self.emit(LogEvent::DecisionIssued {
            decision_id: decision_id.clone(),
            frame_id: dec.frame_id,
            incident_id: dec.incident_id.clone(),
            agent: agent.into(),
            actions: dec.actions.clone(),
            units: dec.units,
            status: DecisionStatus::Pending,
            window_closes,
        })?;
        self.publish(topics::DECISIONS, &decision_id, &dec)?;
        self.graph.upsert_node(self.decision_node(&dec))?;
        self.graph.add_edge(Edge::new(&decision_id, &dec.incident_id, labels::CONCERNS))?;
        let actions = dec.actions.clone();
        self.decisions.insert(decision_id.clone(), dec);
        match window_closes {
            None => self.resolve(&decision_id, DecisionStatus::AutoApproved, actions, "system:batch")?,
            Some(t) => self.schedule(t, EventKind::OverrideWindowExpiry, Payload::Expiry(decision_id)),
        }
        Ok(())
    }

    fn decision_node(&self, d: &Decision) -> Node {
        Node::new(&d.decision_id, NodeKind::Decision)
            .with("incident_id", d.incident_id.as_str())
            .with("agent", d.agent.as_str())
            .with("status", format!("{:?}", d.status))
            .with("issued_us", d.issued.0 as f64)
            .with("actions", actions_csv(&d.actions))
            .with("units", units_str(&d.units))
    }

    fn on_expiry(&mut self, id: &str) -> Result<(), EngineError> {
        if self.decisions.get(id).is_none_or(|d| d.status != DecisionStatus::Pending) {
            return Ok(());
        }
        self.emit(LogEvent::WindowExpired { decision_id: id.into() })?;
        let actions = self.decisions[id].actions.clone();
        self.graph.record_feedback(id, Verdict::Approved, None, "system:auto")?;
        self.resolve(id, DecisionStatus::AutoApproved, actions, "system:auto")
    }

    /// Moves a pending decision to a terminal status with the final actions,
    /// settling the unit reservation and dispatching.
    fn resolve(&mut self, id: &str, status: DecisionStatus, actions: Vec<usize>, author: &str) -> Result<(), EngineError> {
        let final_units = units_of(&actions);
        let (inc_id, reserved) = {
            let d = &self.decisions[id];
            (d.incident_id.clone(), d.units)
        };
        let closed = self.incidents[&inc_id].closed;
        if !closed {
            let inc = self.incidents.get_mut(&inc_id).unwrap();
            for r in 0..NUM_TYPES {
                if final_units[r] >= reserved[r] {
                    let extra = final_units[r] - reserved[r];
                    self.pool.available[r] -= extra;
                    inc.committed[r] += extra;
                } else {
                    let back = reserved[r] - final_units[r];
                    self.pool.available[r] += back;
                    inc.committed[r] -= back;
                }
            }
            inc.busy = false;
        }
        let frame_id = {
            let d = self.decisions.get_mut(id).unwrap();
            d.status = status;
            d.actions = actions.clone();
            d.units = final_units;
            d.frame_id
        };
        self.emit(LogEvent::DecisionResolved {
            decision_id: id.into(),
            frame_id,
            incident_id: inc_id.clone(),
            status,
            actions,
            units: final_units,
            author: author.into(),
        })?;
        let node = self.decision_node(&self.decisions[id]);
        self.graph.upsert_node(node)?;
        if !closed && final_units.iter().any(|u| *u > 0) {
            self.dispatch(id, &inc_id, final_units)?;
        }
        Ok(())
    }

    fn dispatch(&mut self, decision_id: &str, inc_id: &str, units: [u32; NUM_TYPES]) -> Result<(), EngineError> {
        let (lat, lon, source) = {
            let i = &self.incidents[inc_id];
            (i.lat, i.lon, i.source.clone())
        };
        let (depot, hours) = self.travel_hours(lat, lon);
        let eta = self.now + SimTime::from_secs_f64(hours * 3600.0);
        self.counters.dispatch += 1;
        let dispatch_id = format!("dsp-{:05}", self.counters.dispatch);
        self.emit(LogEvent::Dispatch {
            dispatch_id: dispatch_id.clone(),
            decision_id: decision_id.into(),
            incident_id: inc_id.into(),
            units,
            depot,
            eta,
        })?;
        #[derive(Serialize)]
        struct DispatchMsg<'a> {
            dispatch_id: &'a str,
            incident_id: &'a str,
            units: [u32; NUM_TYPES],
            eta: SimTime,
        }
        self.publish(
            topics::DISPATCHES,
            &dispatch_id,
            &DispatchMsg { dispatch_id: &dispatch_id, incident_id: inc_id, units, eta },
        )?;
        for (r, rt) in crate::alloc::ResourceType::ALL.iter().enumerate() {
            if units[r] == 0 {
                continue;
            }
            let rid = format!("resource-{rt:?}");
            self.graph.upsert_node(Node::new(&rid, NodeKind::Resource).with("total", self.pool.total[r] as f64))?;
            let mut e = Edge::new(&rid, inc_id, labels::ALLOCATED_TO);
            let prev = self
                .graph
                .edges()
                .find(|x| x.src == rid && x.dst == inc_id && x.label == labels::ALLOCATED_TO)
                .and_then(|x| x.props.get("units").and_then(|v| v.as_f64()))
                .unwrap_or(0.0);
            e.props.insert("units".into(), (prev + units[r] as f64).into());
            self.graph.add_edge(e)?;
        }
        self.dispatches.insert(
            dispatch_id.clone(),
            DispatchRec { decision_id: decision_id.into(), incident_id: inc_id.into(), units, cancelled: false },
        );
        let central = self.cfg.central_node.clone();
        self.counters.msg += 1;
        let msg = format!("od-{:06}", self.counters.msg);
        self.transmit(msg, &central, &source, self.cfg.dispatch_bytes, MISSION_CRITICAL, Transit::Order)?;
        self.schedule(eta, EventKind::DispatchArrival, Payload::Arrival(dispatch_id));
        Ok(())
    }

    fn on_arrival(&mut self, id: &str) -> Result<(), EngineError> {
        let Some(d) = self.dispatches.get(id).cloned() else { return Ok(()) };
        if d.cancelled {
            return Ok(());
        }
        if let Some(inc) = self.incidents.get_mut(&d.incident_id) {
            inc.first_arrival.get_or_insert(self.now);
        }
        self.emit(LogEvent::DispatchArrival {
            dispatch_id: id.into(),
            decision_id: d.decision_id,
            incident_id: d.incident_id,
            units: d.units,
        })
    }

    fn on_end(&mut self) -> Result<(), EngineError> {
        let pending: Vec<String> =
            self.decisions.values().filter(|d| d.status == DecisionStatus::Pending).map(|d| d.decision_id.clone()).collect();
        for id in pending {
            let actions = self.decisions[&id].actions.clone();
            self.resolve(&id, DecisionStatus::AutoApproved, actions, "system:end")?;
        }
        let stats = self.net.stats(SimTime::ZERO, self.end);
        self.emit(LogEvent::ScenarioEnd { net: stats })?;
        self.finished = true;
        Ok(())
    }

    /// Applies an operator directive at the current event boundary.
    ///
    /// Accepted and rejected directives alike are appended to the transcript
    /// so that a replay reproduces the same log. Repeating an accepted
    /// directive returns the same status without further effect.
    pub fn apply_override(&mut self, dir: OverrideDirective) -> Result<DecisionStatus, Rejection> {
        let reject = |reason: &str| Rejection { decision_id: dir.decision_id.clone(), reason: reason.into() };
        if self.finished {
            return Err(reject("run_finished"));
        }
        let Some(d) = self.decisions.get(&dir.decision_id) else {
            return Err(reject("unknown_decision"));
        };
        if d.status.is_terminal() && d.applied.as_ref() == Some(&(dir.verdict, dir.replacement.clone())) {
            return Ok(d.status);
        }
        self.transcript.push(TranscriptEntry {
            after_step: self.steps,
            after_seq: self.log.len() as u64,
            time: self.now,
            directive: dir.clone(),
        });
        match self.check_directive(&dir) {
            Ok(()) => {}
            Err(reason) => {
                self.emit(LogEvent::OverrideRejected { decision_id: dir.decision_id.clone(), reason: reason.clone() })
                    .map_err(|e| reject(&format!("internal: {e}")))?;
                return Err(reject(&reason));
            }
        }
        self.apply_checked(&dir).map_err(|e| reject(&format!("internal: {e}")))
    }

    fn check_directive(&self, dir: &OverrideDirective) -> Result<(), String> {
        let d = &self.decisions[&dir.decision_id];
        match d.status {
            DecisionStatus::Pending => {}
            DecisionStatus::AutoApproved => return Err("window_expired".into()),
            _ => return Err("already_resolved".into()),
        }
        if d.window_closes.is_some_and(|t| self.now > t) {
            return Err("window_expired".into());
        }
        match (dir.verdict, &dir.replacement) {
            (OverrideVerdict::Approve, Some(_)) => return Err("unexpected_replacement".into()),
            (OverrideVerdict::Approve, None) => return Ok(()),
            (_, None) => return Err("missing_replacement".into()),
            _ => {}
        }
        let rep = dir.replacement.as_ref().unwrap();
        for &k in rep {
            match AllocAction::decode(k) {
                Err(_) => return Err("invalid_action".into()),
                Ok(AllocAction::Dispatch { slot, .. }) if slot != d.slot => return Err("foreign_slot".into()),
                _ => {}
            }
        }
        let new_units = units_of(rep);
        if dir.verdict == OverrideVerdict::Modify {
            let orig = units_of(&d.actions);
            if (0..NUM_TYPES).any(|r| new_units[r] > 0 && orig[r] == 0) || new_units.iter().all(|u| *u == 0) {
                return Err("modify_changes_types".into());
            }
        }
        let inc_closed = self.incidents[&d.incident_id].closed;
        for ((&new, &old), &avail) in new_units.iter().zip(&d.units).zip(&self.pool.available) {
            if !inc_closed && new > old && new - old > avail {
                return Err("insufficient_units".into());
            }
        }
        Ok(())
    }

    fn apply_checked(&mut self, dir: &OverrideDirective) -> Result<DecisionStatus, EngineError> {
        let id = dir.decision_id.clone();
        let (status, verdict, actions) = match dir.verdict {
            OverrideVerdict::Approve => (DecisionStatus::Approved, Verdict::Approved, self.decisions[&id].actions.clone()),
            OverrideVerdict::Override => {
                (DecisionStatus::Overridden, Verdict::Overridden, dir.replacement.clone().unwrap_or_default())
            }
            OverrideVerdict::Modify => {
                (DecisionStatus::Modified, Verdict::Modified, dir.replacement.clone().unwrap_or_default())
            }
        };
        let replacement_csv = dir.replacement.as_ref().map(|r| actions_csv(r));
        self.graph.record_feedback(&id, verdict, replacement_csv.as_deref(), &dir.author)?;
        if dir.verdict != OverrideVerdict::Approve {
            let d = &self.decisions[&id];
            self.feedback.push(FeedbackSample {
                decision_id: id.clone(),
                verdict: dir.verdict,
                state: d.state.clone(),
                proposed: d.actions.clone(),
                replacement: actions.clone(),
            });
        }
        self.decisions.get_mut(&id).unwrap().applied = Some((dir.verdict, dir.replacement.clone()));
        self.resolve(&id, status, actions, &dir.author)?;
        Ok(status)
    }

    /// Runs to the end of the scenario.
    pub fn run_to_end(&mut self) -> Result<(), EngineError> {
        while self.step()? {}
        Ok(())
    }

    pub fn finish(self) -> Result<RunRecord, EngineError> {
        let mut bus = BTreeMap::new();
        for topic in self.bus.topics() {
            let mut buf = Vec::new();
            self.bus.snapshot_topic(&topic, &mut buf)?;
            bus.insert(topic, buf);
        }
        Ok(RunRecord {
            meta: RunMeta {
                format_version: RECORD_FORMAT_VERSION,
                pack_id: self.pack.pack_id.clone(),
                seed: self.pack.seed,
                mode: self.mode,
                policy: self.policy.kind(),
                end_time: self.end,
            },
            log: self.log,
            kgraph: self.graph,
            bus,
            transcript: self.transcript,
            feedback: self.feedback,
        })
    }
}

/// Greedy PPO rollout restricted to one slot's dispatch actions on a scratch
/// copy of the world. Stops at the first no-op.
fn ppo_proposal(agent: &crate::ppo::PpoAgent, world: &AllocWorld, slot: usize) -> Vec<usize> {
    let mut w = world.clone();
    let id = w.slots[slot].incident_id.clone();
    let mut out = Vec::new();
    loop {
        if !w.slots[slot].active || w.slots[slot].incident_id != id {
            break;
        }
        let mut mask = w.action_mask();
        for (k, m) in mask.iter_mut().enumerate().skip(1) {
            if let Ok(AllocAction::Dispatch { slot: s, .. }) = AllocAction::decode(k) {
                if s != slot {
                    *m = false;
                }
            }
        }
        if !mask[1..NUM_ACTIONS].iter().any(|m| *m) {
            break;
        }
        let k = agent.act_greedy(&w.encode_state(), Some(&mask));
        if k == 0 || !w.dispatch(AllocAction::decode(k).expect("policy emits valid indices")) {
            break;
        }
        out.push(k);
    }
    out
}

/// The whole outstanding request, capped by what is available.
fn full_request(world: &AllocWorld, slot: usize) -> Vec<usize> {
    let s = &world.slots[slot];
    let mut out = Vec::new();
    for r in 0..NUM_TYPES {
        let n = s.unmet[r].min(world.pool.available[r]);
        let k = AllocAction::Dispatch { rtype: r, slot }.encode();
        out.extend(std::iter::repeat_n(k, n as usize));
    }
    out
}

/// Runs a pack to completion, applying `transcript` directives at the event
/// boundaries where they were originally received.
pub fn run(
    pack: ScenarioPack,
    cfg: EngineConfig,
    policy: Policy,
    mode: Mode,
    transcript: &[TranscriptEntry],
) -> Result<RunRecord, EngineError> {
    let mut eng = Engine::new(pack, cfg, policy, mode)?;
    let mut next = 0;
    loop {
        while next < transcript.len() && transcript[next].after_step <= eng.steps() {
            let _ = eng.apply_override(transcript[next].directive.clone());
            next += 1;
        }
        if !eng.step()? {
            break;
        }
    }
    eng.finish()
}
