use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::SimTime;

/// A severity observation that has reached the central perception engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliveredReading {
    pub incident_id: String,
    pub time: SimTime,
    pub severity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameIncident {
    pub incident_id: String,
    pub fused_severity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SituationFrame {
    pub frame_id: u64,
    pub time: SimTime,
    /// Sorted by incident id.
    pub incidents: Vec<FrameIncident>,
    pub recent_alerts: Vec<String>,
    pub forecast_refs: Vec<String>,
}

/// Fuses delivered readings per incident.
///
/// The fused severity is the maximum over readings in `[t - window, t]`; an
/// incident with no reading in the window keeps its most recent value
/// (ties at equal time resolve to the larger severity). Readings after `t`
/// are ignored. The result does not depend on input order.
pub fn perceive(frame_id: u64, readings: &[DeliveredReading], t: SimTime, window: SimTime) -> SituationFrame {
    let lo = t.saturating_sub(window);
    // (max in window, latest (time, severity))
    let mut acc: BTreeMap<&str, (Option<f64>, (SimTime, f64))> = BTreeMap::new();
    for r in readings.iter().filter(|r| r.time <= t) {
        let e = acc.entry(&r.incident_id).or_insert((None, (r.time, r.severity)));
        if r.time >= lo {
            e.0 = Some(e.0.map_or(r.severity, |m: f64| m.max(r.severity)));
        }
        let (lt, ls) = e.1;
        if r.time > lt || (r.time == lt && r.severity > ls) {
            e.1 = (r.time, r.severity);
        }
    }
    let incidents = acc
        .into_iter()
        .map(|(id, (win, (_, last)))| FrameIncident { incident_id: id.to_string(), fused_severity: win.unwrap_or(last) })
        .collect();
    SituationFrame { frame_id, time: t, incidents, recent_alerts: vec![], forecast_refs: vec![] }
}
