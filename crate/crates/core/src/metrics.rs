//! Table-I style evaluation of a run's event log against ground truth.
//!
//! Every metric is computed from the event log alone (plus the pack's
//! ground truth), so a replayed log yields a byte-identical report.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::alloc::{optimal_assignment, NUM_TYPES};
use crate::engine::{LogEntry, LogEvent, PolicyKind, SweepPoint};
use crate::geo::haversine_km;
use crate::scenario::{Category, EventClass, ScenarioPack};
use crate::SimTime;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeLabel {
    pub event_id: String,
    pub site_id: String,
    pub category: Category,
    pub onset_ms: u64,
    pub end_ms: u64,
    pub lat: f64,
    pub lon: f64,
    pub severity_path: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub events: Vec<OutcomeLabel>,
    /// Sites that only ever emit spurious readings.
    pub spurious_sites: BTreeSet<String>,
    pub path_step_s: u64,
}

impl GroundTruth {
    pub fn from_pack(pack: &ScenarioPack) -> Self {
        let events: Vec<OutcomeLabel> = pack
            .ground_truth
            .iter()
            .map(|t| OutcomeLabel {
                event_id: t.event_id.clone(),
                site_id: t.site_id.clone(),
                category: t.category,
                onset_ms: t.onset_ms,
                end_ms: t.end_ms,
                lat: t.lat,
                lon: t.lon,
                severity_path: t.severity_path.clone(),
            })
            .collect();
        let real: BTreeSet<&str> = events.iter().map(|e| e.site_id.as_str()).collect();
        let spurious_sites = pack
            .sensor_streams
            .iter()
            .map(|s| s.reading.site_id.as_str())
            .filter(|s| !real.contains(s))
            .map(str::to_string)
            .collect();
        GroundTruth { events, spurious_sites, path_step_s: pack.path_step_s }
    }

    fn by_site(&self, site: &str) -> Option<&OutcomeLabel> {
        self.events.iter().find(|e| e.site_id == site)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    pub fa_window_s: u64,
    pub fa_radius_km: f64,
    pub latency_threshold_s: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig { fa_window_s: 300, fa_radius_km: 50.0, latency_threshold_s: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub pack_id: String,
    pub policy: PolicyKind,
    /// Minutes from onset to the first unit arrival, over served events.
    pub response_time_mean: Option<f64>,
    pub response_unserved: usize,
    pub decision_latency_mean: Option<f64>,
    pub decision_latency_p95: Option<f64>,
    /// Seconds from onset to the first alert, over alerted events.
    pub alert_generation_mean: Option<f64>,
    pub situation_assessment_acc: Option<f64>,
    pub resource_distribution_index: Option<f64>,
    pub accuracy: Option<f64>,
    pub false_alarm_rate: Option<f64>,
    pub cpu_utilization: Option<f64>,
    pub memory_usage: Option<f64>,
    /// Mb/s over the union of active event intervals.
    pub network_bandwidth_mean: Option<f64>,
    pub system_availability: Option<f64>,
    /// Minutes.
    pub recovery_time_mean: Option<f64>,
    pub concurrent_operations_max: Option<usize>,
    pub prediction_accuracy: BTreeMap<Category, Option<f64>>,
    /// Metric name to the reason it is null.
    pub nulls: BTreeMap<String, String>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Nearest-rank 95th percentile.
pub fn p95(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((0.95 * v.len() as f64).ceil() as usize).clamp(1, v.len());
    Some(v[rank - 1])
}

fn incident_sites(log: &[LogEntry]) -> BTreeMap<&str, (&str, SimTime)> {
    log.iter()
        .filter_map(|e| match &e.event {
            LogEvent::IncidentOpened { incident_id, site_id, .. } => {
                Some((incident_id.as_str(), (site_id.as_str(), e.time)))
            }
            _ => None,
        })
        .collect()
}

/// Seconds from each incident's opening to its first issued decision.
pub fn decision_latencies_s(log: &[LogEntry]) -> Vec<f64> {
    let opened = incident_sites(log);
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for e in log {
        if let LogEvent::DecisionIssued { incident_id, .. } = &e.event {
            if seen.insert(incident_id.as_str()) {
                if let Some((_, t0)) = opened.get(incident_id.as_str()) {
                    out.push((e.time - *t0).as_secs_f64());
                }
            }
        }
    }
    out
}

/// Minutes from onset to the first arrival at each event's site; `None` for
/// unserved events.
pub fn response_times_min(log: &[LogEntry], truth: &GroundTruth) -> Vec<Option<f64>> {
    let sites = incident_sites(log);
    let mut first: BTreeMap<&str, SimTime> = BTreeMap::new();
    for e in log {
        if let LogEvent::DispatchArrival { incident_id, .. } = &e.event {
            if let Some((site, _)) = sites.get(incident_id.as_str()) {
                first.entry(site).or_insert(e.time);
            }
        }
    }
    truth
        .events
        .iter()
        .map(|ev| {
            first
                .get(ev.site_id.as_str())
                .filter(|t| t.0 / 1_000 >= ev.onset_ms)
                .map(|t| (t.0 as f64 / 1_000.0 - ev.onset_ms as f64) / 60_000.0)
        })
        .collect()
}

struct AlertRec<'a> {
    time: SimTime,
    site: &'a str,
    class: EventClass,
    lat: f64,
    lon: f64,
}

fn alerts(log: &[LogEntry]) -> Vec<AlertRec<'_>> {
    log.iter()
        .filter_map(|e| match &e.event {
            LogEvent::Alert { site_id, class, lat, lon, .. } => {
                Some(AlertRec { time: e.time, site: site_id, class: *class, lat: *lat, lon: *lon })
            }
            _ => None,
        })
        .collect()
}

fn first_alert<'a, 'b>(al: &'b [AlertRec<'a>], site: &str) -> Option<&'b AlertRec<'a>> {
    al.iter().find(|a| a.site == site)
}

/// Seconds from onset to the first alert per alerted event.
pub fn alert_generation_s(log: &[LogEntry], truth: &GroundTruth) -> Vec<f64> {
    let al = alerts(log);
    truth
        .events
        .iter()
        .filter_map(|ev| {
            first_alert(&al, &ev.site_id)
                .filter(|a| a.time.0 / 1_000 >= ev.onset_ms)
                .map(|a| a.time.0 as f64 / 1e6 - ev.onset_ms as f64 / 1e3)
        })
        .collect()
}

/// Percent of alerts with no ground-truth event within the time window and
/// radius. Zero alerts give 0%.
pub fn false_alarm_rate(log: &[LogEntry], truth: &GroundTruth, cfg: &MetricsConfig) -> f64 {
    let al = alerts(log);
    if al.is_empty() {
        return 0.0;
    }
    let slack = cfg.fa_window_s * 1_000;
    let false_count = al
        .iter()
        .filter(|a| {
            let t = a.time.0 / 1_000;
            !truth.events.iter().any(|ev| {
                t + slack >= ev.onset_ms
                    && t <= ev.end_ms + slack
                    && haversine_km((a.lat, a.lon), (ev.lat, ev.lon)) <= cfg.fa_radius_km
            })
        })
        .count();
    100.0 * false_count as f64 / al.len() as f64
}

/// Percent of ground-truth events whose first alert carries the right class;
/// unalerted events count as wrong.
pub fn assessment_accuracy(log: &[LogEntry], truth: &GroundTruth) -> Option<f64> {
    if truth.events.is_empty() {
        return None;
    }
    let al = alerts(log);
    let ok = truth
        .events
        .iter()
        .filter(|ev| first_alert(&al, &ev.site_id).is_some_and(|a| a.class == EventClass::from(ev.category)))
        .count();
    Some(100.0 * ok as f64 / truth.events.len() as f64)
}

/// Percent of all sites handled correctly: real sites alerted with the right
/// class, spurious sites never alerted.
pub fn overall_accuracy(log: &[LogEntry], truth: &GroundTruth) -> Option<f64> {
    let n = truth.events.len() + truth.spurious_sites.len();
    if n == 0 {
        return None;
    }
    let al = alerts(log);
    let real = truth
        .events
        .iter()
        .filter(|ev| first_alert(&al, &ev.site_id).is_some_and(|a| a.class == EventClass::from(ev.category)))
        .count();
    let quiet = truth.spurious_sites.iter().filter(|s| first_alert(&al, s).is_none()).count();
    Some(100.0 * (real + quiet) as f64 / n as f64)
}

/// Units per incident that an optimal assignment of the available units
/// would send, given true severities and travel times.
pub fn oracle_allocation(
    available: &[u32; NUM_TYPES],
    incidents: &[crate::engine::OracleIncident],
) -> Result<Vec<[u32; NUM_TYPES]>, crate::alloc::AllocError> {
    let mut out = vec![[0u32; NUM_TYPES]; incidents.len()];
    for r in 0..NUM_TYPES {
        let mut col_owner = Vec::new();
        let mut col_cost = Vec::new();
        for (i, inc) in incidents.iter().enumerate() {
            for _ in 0..inc.true_unmet[r] {
                col_owner.push(i);
                col_cost.push(inc.travel_h - inc.true_severity);
            }
        }
        let rows = (available[r] as usize).min(col_owner.len());
        if rows == 0 {
            continue;
        }
        // one "stay home" column per unit
        let cost: Vec<Vec<f64>> = (0..rows)
            .map(|_| col_cost.iter().copied().chain(std::iter::repeat_n(0.0, rows)).collect())
            .collect();
        let a = optimal_assignment(&cost)?;
        for (_, c) in a.pairs() {
            if c < col_owner.len() {
                out[col_owner[c]][r] += 1;
            }
        }
    }
    Ok(out)
}

/// Percent of granted units that match the per-frame oracle allocation;
/// `None` if nothing was granted.
pub fn distribution_index(log: &[LogEntry]) -> Option<f64> {
    let mut granted: BTreeMap<(u64, &str), [u32; NUM_TYPES]> = BTreeMap::new();
    for e in log {
        if let LogEvent::DecisionResolved { frame_id, incident_id, units, .. } = &e.event {
            let g = granted.entry((*frame_id, incident_id.as_str())).or_insert([0; NUM_TYPES]);
            for r in 0..NUM_TYPES {
                g[r] += units[r];
            }
        }
    }
    let (mut correct, mut total) = (0u64, 0u64);
    for e in log {
        let LogEvent::OracleSnapshot { frame_id, available, incidents } = &e.event else { continue };
        let Ok(oracle) = oracle_allocation(available, incidents) else { continue };
        for (inc, o) in incidents.iter().zip(&oracle) {
            if let Some(g) = granted.get(&(*frame_id, inc.incident_id.as_str())) {
                for r in 0..NUM_TYPES {
                    correct += g[r].min(o[r]) as u64;
                    total += g[r] as u64;
                }
            }
        }
    }
    (total > 0).then(|| 100.0 * correct as f64 / total as f64)
}

fn merged_intervals(truth: &GroundTruth, end_ms: u64) -> Vec<(u64, u64)> {
    let mut iv: Vec<(u64, u64)> =
        truth.events.iter().map(|e| (e.onset_ms, e.end_ms.min(end_ms))).filter(|(a, b)| b > a).collect();
    iv.sort_unstable();
    let mut out: Vec<(u64, u64)> = Vec::new();
    for (a, b) in iv {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

/// Delivered megabits per second over the union of active event intervals.
pub fn bandwidth_mbps(log: &[LogEntry], truth: &GroundTruth) -> Option<f64> {
    let end_ms = log.last().map_or(0, |e| e.time.0 / 1_000);
    let iv = merged_intervals(truth, end_ms);
    let span_ms: u64 = iv.iter().map(|(a, b)| b - a).sum();
    if span_ms == 0 {
        return None;
    }
    let bytes: u64 = log
        .iter()
        .filter_map(|e| match &e.event {
            LogEvent::MessageDelivery { size_bytes, .. } => {
                let t = e.time.0 / 1_000;
                iv.iter().any(|(a, b)| t >= *a && t <= *b).then_some(*size_bytes)
            }
            _ => None,
        })
        .sum();
    Some(bytes as f64 * 8.0 / (span_ms as f64 / 1_000.0) / 1e6)
}

/// Percent of forecast steps (per category) whose true severity lies inside
/// the 90% interval.
pub fn prediction_accuracy(log: &[LogEntry], truth: &GroundTruth) -> BTreeMap<Category, Option<f64>> {
    let mut hits: BTreeMap<Category, (usize, usize)> = BTreeMap::new();
    for e in log {
        let LogEvent::Forecast { site_id, category, step_s, steps, .. } = &e.event else { continue };
        let Some(ev) = truth.by_site(site_id) else { continue };
        let t_ms = e.time.0 / 1_000;
        for (k, s) in steps.iter().enumerate() {
            let at = t_ms + (k as u64 + 1) * step_s * 1_000;
            let Some(actual) = severity_at(ev, at, truth.path_step_s) else { continue };
            let h = hits.entry(*category).or_default();
            h.1 += 1;
            if actual >= s.ci90.0 && actual <= s.ci90.1 {
                h.0 += 1;
            }
        }
    }
    Category::ALL
        .iter()
        .map(|c| (*c, hits.get(c).filter(|h| h.1 > 0).map(|h| 100.0 * h.0 as f64 / h.1 as f64)))
        .collect()
}

fn severity_at(ev: &OutcomeLabel, t_ms: u64, step_s: u64) -> Option<f64> {
    if t_ms < ev.onset_ms || step_s == 0 {
        return None;
    }
    ev.severity_path.get(((t_ms - ev.onset_ms) / (step_s * 1_000)) as usize).copied()
}

/// Largest ladder rung before the first whose p95 exceeds the threshold.
pub fn concurrent_ops(points: &[SweepPoint], threshold_s: f64) -> Option<usize> {
    let mut best = None;
    for p in points {
        if p.p95_latency_s > threshold_s {
            break;
        }
        best = Some(p.n);
    }
    best
}

/// Baseline over agentic response time; 0 when the agentic time is 0.
pub fn response_time_efficiency(baseline_min: f64, agentic_min: f64) -> f64 {
    if agentic_min <= 0.0 {
        0.0
    } else {
        baseline_min / agentic_min
    }
}

pub fn compute(
    pack_id: &str,
    policy: PolicyKind,
    log: &[LogEntry],
    truth: &GroundTruth,
    cfg: &MetricsConfig,
    sweep: Option<&[SweepPoint]>,
) -> MetricsReport {
    let mut nulls = BTreeMap::new();
    let rts = response_times_min(log, truth);
    let served: Vec<f64> = rts.iter().flatten().copied().collect();
    let response_time_mean = mean(&served);
    if response_time_mean.is_none() {
        nulls.insert("response_time_mean".into(), "no event was served".into());
    }
    let lat = decision_latencies_s(log);
    if lat.is_empty() {
        nulls.insert("decision_latency".into(), "no decisions issued".into());
    }
    let ag = alert_generation_s(log, truth);
    if ag.is_empty() {
        nulls.insert("alert_generation_mean".into(), "no ground-truth event was alerted".into());
    }
    let rdi = distribution_index(log);
    if rdi.is_none() {
        nulls.insert("resource_distribution_index".into(), "no units were allocated".into());
    }
    let net = log.iter().rev().find_map(|e| match &e.event {
        LogEvent::ScenarioEnd { net } => Some(net),
        _ => None,
    });
    let system_availability = net.map(|n| 100.0 * n.availability_fraction);
    let recoveries: Vec<f64> = net
        .map(|n| n.recovery_events.iter().filter_map(|r| r.recovery_time()).map(|t| t.as_secs_f64() / 60.0).collect())
        .unwrap_or_default();
    let recovery_time_mean = mean(&recoveries);
    if recovery_time_mean.is_none() {
        nulls.insert("recovery_time_mean".into(), "no completed outage recovery in the run".into());
    }
    if system_availability.is_none() {
        nulls.insert("system_availability".into(), "run did not reach scenario end".into());
    }
    let bw = bandwidth_mbps(log, truth);
    if bw.is_none() {
        nulls.insert("network_bandwidth_mean".into(), "no active event interval".into());
    }
    let prediction_accuracy = prediction_accuracy(log, truth);
    for (c, v) in &prediction_accuracy {
        if v.is_none() {
            let why = match policy {
                PolicyKind::Baseline => "baseline pipeline issues no forecasts",
                PolicyKind::Agentic => "no scorable forecast for this category",
            };
            nulls.insert(format!("prediction_accuracy.{c}"), why.into());
        }
    }
    let concurrent_operations_max = sweep.and_then(|s| concurrent_ops(s, cfg.latency_threshold_s));
    if concurrent_operations_max.is_none() {
        let why = if sweep.is_some() { "first sweep rung already exceeds the latency threshold" } else { "no sweep supplied" };
        nulls.insert("concurrent_operations_max".into(), why.into());
    }
    nulls.insert("cpu_utilization".into(), "host resource usage is not modelled by the simulator".into());
    nulls.insert("memory_usage".into(), "host resource usage is not modelled by the simulator".into());
    MetricsReport {
        pack_id: pack_id.into(),
        policy,
        response_time_mean,
        response_unserved: rts.iter().filter(|r| r.is_none()).count(),
        decision_latency_mean: mean(&lat),
        decision_latency_p95: p95(&lat),
        alert_generation_mean: mean(&ag),
        situation_assessment_acc: assessment_accuracy(log, truth),
        resource_distribution_index: rdi,
        accuracy: overall_accuracy(log, truth),
        false_alarm_rate: Some(false_alarm_rate(log, truth, cfg)),
        cpu_utilization: None,
        memory_usage: None,
        network_bandwidth_mean: bw,
        system_availability,
        recovery_time_mean,
        concurrent_operations_max,
        prediction_accuracy,
        nulls,
    }
}

/// Means of each metric over several reports (null if null everywhere).
pub fn aggregate(reports: &[MetricsReport]) -> Option<MetricsReport> {
    let first = reports.first()?;
    let avg = |f: &dyn Fn(&MetricsReport) -> Option<f64>| {
        let xs: Vec<f64> = reports.iter().filter_map(f).collect();
        mean(&xs)
    };
    let mut nulls = BTreeMap::new();
    for r in reports {
        for (k, v) in &r.nulls {
            nulls.entry(k.clone()).or_insert_with(|| v.clone());
        }
    }
    let mut out = MetricsReport {
        pack_id: format!("{} packs", reports.len()),
        policy: first.policy,
        response_time_mean: avg(&|r| r.response_time_mean),
        response_unserved: reports.iter().map(|r| r.response_unserved).sum(),
        decision_latency_mean: avg(&|r| r.decision_latency_mean),
        decision_latency_p95: avg(&|r| r.decision_latency_p95),
        alert_generation_mean: avg(&|r| r.alert_generation_mean),
        situation_assessment_acc: avg(&|r| r.situation_assessment_acc),
        resource_distribution_index: avg(&|r| r.resource_distribution_index),
        accuracy: avg(&|r| r.accuracy),
        false_alarm_rate: avg(&|r| r.false_alarm_rate),
        cpu_utilization: None,
        memory_usage: None,
        network_bandwidth_mean: avg(&|r| r.network_bandwidth_mean),
        system_availability: avg(&|r| r.system_availability),
        recovery_time_mean: avg(&|r| r.recovery_time_mean),
        concurrent_operations_max: reports.iter().filter_map(|r| r.concurrent_operations_max).max(),
        prediction_accuracy: Category::ALL
            .iter()
            .map(|c| (*c, avg(&|r| r.prediction_accuracy.get(c).copied().flatten())))
            .collect(),
        nulls: BTreeMap::new(),
    };
    // keep only reasons for metrics that stayed null
    let still_null = |k: &str| match k {
        "response_time_mean" => out.response_time_mean.is_none(),
        "decision_latency" => out.decision_latency_mean.is_none(),
        "alert_generation_mean" => out.alert_generation_mean.is_none(),
        "resource_distribution_index" => out.resource_distribution_index.is_none(),
        "recovery_time_mean" => out.recovery_time_mean.is_none(),
        "system_availability" => out.system_availability.is_none(),
        "network_bandwidth_mean" => out.network_bandwidth_mean.is_none(),
        "concurrent_operations_max" => out.concurrent_operations_max.is_none(),
        k if k.starts_with("prediction_accuracy.") => {
            Category::ALL.iter().any(|c| k.ends_with(&c.to_string()) && out.prediction_accuracy[c].is_none())
        }
        _ => true,
    };
    out.nulls = nulls.into_iter().filter(|(k, _)| still_null(k)).collect();
    Some(out)
}

impl MetricsReport {
    /// Rows in Table I order: (label, unit, value).
    pub fn rows(&self) -> Vec<(&'static str, &'static str, Option<f64>)> {
        let pa = |c: Category| self.prediction_accuracy.get(&c).copied().flatten();
        vec![
            ("Response time", "min", self.response_time_mean),
            ("Decision Latency", "s", self.decision_latency_mean),
            ("Alert Generation", "s", self.alert_generation_mean),
            ("Situation Assessment", "%", self.situation_assessment_acc),
            ("Resource Allocation", "%", self.resource_distribution_index),
            ("Accuracy", "%", self.accuracy),
            ("False Alarm rate", "%", self.false_alarm_rate),
            ("CPU Utilization", "%", self.cpu_utilization),
            ("Memory Usage", "GB", self.memory_usage),
            ("Network Bandwidth", "Mb/s", self.network_bandwidth_mean),
            ("System Availability", "%", self.system_availability),
            ("Recovery Time", "min", self.recovery_time_mean),
            ("Concurrent Operations", "count", self.concurrent_operations_max.map(|n| n as f64)),
            ("Flood Prediction", "%", pa(Category::Flood)),
            ("Hurricane Prediction", "%", pa(Category::Hurricane)),
            ("Wildfire Prediction", "%", pa(Category::Wildfire)),
        ]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn table(&self) -> String {
        render_table(&[("value", self)])
    }
}

fn cell(v: Option<f64>) -> String {
    match v {
        None => "n/a".to_string(),
        Some(x) if x != 0.0 && x.abs() < 0.01 => format!("{x:.5}"),
        Some(x) => format!("{x:.2}"),
    }
}

/// Text table with one column per report, rows in Table I order.
pub fn render_table(columns: &[(&str, &MetricsReport)]) -> String {
    let mut s = String::new();
    let _ = write!(s, "{:<24}{:>7}", "metric", "unit");
    for (name, _) in columns {
        let _ = write!(s, "{name:>14}");
    }
    s.push('\n');
    let rows: Vec<_> = columns.iter().map(|(_, r)| r.rows()).collect();
    for i in 0..rows.first().map_or(0, Vec::len) {
        let (label, unit, _) = rows[0][i];
        let _ = write!(s, "{label:<24}{unit:>7}");
        for r in &rows {
            let _ = write!(s, "{:>14}", cell(r[i].2));
        }
        s.push('\n');
    }
    s
}

/// Side-by-side agentic vs baseline table plus the response-time ratio.
pub fn render_comparison(agentic: &MetricsReport, baseline: &MetricsReport) -> String {
    let mut s = render_table(&[("agentic", agentic), ("baseline", baseline)]);
    if let (Some(b), Some(a)) = (baseline.response_time_mean, agentic.response_time_mean) {
        let _ = writeln!(s, "{:<24}{:>7}{:>14.2}", "Response efficiency", "ratio", response_time_efficiency(b, a));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::OracleIncident;

    #[test]
    fn p95_nearest_rank() {
        let xs: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(p95(&xs), Some(19.0));
        assert_eq!(p95(&[3.0]), Some(3.0));
        assert_eq!(p95(&[]), None);
    }

    #[test]
    fn concurrent_ops_threshold_scan() {
        let pts: Vec<SweepPoint> = (1..=6)
            .map(|n| SweepPoint { n, p95_latency_s: if n <= 5 { 9.0 } else { 11.0 }, decisions: n })
            .collect();
        assert_eq!(concurrent_ops(&pts, 10.0), Some(5));
        assert_eq!(concurrent_ops(&pts[5..], 10.0), None);
    }

    #[test]
    fn efficiency_ratio() {
        assert_eq!(response_time_efficiency(8.8, 3.2), 8.8 / 3.2);
        assert_eq!(response_time_efficiency(5.0, 0.0), 0.0);
    }

    #[test]
    fn oracle_prefers_severe_close_incidents() {
        let inc = |id: &str, sev: f64, unmet: u32, h: f64| OracleIncident {
            incident_id: id.into(),
            site_id: id.into(),
            true_severity: sev,
            true_unmet: [unmet, 0, 0, 0],
            travel_h: h,
        };
        let a = oracle_allocation(&[2, 0, 0, 0], &[inc("a", 3.0, 2, 0.1), inc("b", 8.0, 1, 0.5)]).unwrap();
        assert_eq!(a, vec![[1, 0, 0, 0], [1, 0, 0, 0]]);
        // a false site (severity 0, no demand) gets nothing
        let a = oracle_allocation(&[3, 0, 0, 0], &[inc("x", 0.0, 0, 0.1), inc("b", 8.0, 1, 0.5)]).unwrap();
        assert_eq!(a, vec![[0; 4], [1, 0, 0, 0]]);
    }
}
