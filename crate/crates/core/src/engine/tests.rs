use proptest::prelude::*;

use super::*;
use crate::alloc::STATE_DIM;
use crate::assess::AssessModel;
use crate::ppo::{PpoAgent, PpoConfig};
use crate::scenario::{generate_pack, GeneratorConfig, Reading, SensorSample};

fn reading(site: &str, k: usize, t_s: u64, sev: f64, text: &str, demand: [u32; 4]) -> SensorSample {
    SensorSample {
        t_ms: t_s * 1000,
        source_node: "edge-1".into(),
        reading: Reading {
            reading_id: format!("{site}-r{k}"),
            site_id: site.into(),
            event_ref: None,
            severity: sev,
            lat: 38.7,
            lon: -121.5,
            text: text.into(),
            demand,
        },
    }
}

fn pack_with(readings: Vec<SensorSample>, resources: [u32; 4], duration_s: u64) -> ScenarioPack {
    let mut p = ScenarioPack::empty("unit", 9);
    p.duration_s = duration_s;
    p.resources = resources;
    p.edge_nodes = vec!["edge-1".into(), "edge-2".into(), "edge-3".into()];
    let mut r = readings;
    r.sort_by_key(|s| s.t_ms);
    p.sensor_streams = r;
    p
}

/// Classifier that calls everything a wildfire with high confidence.
fn wildfire_bundle() -> AgentBundle {
    let mut assess = AssessModel::zeros(64, 0.7);
    assess.bias[EventClass::Wildfire.index()] = 10.0;
    let ppo = PpoAgent::new(STATE_DIM, NUM_ACTIONS, PpoConfig { hidden: vec![8], ..PpoConfig::default() }, &mut crate::rng::seeded(3));
    AgentBundle { assess, ppo, predict: None }
}

fn kinds(rec: &RunRecord) -> Vec<&'static str> {
    rec.log.iter().map(|e| e.event.kind()).collect()
}

fn pos(k: &[&str], kind: &str) -> usize {
    k.iter().position(|x| *x == kind).unwrap_or_else(|| panic!("no {kind} in log"))
}

fn single_fire() -> ScenarioPack {
    let rs = (0..6).map(|k| reading("s1", k, 10 + 30 * k as u64, 6.0, "smoke and flames", [1, 2, 0, 0])).collect();
    pack_with(rs, [2, 2, 2, 2], 3600)
}

#[test]
fn empty_pack_only_ends() {
    let rec = run(pack_with(vec![], [1; 4], 60), EngineConfig::default(), Policy::Baseline, Mode::Batch, &[]).unwrap();
    assert_eq!(kinds(&rec), vec!["ScenarioEnd"]);
    assert_eq!(rec.log[0].time, SimTime::from_secs(60));
}

#[test]
fn baseline_causal_chain() {
    let rec = run(single_fire(), EngineConfig::default(), Policy::Baseline, Mode::Batch, &[]).unwrap();
    let k = kinds(&rec);
    let chain = ["SensorReading", "MessageDelivery", "Alert", "IncidentOpened", "Frame", "OracleSnapshot",
        "DecisionIssued", "DecisionResolved", "Dispatch", "DispatchArrival", "IncidentResolved", "ScenarioEnd"];
    let at: Vec<usize> = chain.iter().map(|c| pos(&k, c)).collect();
    assert!(at.windows(2).all(|w| w[0] < w[1]), "{k:?}");
    // the rule fires on the second reading, 30 s after the first
    let alert = &rec.log[at[2]];
    assert!(alert.time > SimTime::from_secs(40) && alert.time < SimTime::from_secs(41));
    // ICS package for a wildfire is capped by the pool: 1 medical, 2 fire, 0 rescue, 1 logistics
    match &rec.log[at[8]].event {
        LogEvent::Dispatch { units, .. } => assert_eq!(*units, [1, 2, 0, 1]),
        e => panic!("{e:?}"),
    }
    for (i, e) in rec.log.iter().enumerate() {
        assert_eq!(e.seq, i as u64);
    }
    assert!(rec.log.windows(2).all(|w| w[0].time <= w[1].time));
}

#[test]
fn agentic_alerts_on_first_reading() {
    let rec = run(single_fire(), EngineConfig::default(), Policy::Agentic(Box::new(wildfire_bundle())), Mode::Batch, &[])
        .unwrap();
    let k = kinds(&rec);
    let alert = &rec.log[pos(&k, "Alert")];
    assert!(alert.time > SimTime::from_secs(10) && alert.time < SimTime::from_secs(11));
    match &rec.log[pos(&k, "IncidentOpened")].event {
        LogEvent::IncidentOpened { demand, category, .. } => {
            assert_eq!(*demand, [1, 2, 0, 0]);
            assert_eq!(*category, Some(Category::Wildfire));
        }
        e => panic!("{e:?}"),
    }
    // evidence travels on the mission-critical slice at the evidence size
    match &rec.log[pos(&k, "MessageDelivery")].event {
        LogEvent::MessageDelivery { slice, size_bytes, .. } => {
            assert_eq!(slice, MISSION_CRITICAL);
            assert_eq!(*size_bytes, 512);
        }
        e => panic!("{e:?}"),
    }
}

#[test]
fn runs_are_deterministic() {
    let cfg = GeneratorConfig { event_count: 4, duration_s: 4 * 3600, link_failures: 1, ..GeneratorConfig::default() };
    let pack = generate_pack(&cfg, 21).unwrap();
    let go = |p: Policy| run(pack.clone(), EngineConfig::default(), p, Mode::Batch, &[]).unwrap();
    for policy in [Policy::Baseline, Policy::Agentic(Box::new(wildfire_bundle()))] {
        let a = go(policy.clone());
        let b = go(policy);
        assert_eq!(a.log_bytes(), b.log_bytes());
        assert_eq!(a.kgraph_bytes(), b.kgraph_bytes());
        assert_eq!(a.bus, b.bus);
    }
}

/// Two incidents want the last medical unit in the same round; the more
/// severe one gets it and the other is denied.
#[test]
fn contention_goes_to_higher_severity() {
    let mut rs = Vec::new();
    for k in 0..2 {
        rs.push(reading("low", k, 30 * k as u64, 4.0, "flames", [1, 0, 0, 0]));
        rs.push(reading("high", k, 30 * k as u64, 8.0, "flames", [1, 0, 0, 0]));
    }
    let rec = run(pack_with(rs, [1, 0, 0, 0], 120), EngineConfig::default(), Policy::Baseline, Mode::Batch, &[]).unwrap();
    let issued: Vec<&str> = rec
        .log
        .iter()
        .filter_map(|e| match &e.event {
            LogEvent::DecisionIssued { incident_id, .. } => Some(incident_id.as_str()),
            _ => None,
        })
        .collect();
    assert_eq!(issued, vec!["inc-high-1"]);
    assert!(rec.log.iter().any(|e| matches!(&e.event, LogEvent::ClaimDenied { incident_id, .. } if incident_id == "inc-low-1")));
}

fn interactive_engine() -> (Engine, String) {
    let mut eng = Engine::new(single_fire(), EngineConfig::default(), Policy::Baseline, Mode::Interactive).unwrap();
    loop {
        assert!(eng.step().unwrap());
        if let Some(d) = eng.snapshot().pending.first() {
            return (eng, d.decision_id.clone());
        }
    }
}

fn directive(id: &str, verdict: OverrideVerdict, replacement: Option<Vec<usize>>) -> OverrideDirective {
    OverrideDirective { decision_id: id.into(), verdict, replacement, author: "op".into(), received_wall_ms: None }
}

#[test]
fn approve_within_window_and_repeat_is_idempotent() {
    let (mut eng, id) = interactive_engine();
    let d = directive(&id, OverrideVerdict::Approve, None);
    assert_eq!(eng.apply_override(d.clone()), Ok(DecisionStatus::Approved));
    let len = eng.log().len();
    assert_eq!(eng.apply_override(d), Ok(DecisionStatus::Approved));
    assert_eq!(eng.log().len(), len);
    let again = directive(&id, OverrideVerdict::Override, Some(vec![]));
    assert_eq!(eng.apply_override(again).unwrap_err().reason, "already_resolved");
    assert_eq!(eng.graph().feedback_history("inc-s1-1").unwrap().len(), 1);
}

#[test]
fn override_after_expiry_is_rejected() {
    let (mut eng, id) = interactive_engine();
    while eng.decision(&id).unwrap().status == DecisionStatus::Pending {
        eng.step().unwrap();
    }
    assert_eq!(eng.decision(&id).unwrap().status, DecisionStatus::AutoApproved);
    let r = eng.apply_override(directive(&id, OverrideVerdict::Approve, None)).unwrap_err();
    assert_eq!(r.reason, "window_expired");
    assert!(eng.log().iter().any(|e| matches!(&e.event, LogEvent::OverrideRejected { reason, .. } if reason == "window_expired")));
}

#[test]
fn override_replaces_the_dispatch() {
    let (mut eng, id) = interactive_engine();
    let slot = eng.decision(&id).unwrap().slot;
    let rescue = AllocAction::Dispatch { rtype: 2, slot }.encode();
    assert_eq!(eng.apply_override(directive(&id, OverrideVerdict::Override, Some(vec![rescue]))), Ok(DecisionStatus::Overridden));
    let d = eng.decision(&id).unwrap();
    assert_eq!(d.units, [0, 0, 1, 0]);
    let last_dispatch = eng.log().iter().rev().find_map(|e| match &e.event {
        LogEvent::Dispatch { units, .. } => Some(*units),
        _ => None,
    });
    assert_eq!(last_dispatch, Some([0, 0, 1, 0]));
    let snap = eng.snapshot();
    assert_eq!(snap.pool.available, [2, 2, 1, 2]);
    eng.run_to_end().unwrap();
    let rec = eng.finish().unwrap();
    assert_eq!(rec.feedback.len(), 1);
    assert_eq!(rec.feedback[0].replacement, vec![rescue]);
}

#[test]
fn bad_directives_are_rejected_with_reasons() {
    let (mut eng, id) = interactive_engine();
    let slot = eng.decision(&id).unwrap().slot;
    let foreign = AllocAction::Dispatch { rtype: 0, slot: (slot + 1) % NUM_SLOTS }.encode();
    let rescue = AllocAction::Dispatch { rtype: 2, slot }.encode();
    let medic = AllocAction::Dispatch { rtype: 0, slot }.encode();
    let cases = [
        (directive("dec-99999", OverrideVerdict::Approve, None), "unknown_decision"),
        (directive(&id, OverrideVerdict::Approve, Some(vec![])), "unexpected_replacement"),
        (directive(&id, OverrideVerdict::Override, None), "missing_replacement"),
        (directive(&id, OverrideVerdict::Override, Some(vec![NUM_ACTIONS])), "invalid_action"),
        (directive(&id, OverrideVerdict::Override, Some(vec![foreign])), "foreign_slot"),
        (directive(&id, OverrideVerdict::Modify, Some(vec![rescue])), "modify_changes_types"),
        (directive(&id, OverrideVerdict::Override, Some(vec![medic; 3])), "insufficient_units"),
    ];
    for (d, why) in cases {
        assert_eq!(eng.apply_override(d).unwrap_err().reason, why);
    }
    assert_eq!(eng.decision(&id).unwrap().status, DecisionStatus::Pending);
    assert_eq!(eng.apply_override(directive(&id, OverrideVerdict::Modify, Some(vec![medic]))), Ok(DecisionStatus::Modified));
}

#[test]
fn transcript_replay_reproduces_the_run() {
    let (mut eng, id) = interactive_engine();
    let slot = eng.decision(&id).unwrap().slot;
    let medic = AllocAction::Dispatch { rtype: 0, slot }.encode();
    let _ = eng.apply_override(directive(&id, OverrideVerdict::Override, None));
    eng.apply_override(directive(&id, OverrideVerdict::Modify, Some(vec![medic]))).unwrap();
    eng.run_to_end().unwrap();
    let live = eng.finish().unwrap();
    assert_eq!(live.transcript.len(), 2);
    let replay = run(single_fire(), EngineConfig::default(), Policy::Baseline, Mode::Interactive, &live.transcript).unwrap();
    assert_eq!(live.log_bytes(), replay.log_bytes());
    assert_eq!(live.kgraph_bytes(), replay.kgraph_bytes());
    assert_eq!(live.transcript, replay.transcript);
}

#[test]
fn record_round_trips_through_a_directory() {
    let rec = run(single_fire(), EngineConfig::default(), Policy::Baseline, Mode::Batch, &[]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    rec.write_dir(dir.path()).unwrap();
    let back = RunRecord::read_dir(dir.path()).unwrap();
    assert_eq!(back.log, rec.log);
    assert_eq!(back.kgraph_bytes(), rec.kgraph_bytes());
    assert_eq!(back.bus, rec.bus);
}

#[test]
fn rejects_unknown_edge_node() {
    let mut p = single_fire();
    p.edge_nodes.push("edge-9".into());
    assert!(matches!(
        Engine::new(p, EngineConfig::default(), Policy::Baseline, Mode::Batch),
        Err(EngineError::InvalidPack(_))
    ));
}

#[test]
fn link_failure_is_logged_and_recovered() {
    let mut p = single_fire();
    p.failures.push(crate::scenario::FailureSpec {
        target: FailureTargetSpec::Link { a: "central".into(), b: "edge-1".into() },
        at_ms: 5_000,
        duration_ms: 60_000,
    });
    let rec = run(p, EngineConfig::default(), Policy::Baseline, Mode::Batch, &[]).unwrap();
    assert_eq!(rec.log[0].event.kind(), "FailureInject");
    let LogEvent::ScenarioEnd { net } = &rec.log.last().unwrap().event else { panic!() };
    assert_eq!(net.recovery_events.len(), 1);
    // the edge reroutes through its neighbour, so readings still arrive
    assert!(rec.log.iter().any(|e| e.event.kind() == "Alert"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn perceive_ignores_input_order(
        rs in prop::collection::vec((0usize..3, 0u64..200, 0.0f64..10.0), 0..20),
        t in 0u64..250,
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        let readings: Vec<DeliveredReading> = rs
            .iter()
            .map(|(i, s, sev)| DeliveredReading { incident_id: format!("i{i}"), time: SimTime::from_secs(*s), severity: *sev })
            .collect();
        let mut shuffled = readings.clone();
        shuffled.shuffle(&mut crate::rng::seeded(seed));
        let w = SimTime::from_secs(60);
        prop_assert_eq!(perceive(1, &readings, SimTime::from_secs(t), w), perceive(1, &shuffled, SimTime::from_secs(t), w));
    }

    #[test]
    fn coordinate_never_overcommits(
        claims in prop::collection::vec((0.0f64..10.0, 0u64..100, prop::array::uniform4(0u32..4)), 0..8),
        avail in prop::array::uniform4(0u32..6),
    ) {
        let cs: Vec<Claim> = claims
            .iter()
            .enumerate()
            .map(|(i, (s, o, r))| Claim { incident_id: format!("c{i}"), severity: *s, onset: SimTime::from_secs(*o), slot: i, requested: *r })
            .collect();
        let g = coordinate(&cs, avail);
        for r in 0..NUM_TYPES {
            prop_assert!(g.iter().map(|x| x[r]).sum::<u32>() <= avail[r]);
            for (c, x) in cs.iter().zip(&g) {
                prop_assert!(x[r] <= c.requested[r]);
            }
        }
    }

    #[test]
    fn generated_runs_keep_log_invariants(seed in 0u64..1000) {
        let cfg = GeneratorConfig { event_count: 3, duration_s: 2 * 3600, event_duration_min_s: 1800,
            event_duration_max_s: 3600, resources: [2; 4], ..GeneratorConfig::default() };
        let pack = generate_pack(&cfg, seed).unwrap();
        let total = pack.resources;
        let rec = run(pack, EngineConfig::default(), Policy::Baseline, Mode::Batch, &[]).unwrap();
        prop_assert!(rec.log.windows(2).all(|w| w[0].time <= w[1].time));
        prop_assert_eq!(rec.log.last().unwrap().event.kind(), "ScenarioEnd");
        // units out never exceed the pool
        let mut out = [0i64; NUM_TYPES];
        for e in &rec.log {
            match &e.event {
                LogEvent::DecisionResolved { units, .. } => (0..NUM_TYPES).for_each(|r| out[r] += units[r] as i64),
                LogEvent::IncidentResolved { released, .. } => (0..NUM_TYPES).for_each(|r| out[r] -= released[r] as i64),
                _ => {}
            }
            for r in 0..NUM_TYPES {
                prop_assert!(out[r] >= 0 && out[r] <= total[r] as i64);
            }
        }
    }
}
