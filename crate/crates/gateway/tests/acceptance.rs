//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::thread;
use std::time::{Duration, Instant};

use mcs_core::engine::{
    self, AgentBundle, DecisionStatus, Engine, EngineConfig, LogEvent, Mode, OverrideDirective, OverrideVerdict,
    Policy, PolicyKind, TrainSpec, SWEEP_LADDER,
};
use mcs_core::metrics::{self, GroundTruth, MetricsConfig, MetricsReport};
use mcs_core::rng::derive_seed;
use mcs_core::scenario::{generate_pack, GeneratorConfig};
use mcs_gateway::api::{Client, Response};
use mcs_gateway::commands;
use mcs_gateway::config::{AgentSource, RunConfig, ScenarioSource};
use mcs_gateway::server::{Pace, Server};

use support::Check;

const SEED: u64 = 20_240_601;

fn both(name: &str, a: Check, b: Check) -> Check {
    Check { ok: a.ok && b.ok, detail: format!("{name}: {}; {}", a.detail, b.detail) }
}

fn timed(limit: Duration, f: impl FnOnce() -> Check) -> Check {
    let t = Instant::now();
    let c = f();
    let took = t.elapsed();
    Check { ok: c.ok && took <= limit, detail: format!("{} [{:.1}s, limit {}s]", c.detail, took.as_secs_f64(), limit.as_secs()) }
}

fn err(e: impl std::fmt::Display) -> Check {
    Check { ok: false, detail: format!("error: {e}") }
}

fn train() -> (AgentBundle, Duration) {
    let t = Instant::now();
    let pack = engine::training_pack(derive_seed(SEED, 0x7261_696e)).expect("training pack");
    let (bundle, _) = engine::train_agents(&pack, &TrainSpec::default(), SEED).expect("training");
    (bundle, t.elapsed())
}

fn same_files(a: &Path, b: &Path, names: &[&str]) -> Result<Vec<String>, std::io::Error> {
    let mut differing = Vec::new();
    for n in names {
        if fs::read(a.join(n))? != fs::read(b.join(n))? {
            differing.push(n.to_string());
        }
    }
    Ok(differing)
}

/// Two batch runs of one configuration, then `replay` of the first.
fn batch_determinism(agents: &Path, work: &Path) -> Result<Check, mcs_gateway::GatewayError> {
    let mut cfg = RunConfig::new(SEED, ScenarioSource::Benchmark("bench-03".into()));
    cfg.agents = AgentSource::Dir(agents.to_path_buf());
    let (a, b) = (work.join("run-a"), work.join("run-b"));
    commands::run(&cfg, &a, &[])?;
    commands::run(&cfg, &b, &[])?;
    let differing = same_files(&a, &b, &[commands::REPORT_JSON, "events.jsonl", "kgraph.jsonl"])?;
    let (_, outcome) = commands::replay(&a, None)?;
    Ok(Check {
        ok: differing.is_empty() && outcome.all_identical(),
        detail: format!("run x2 differing files {differing:?}, replay {outcome:?}"),
    })
}

/// An operator session over the API: approve some decisions, override
/// others, then replay the recorded transcript.
fn interactive_replay(bundle: &AgentBundle, work: &Path) -> Result<Check, mcs_gateway::GatewayError> {
    let gen = GeneratorConfig { pack_id: "session".into(), event_count: 4, duration_s: 1800, ..GeneratorConfig::default() };
    let pack = generate_pack(&gen, derive_seed(SEED, 8))?;
    let policy = Policy::Agentic(Box::new(bundle.clone()));
    let eng = Engine::new(pack.clone(), EngineConfig::default(), policy, Mode::Interactive)?;
    let mut server = Server::start(eng, "127.0.0.1:0", Pace::from_speedup(300.0))?;
    let mut ctl = Client::connect(server.local_addr())?;
    let mut events = Client::connect(server.local_addr())?.stream(0)?;
    let mut accepted = 0;
    let mut rejected = Vec::new();
    let mut k = 0;
    while let Some(ev) = events.next_event()? {
        if let LogEvent::DecisionIssued { decision_id, status: DecisionStatus::Pending, .. } = &ev.event {
            let verdict = if k % 3 == 2 { OverrideVerdict::Override } else { OverrideVerdict::Approve };
            k += 1;
            let d = OverrideDirective {
                decision_id: decision_id.clone(),
                verdict,
                replacement: None,
                author: "op:acceptance".into(),
                received_wall_ms: None,
            };
            match ctl.override_decision(d)? {
                Response::Verdict { .. } => accepted += 1,
                Response::Rejected { reason, .. } => rejected.push(reason),
                _ => {}
            }
        }
    }
    let record = server.wait()?;
    server.shutdown();
    let directives = record.transcript.len();
    let mut cfg = RunConfig::new(SEED, ScenarioSource::Benchmark("unused".into()));
    cfg.mode = Mode::Interactive;
    let arts = commands::assemble(&cfg, pack, Some(bundle.clone()), record)?;
    let dir = work.join("session");
    arts.write(&dir)?;
    let (_, outcome) = commands::replay(&dir, None)?;
    Ok(Check {
        ok: accepted > 0 && directives == accepted + rejected.len() && outcome.kgraph_identical && outcome.all_identical(),
        detail: format!("{directives} directives ({accepted} accepted, rejected {rejected:?}), replay {outcome:?}"),
    })
}

fn criterion_8(bundle: &AgentBundle) -> Check {
    let work = match tempfile::tempdir() {
        Ok(w) => w,
        Err(e) => return err(e),
    };
    let agents = work.path().join("agents");
    if let Err(e) = bundle.save(&agents) {
        return err(e);
    }
    let a = batch_determinism(&agents, work.path()).unwrap_or_else(err);
    let b = interactive_replay(bundle, work.path()).unwrap_or_else(err);
    both("determinism", a, b)
}

fn benchmark_reports(bundle: &AgentBundle) -> Result<(MetricsReport, MetricsReport), mcs_gateway::GatewayError> {
    let cfg = MetricsConfig::default();
    let mut agentic = Vec::new();
    let mut baseline = Vec::new();
    for sc in engine::benchmark_suite()? {
        let truth = GroundTruth::from_pack(&sc.pack);
        let policy = Policy::Agentic(Box::new(bundle.clone()));
        let a = engine::run(sc.pack.clone(), EngineConfig::default(), policy, Mode::Batch, &[])?;
        let b = engine::run(sc.pack, EngineConfig::default(), Policy::Baseline, Mode::Batch, &[])?;
        agentic.push(metrics::compute(&sc.name, PolicyKind::Agentic, &a.log, &truth, &cfg, None));
        baseline.push(metrics::compute(&sc.name, PolicyKind::Baseline, &b.log, &truth, &cfg, None));
    }
    let agg = |r: &[MetricsReport]| metrics::aggregate(r).ok_or_else(|| mcs_gateway::GatewayError::Input("empty suite".into()));
    Ok((agg(&agentic)?, agg(&baseline)?))
}

fn criterion_9(bundle: &AgentBundle, training: Duration) -> Check {
    let t = Instant::now();
    let (a, b) = match benchmark_reports(bundle) {
        Ok(r) => r,
        Err(e) => return err(e),
    };
    let took = training + t.elapsed();
    let lower = |x: Option<f64>, y: Option<f64>| matches!((x, y), (Some(x), Some(y)) if x < y);
    let rt = lower(a.response_time_mean, b.response_time_mean);
    let ag = lower(a.alert_generation_mean, b.alert_generation_mean);
    let rdi = lower(b.resource_distribution_index, a.resource_distribution_index);
    let fmt = |x: Option<f64>| x.map_or("null".into(), |v| format!("{v:.3}"));
    Check {
        ok: rt && ag && rdi && took <= Duration::from_secs(600),
        detail: format!(
            "response {} vs {} min, alert {} vs {} s, rdi {} vs {} (agentic vs baseline) [{:.1}s incl. training, limit 600s]",
            fmt(a.response_time_mean),
            fmt(b.response_time_mean),
            fmt(a.alert_generation_mean),
            fmt(b.alert_generation_mean),
            fmt(a.resource_distribution_index),
            fmt(b.resource_distribution_index),
            took.as_secs_f64()
        ),
    }
}

fn criterion_11(bundle: &AgentBundle) -> Check {
    let policy = Policy::Agentic(Box::new(bundle.clone()));
    let threshold = MetricsConfig::default().latency_threshold_s;
    let mut runs = Vec::new();
    for _ in 0..3 {
        match engine::sweep(&policy, &EngineConfig::default(), &SWEEP_LADDER, SEED) {
            Ok(points) => runs.push(points),
            Err(e) => return err(e),
        }
    }
    let monotone = runs.iter().all(|pts| pts.windows(2).all(|w| w[1].p95_latency_s >= w[0].p95_latency_s));
    let maxes: Vec<Option<usize>> = runs.iter().map(|pts| metrics::concurrent_ops(pts, threshold)).collect();
    let stable = maxes.windows(2).all(|w| w[0] == w[1]);
    let p95: Vec<String> = runs[0].iter().map(|p| format!("{}:{:.2}", p.n, p.p95_latency_s)).collect();
    Check {
        ok: monotone && stable && maxes[0].is_some(),
        detail: format!("p95 by N [{}] s, concurrent_operations_max over 3 sweeps {maxes:?}", p95.join(" ")),
    }
}

fn main() -> ExitCode {
    let oracle = |f: fn() -> Check| thread::spawn(f);
    let c1 = oracle(support::check_gradients);
    let c2 = oracle(support::check_gae);
    let c3 = oracle(|| timed(Duration::from_secs(900), || both("ppo", support::check_bandit(), support::check_tiny_mdp())));
    let c4 = oracle(|| both("predictor", support::check_hetero_coverage(), support::check_constant_gaussian()));
    let c5 = oracle(support::check_mice);
    let c6 = oracle(support::check_assignment);
    let c7 = oracle(support::check_broker);
    let c10 = oracle(|| both("network", support::check_routing(), support::check_failure_fixture()));

    let (bundle, training) = train();
    let c9 = criterion_9(&bundle, training);
    let c8 = criterion_8(&bundle);
    let c11 = criterion_11(&bundle);

    let join = |h: thread::JoinHandle<Check>| h.join().unwrap_or_else(|_| Check { ok: false, detail: "panicked".into() });
    let results = [
        (1, "finite-difference gradients", join(c1)),
        (2, "GAE oracle", join(c2)),
        (3, "PPO convergence", join(c3)),
        (4, "predictor calibration", join(c4)),
        (5, "MICE fixture", join(c5)),
        (6, "assignment vs brute force", join(c6)),
        (7, "broker under drops", join(c7)),
        (8, "determinism and replay", c8),
        (9, "benchmark direction", c9),
        (10, "routing and failure recovery", join(c10)),
        (11, "concurrency sweep", c11),
    ];
    let mut failed = 0;
    for (n, name, c) in &results {
        println!("criterion {n:>2} {} {name}: {}", if c.ok { "PASS" } else { "FAIL" }, c.detail);
        failed += usize::from(!c.ok);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
