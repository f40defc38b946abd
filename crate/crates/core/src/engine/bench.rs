//! Agent training, the generated benchmark suite and the concurrency sweep.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{run, EngineConfig, EngineError, Mode, Policy};
use crate::alloc::{AllocConfig, WorldSpec};
use crate::assess::{self, AssessConfig, AssessModel, AssessTrainReport};
use crate::metrics;
use crate::ppo::{self, AllocEnv, PpoAgent, PpoConfig};
use crate::predict::{self, PredNet, PredictConfig, PredictTrainReport};
use crate::scenario::{generate_pack, GeneratorConfig, ScenarioPack};

/// Models driving the agentic pipeline.
#[derive(Debug, Clone)]
pub struct AgentBundle {
    pub assess: AssessModel,
    pub ppo: PpoAgent,
    pub predict: Option<PredNet>,
}

impl AgentBundle {
    /// Writes `assess.json`, `ppo.json` and, if present, `predict.json`.
    pub fn save(&self, dir: &Path) -> Result<(), EngineError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("assess.json"), self.assess.to_checkpoint())?;
        fs::write(dir.join("ppo.json"), self.ppo.to_checkpoint())?;
        if let Some(p) = &self.predict {
            fs::write(dir.join("predict.json"), p.to_checkpoint())?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, EngineError> {
        let rec = |e: String| EngineError::Record(e);
        let assess = AssessModel::from_checkpoint(&fs::read(dir.join("assess.json"))?).map_err(|e| rec(e.to_string()))?;
        let ppo = PpoAgent::from_checkpoint(&fs::read(dir.join("ppo.json"))?).map_err(|e| rec(e.to_string()))?;
        let p = dir.join("predict.json");
        let predict = if p.exists() {
            Some(PredNet::from_checkpoint(&fs::read(p)?).map_err(|e| rec(e.to_string()))?)
        } else {
            None
        };
        Ok(AgentBundle { assess, ppo, predict })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSpec {
    pub assess: AssessConfig,
    pub ppo: PpoConfig,
    pub ppo_world: WorldSpec,
    pub alloc: AllocConfig,
    pub predict: PredictConfig,
    pub train_predictor: bool,
}

impl Default for TrainSpec {
    fn default() -> Self {
        TrainSpec {
            assess: AssessConfig::default(),
            ppo: PpoConfig { max_episodes: 3_000, ..PpoConfig::default() },
            ppo_world: WorldSpec::default(),
            alloc: AllocConfig::default(),
            predict: PredictConfig { max_epochs: 60, ..PredictConfig::default() },
            train_predictor: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub assess: AssessTrainReport,
    pub ppo_episodes: usize,
    pub ppo_final_mean_reward: Option<f64>,
    pub ppo_stopped_early: bool,
    pub predict: Option<PredictTrainReport>,
}

/// Trains all three agents from one pack: the classifier on its tweets, the
/// allocator on random worlds, and the predictor on its severity paths.
pub fn train_agents(pack: &ScenarioPack, spec: &TrainSpec, seed: u64) -> Result<(AgentBundle, TrainReport), EngineError> {
    let err = |e: String| EngineError::Training(e);
    let (assess_model, assess_report) =
        assess::train(&pack.tweets, &spec.assess, crate::rng::derive_seed(seed, 1)).map_err(|e| err(e.to_string()))?;
    let mut env = AllocEnv::random(spec.ppo_world.clone(), spec.alloc.clone());
    let outcome = ppo::train(&mut env, &spec.ppo, crate::rng::derive_seed(seed, 2)).map_err(|e| err(e.to_string()))?;
    let (predict_net, predict_report) = if spec.train_predictor {
        let data = predict::dataset_from_pack(pack, spec.predict.horizon);
        let (net, rep) =
            predict::train(&data, &spec.predict, crate::rng::derive_seed(seed, 3)).map_err(|e| err(e.to_string()))?;
        (Some(net), Some(rep))
    } else {
        (None, None)
    };
    let report = TrainReport {
        assess: assess_report,
        ppo_episodes: outcome.episodes,
        ppo_final_mean_reward: outcome.curve.last().map(|p| p.mean_reward),
        ppo_stopped_early: outcome.stopped_early,
        predict: predict_report,
    };
    Ok((AgentBundle { assess: assess_model, ppo: outcome.agent, predict: predict_net }, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkScenario {
    pub name: String,
    pub pack: ScenarioPack,
}

/// The 20 generated benchmark scenarios (`bench-01` .. `bench-20`).
pub fn benchmark_suite() -> Result<Vec<BenchmarkScenario>, EngineError> {
    (1..=20u64)
        .map(|i| {
            let name = format!("bench-{i:02}");
            let cfg = GeneratorConfig { pack_id: name.clone(), link_failures: 1, ..GeneratorConfig::default() };
            let pack = generate_pack(&cfg, 1000 + i).map_err(|e| EngineError::InvalidPack(e.to_string()))?;
            Ok(BenchmarkScenario { name, pack })
        })
        .collect()
}

/// Pack used to train agents for the benchmark; disjoint from the suite's seeds.
pub fn training_pack(seed: u64) -> Result<ScenarioPack, EngineError> {
    let cfg = GeneratorConfig { pack_id: "train".into(), event_count: 60, ..GeneratorConfig::default() };
    generate_pack(&cfg, seed).map_err(|e| EngineError::InvalidPack(e.to_string()))
}

pub const SWEEP_LADDER: [usize; 7] = [1, 2, 4, 8, 16, 32, 64];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub n: usize,
    pub p95_latency_s: f64,
    pub decisions: usize,
}

/// Pack with `n` incidents that all start at t = 0. Packs drawn with the
/// same seed are prefixes of each other, so a larger `n` only adds load.
pub fn sweep_pack(n: usize, seed: u64) -> Result<ScenarioPack, EngineError> {
    let cfg = GeneratorConfig {
        pack_id: format!("sweep-{n}"),
        event_count: n,
        duration_s: 600,
        simultaneous_onset: true,
        false_reading_rate: 0.0,
        text_noise: 0.0,
        resources: [1_000; 4],
        tweets_per_event: 1,
        none_tweets: 0,
        ..GeneratorConfig::default()
    };
    generate_pack(&cfg, seed).map_err(|e| EngineError::InvalidPack(e.to_string()))
}

/// Runs the concurrency ladder and reports p95 decision latency per rung.
pub fn sweep(policy: &Policy, cfg: &EngineConfig, ladder: &[usize], seed: u64) -> Result<Vec<SweepPoint>, EngineError> {
    ladder
        .iter()
        .map(|&n| {
            let pack = sweep_pack(n, seed)?;
            let rec = run(pack, cfg.clone(), policy.clone(), Mode::Batch, &[])?;
            let lat = metrics::decision_latencies_s(&rec.log);
            Ok(SweepPoint { n, p95_latency_s: metrics::p95(&lat).unwrap_or(0.0), decisions: lat.len() })
        })
        .collect()
}
