//! Run configuration, loaded from TOML.
//!
//! ```toml
//! seed = 7
//! mode = "batch"            # or "interactive"
//! policy = "agentic"        # or "baseline"
//! output = "runs/demo"
//! topology = "net.toml"     # optional; default edge/central star
//!
//! [scenario.generate]       # or: scenario = { pack = "pack.jsonl" }
//! event_count = 10          #  or: scenario = { benchmark = "bench-03" }
//!
//! [agents]                  # or: [agents.train] with a TrainSpec
//! dir = "models"
//!
//! [engine]                  # EngineConfig overrides
//! override_window_ms = 10000
//!
//! [sweep]                   # optional concurrency ladder for the report
//! ladder = [1, 2, 4, 8, 16]
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mcs_core::engine::{self, AgentBundle, EngineConfig, Mode, Policy, PolicyKind, TrainSpec};
use mcs_core::metrics::MetricsConfig;
use mcs_core::netsim::Topology;
use mcs_core::rng;
use mcs_core::scenario::{generate_pack, GeneratorConfig, ScenarioPack};

use crate::GatewayError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum ScenarioSource {
    /// A scenario pack file (JSON lines).
    Pack(PathBuf),
    /// Generate a pack from this spec using the run seed.
    Generate(GeneratorConfig),
    /// One of the generated benchmark packs, `bench-01` .. `bench-20`.
    Benchmark(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum AgentSource {
    /// A directory written by `mcs train`.
    Dir(PathBuf),
    /// Train on a fresh training pack derived from the run seed.
    Train(TrainSpec),
}

impl Default for AgentSource {
    fn default() -> Self {
        AgentSource::Train(TrainSpec::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub ladder: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeConfig {
    pub addr: String,
    /// Simulated seconds per wall-clock second; 0 runs unpaced.
    pub speedup: f64,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig { addr: "127.0.0.1:7878".into(), speedup: 1.0 }
    }
}

fn batch() -> Mode {
    Mode::Batch
}

fn agentic() -> PolicyKind {
    PolicyKind::Agentic
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "batch")]
    pub mode: Mode,
    #[serde(default = "agentic")]
    pub policy: PolicyKind,
    pub scenario: ScenarioSource,
    #[serde(default)]
    pub agents: AgentSource,
    #[serde(default)]
    pub topology: Option<PathBuf>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub engine: EngineConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub serve: ServeConfig,
}

impl RunConfig {
    /// Minimal config around a scenario source; everything else defaulted.
    pub fn new(seed: u64, scenario: ScenarioSource) -> Self {
        RunConfig {
            seed,
            mode: Mode::Batch,
            policy: PolicyKind::Agentic,
            scenario,
            agents: AgentSource::default(),
            topology: None,
            output: None,
            engine: EngineConfig::default(),
            metrics: MetricsConfig::default(),
            sweep: None,
            serve: ServeConfig::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, GatewayError> {
        toml::from_str(text).map_err(|e| GatewayError::Config(e.to_string()))
    }

    /// Reads, resolves relative paths against the file's directory and
    /// validates.
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = fs::read_to_string(path).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let ScenarioSource::Pack(p) = &mut self.scenario {
            fix(p);
        }
        if let AgentSource::Dir(p) = &mut self.agents {
            fix(p);
        }
        if let Some(p) = &mut self.topology {
            fix(p);
        }
        if let Some(p) = &mut self.output {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let missing = |what: &str, p: &Path| GatewayError::Config(format!("{what} {} does not exist", p.display()));
        if let ScenarioSource::Pack(p) = &self.scenario {
            if !p.is_file() {
                return Err(missing("scenario pack", p));
            }
        }
        if let ScenarioSource::Benchmark(name) = &self.scenario {
            let known = (1..=20).any(|i| *name == format!("bench-{i:02}"));
            if !known {
                return Err(GatewayError::Config(format!("unknown benchmark `{name}` (bench-01 .. bench-20)")));
            }
        }
        if let ScenarioSource::Generate(g) = &self.scenario {
            g.validate().map_err(|e| GatewayError::Config(e.to_string()))?;
        }
        if let (PolicyKind::Agentic, AgentSource::Dir(p)) = (self.policy, &self.agents) {
            if !p.join("assess.json").is_file() || !p.join("ppo.json").is_file() {
                return Err(missing("agent directory (assess.json, ppo.json)", p));
            }
        }
        if let Some(p) = &self.topology {
            if !p.is_file() {
                return Err(missing("topology file", p));
            }
        }
        if let Some(s) = &self.sweep {
            if s.ladder.is_empty() || s.ladder.contains(&0) {
                return Err(GatewayError::Config("sweep ladder must be nonempty and positive".into()));
            }
        }
        if !(self.serve.speedup.is_finite() && self.serve.speedup >= 0.0) {
            return Err(GatewayError::Config("serve.speedup must be finite and >= 0".into()));
        }
        self.engine.validate().map_err(|e| GatewayError::Config(e.to_string()))
    }

    pub fn load_pack(&self) -> Result<ScenarioPack, GatewayError> {
        match &self.scenario {
            ScenarioSource::Pack(p) => Ok(read_pack(p)?),
            ScenarioSource::Generate(g) => Ok(generate_pack(g, self.seed)?),
            ScenarioSource::Benchmark(name) => engine::benchmark_suite()?
                .into_iter()
                .find(|b| b.name == *name)
                .map(|b| b.pack)
                .ok_or_else(|| GatewayError::Config(format!("unknown benchmark `{name}`"))),
        }
    }

    /// Engine settings with the topology file, if any, inlined.
    pub fn engine_config(&self) -> Result<EngineConfig, GatewayError> {
        let mut ecfg = self.engine.clone();
        if let Some(p) = &self.topology {
            ecfg.topology = Some(read_topology(p)?);
        }
        Ok(ecfg)
    }

    /// Loads or trains the agents; `None` for the baseline.
    pub fn agents(&self) -> Result<Option<AgentBundle>, GatewayError> {
        if self.policy == PolicyKind::Baseline {
            return Ok(None);
        }
        match &self.agents {
            AgentSource::Dir(p) => Ok(Some(AgentBundle::load(p)?)),
            AgentSource::Train(spec) => {
                let pack = engine::training_pack(rng::derive_seed(self.seed, 0x7261_696e))?;
                let (bundle, _) = engine::train_agents(&pack, spec, self.seed)?;
                Ok(Some(bundle))
            }
        }
    }
}

pub fn policy_from(agents: Option<AgentBundle>) -> Policy {
    match agents {
        Some(b) => Policy::Agentic(Box::new(b)),
        None => Policy::Baseline,
    }
}

pub fn read_pack(path: &Path) -> Result<ScenarioPack, GatewayError> {
    let f = fs::File::open(path).map_err(|e| GatewayError::Input(format!("{}: {e}", path.display())))?;
    Ok(ScenarioPack::read_jsonl(BufReader::new(f))?)
}

/// Topology from a `.json` or `.toml` file.
pub fn read_topology(path: &Path) -> Result<Topology, GatewayError> {
    let text = fs::read_to_string(path)?;
    let bad = |e: String| GatewayError::Config(format!("{}: {e}", path.display()));
    let topo: Topology = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?
    } else {
        toml::from_str(&text).map_err(|e| bad(e.to_string()))?
    };
    topo.validate().map_err(|e| bad(e.to_string()))?;
    Ok(topo)
}
