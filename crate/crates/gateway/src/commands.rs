//! Batch commands behind the CLI: ingest, generate, train, run, replay,
//! report and sweep.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mcs_core::engine::{
    self, read_jsonl, write_jsonl, AgentBundle, PolicyKind, RunRecord, SweepPoint, TrainReport, TrainSpec,
    TranscriptEntry,
};
use mcs_core::metrics::{self, GroundTruth, MetricsReport};
use mcs_core::scenario::{
    generate_pack, ingest_events, make_splits, mean_impute, mice_impute, Category, ColumnMapping, DisasterEvent,
    EventClass, FeatureVector, GeneratorConfig, MiceConfig, RowDiagnostic, ScenarioPack, SplitSpec, TweetRecord,
};

use crate::config::{policy_from, read_pack, AgentSource, RunConfig, ScenarioSource};
use crate::GatewayError;

pub const CONFIG_FILE: &str = "config.toml";
pub const PACK_FILE: &str = "pack.jsonl";
pub const AGENTS_DIR: &str = "agents";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";
pub const SWEEP_FILE: &str = "sweep.json";

/// Everything a run produces, in memory.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    /// The config as recorded in the run directory: pack, agents and
    /// topology all point inside the directory or are inlined.
    pub config: RunConfig,
    pub pack: ScenarioPack,
    pub agents: Option<AgentBundle>,
    pub record: RunRecord,
    pub sweep: Option<Vec<SweepPoint>>,
    pub report: MetricsReport,
}

impl RunArtifacts {
    pub fn report_json(&self) -> String {
        self.report.to_json()
    }

    /// Layout: the record files (`meta.json`, `events.jsonl`, `kgraph.jsonl`,
    /// `transcript.jsonl`, `feedback.jsonl`, `bus/`), plus `config.toml`,
    /// `pack.jsonl`, `agents/`, `report.json`, `report.txt` and, with a
    /// sweep, `sweep.json`.
    pub fn write(&self, dir: &Path) -> Result<(), GatewayError> {
        self.record.write_dir(dir)?;
        let cfg = toml::to_string(&self.config).map_err(|e| GatewayError::Config(e.to_string()))?;
        fs::write(dir.join(CONFIG_FILE), cfg)?;
        fs::write(dir.join(PACK_FILE), self.pack.to_jsonl_bytes())?;
        if let Some(a) = &self.agents {
            a.save(&dir.join(AGENTS_DIR))?;
        }
        if let Some(s) = &self.sweep {
            fs::write(dir.join(SWEEP_FILE), serde_json::to_vec_pretty(s)?)?;
        }
        fs::write(dir.join(REPORT_JSON), self.report_json())?;
        fs::write(dir.join(REPORT_TXT), self.report.table())?;
        Ok(())
    }
}

/// Executes a run described by `cfg`, applying `transcript` directives.
pub fn execute(cfg: &RunConfig, transcript: &[TranscriptEntry]) -> Result<RunArtifacts, GatewayError> {
    let pack = cfg.load_pack()?;
    let agents = cfg.agents()?;
    execute_with(cfg, pack, agents, transcript)
}

/// Executes with an already loaded pack and agents.
pub fn execute_with(
    cfg: &RunConfig,
    pack: ScenarioPack,
    agents: Option<AgentBundle>,
    transcript: &[TranscriptEntry],
) -> Result<RunArtifacts, GatewayError> {
    let ecfg = cfg.engine_config()?;
    let policy = policy_from(agents.clone());
    let record = engine::run(pack.clone(), ecfg, policy, cfg.mode, transcript)?;
    assemble(cfg, pack, agents, record)
}

/// Scores a finished record (running the sweep if configured) and records
/// the config in its self-contained form.
pub fn assemble(
    cfg: &RunConfig,
    pack: ScenarioPack,
    agents: Option<AgentBundle>,
    record: RunRecord,
) -> Result<RunArtifacts, GatewayError> {
    let ecfg = cfg.engine_config()?;
    let sweep = match &cfg.sweep {
        Some(s) => Some(engine::sweep(&policy_from(agents.clone()), &ecfg, &s.ladder, cfg.seed)?),
        None => None,
    };
    let report = compute_report(cfg, &pack, &record, sweep.as_deref());
    let mut recorded = cfg.clone();
    recorded.mode = record.meta.mode;
    recorded.scenario = ScenarioSource::Pack(PACK_FILE.into());
    if agents.is_some() {
        recorded.agents = AgentSource::Dir(AGENTS_DIR.into());
    }
    recorded.topology = None;
    recorded.engine = ecfg;
    recorded.output = None;
    Ok(RunArtifacts { config: recorded, pack, agents, record, sweep, report })
}

fn compute_report(cfg: &RunConfig, pack: &ScenarioPack, record: &RunRecord, sweep: Option<&[SweepPoint]>) -> MetricsReport {
    metrics::compute(&pack.pack_id, record.meta.policy, &record.log, &GroundTruth::from_pack(pack), &cfg.metrics, sweep)
}

/// `run`: executes and writes the run directory.
pub fn run(cfg: &RunConfig, out: &Path, transcript: &[TranscriptEntry]) -> Result<RunArtifacts, GatewayError> {
    let arts = execute(cfg, transcript)?;
    arts.write(out)?;
    Ok(arts)
}

pub fn read_transcript(path: &Path) -> Result<Vec<TranscriptEntry>, GatewayError> {
    let f = fs::File::open(path).map_err(|e| GatewayError::Input(format!("{}: {e}", path.display())))?;
    Ok(read_jsonl(BufReader::new(f))?)
}

/// Loads the recorded config of a run directory with paths resolved into it.
pub fn recorded_config(run_dir: &Path) -> Result<RunConfig, GatewayError> {
    let text = fs::read_to_string(run_dir.join(CONFIG_FILE))
        .map_err(|e| GatewayError::Input(format!("{}: {e}", run_dir.join(CONFIG_FILE).display())))?;
    let mut cfg = RunConfig::parse(&text)?;
    cfg.resolve_paths(run_dir);
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReplayOutcome {
    pub report_identical: bool,
    pub events_identical: bool,
    pub kgraph_identical: bool,
}

impl ReplayOutcome {
    pub fn all_identical(&self) -> bool {
        self.report_identical && self.events_identical && self.kgraph_identical
    }
}

/// `replay`: re-executes a run directory from its pack, agents, config and
/// directive transcript and compares the artifacts byte for byte.
pub fn replay(run_dir: &Path, out: Option<&Path>) -> Result<(RunArtifacts, ReplayOutcome), GatewayError> {
    let cfg = recorded_config(run_dir)?;
    let transcript = read_transcript(&run_dir.join("transcript.jsonl"))?;
    let arts = execute(&cfg, &transcript)?;
    let same = |name: &str, bytes: &[u8]| -> Result<bool, GatewayError> { Ok(fs::read(run_dir.join(name))? == bytes) };
    let outcome = ReplayOutcome {
        report_identical: same(REPORT_JSON, arts.report_json().as_bytes())?,
        events_identical: same("events.jsonl", &arts.record.log_bytes())?,
        kgraph_identical: same("kgraph.jsonl", &arts.record.kgraph_bytes())?,
    };
    if let Some(o) = out {
        arts.write(o)?;
    }
    Ok((arts, outcome))
}

#[derive(Debug, Clone)]
pub struct LoadedReport {
    pub dir: PathBuf,
    pub report: MetricsReport,
    /// Whether recomputing from the event log gave the stored report.
    pub matches_stored: bool,
}

/// Recomputes the metrics of a run directory from its event log.
pub fn load_report(run_dir: &Path) -> Result<LoadedReport, GatewayError> {
    let cfg = recorded_config(run_dir)?;
    let record = RunRecord::read_dir(run_dir)?;
    let pack = read_pack(&run_dir.join(PACK_FILE))?;
    let sweep: Option<Vec<SweepPoint>> = match fs::read(run_dir.join(SWEEP_FILE)) {
        Ok(b) => Some(serde_json::from_slice(&b)?),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(e.into()),
    };
    let report = compute_report(&cfg, &pack, &record, sweep.as_deref());
    let stored = fs::read_to_string(run_dir.join(REPORT_JSON)).unwrap_or_default();
    Ok(LoadedReport { dir: run_dir.to_path_buf(), matches_stored: stored == report.to_json(), report })
}

/// `report`: one column per run, or, when both policies are present, the
/// per-policy means side by side.
pub fn render_reports(reports: &[LoadedReport]) -> String {
    let by = |k: PolicyKind| reports.iter().filter(|r| r.report.policy == k).map(|r| r.report.clone()).collect::<Vec<_>>();
    let (ag, bl) = (by(PolicyKind::Agentic), by(PolicyKind::Baseline));
    if let (Some(a), Some(b)) = (metrics::aggregate(&ag), metrics::aggregate(&bl)) {
        return metrics::render_comparison(&a, &b);
    }
    let names: Vec<String> =
        reports.iter().map(|r| r.dir.file_name().map_or_else(|| r.dir.display().to_string(), |n| n.to_string_lossy().into_owned())).collect();
    let cols: Vec<(&str, &MetricsReport)> = names.iter().map(String::as_str).zip(reports.iter().map(|r| &r.report)).collect();
    metrics::render_table(&cols)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub points: Vec<SweepPoint>,
    pub latency_threshold_s: f64,
    pub concurrent_operations_max: Option<usize>,
}

/// `sweep`: the concurrency ladder for the configured policy.
pub fn sweep(cfg: &RunConfig, ladder: &[usize]) -> Result<SweepOutcome, GatewayError> {
    let policy = policy_from(cfg.agents()?);
    let points = engine::sweep(&policy, &cfg.engine_config()?, ladder, cfg.seed)?;
    let threshold = cfg.metrics.latency_threshold_s;
    Ok(SweepOutcome { concurrent_operations_max: metrics::concurrent_ops(&points, threshold), latency_threshold_s: threshold, points })
}

/// `train`: fits all three agents and writes them with `train_report.json`.
pub fn train(pack: &ScenarioPack, spec: &TrainSpec, seed: u64, out: &Path) -> Result<TrainReport, GatewayError> {
    let (bundle, report) = engine::train_agents(pack, spec, seed)?;
    bundle.save(out)?;
    fs::write(out.join("train_report.json"), serde_json::to_vec_pretty(&report)?)?;
    Ok(report)
}

/// `generate`: a single pack.
pub fn generate(cfg: &GeneratorConfig, seed: u64, out: &Path) -> Result<ScenarioPack, GatewayError> {
    let pack = generate_pack(cfg, seed)?;
    write_file(out, &pack.to_jsonl_bytes())?;
    Ok(pack)
}

/// `generate --benchmark`: the 20 benchmark packs as `<name>.jsonl`.
pub fn generate_benchmark(out_dir: &Path) -> Result<Vec<String>, GatewayError> {
    fs::create_dir_all(out_dir)?;
    engine::benchmark_suite()?
        .into_iter()
        .map(|b| {
            fs::write(out_dir.join(format!("{}.jsonl", b.name)), b.pack.to_jsonl_bytes())?;
            Ok(b.name)
        })
        .collect()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), GatewayError> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(p)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct IngestSource {
    pub csv: PathBuf,
    pub mapping: ColumnMapping,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SourceDiagnostic {
    pub source: String,
    #[serde(flatten)]
    pub row: RowDiagnostic,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImputationSummary {
    pub source: String,
    /// `none`, `mice`, `mean` or `skipped`.
    pub method: String,
    pub cells: usize,
    pub iterations: usize,
    pub converged: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestSummary {
    pub events: usize,
    pub rejected: usize,
    pub imputation: Vec<ImputationSummary>,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub outside_splits: usize,
    pub tweets: usize,
    pub tweets_rejected: usize,
}

/// `ingest`: maps each CSV onto the unified event schema, imputes missing
/// features per source, splits by onset year and parses an optional tweet
/// CSV (`tweet_id,time,text,label`).
///
/// Writes `events.jsonl`, `train.jsonl`, `val.jsonl`, `test.jsonl`,
/// `rejected.jsonl`, `tweets.jsonl` and `summary.json` into `out`.
pub fn ingest(
    sources: &[IngestSource],
    tweets: Option<&Path>,
    splits: &SplitSpec,
    mice: &MiceConfig,
    out: &Path,
) -> Result<IngestSummary, GatewayError> {
    splits.validate().map_err(GatewayError::Config)?;
    let mut events = Vec::new();
    let mut rejected = Vec::new();
    let mut imputation = Vec::new();
    for src in sources {
        let name = src.csv.display().to_string();
        let f = fs::File::open(&src.csv).map_err(|e| GatewayError::Input(format!("{name}: {e}")))?;
        let got = ingest_events(f, &src.mapping)?;
        rejected.extend(got.rejected.into_iter().map(|row| SourceDiagnostic { source: name.clone(), row }));
        let mut evs = got.events;
        imputation.push(impute_features(&name, &mut evs, mice));
        events.extend(evs);
    }
    events.sort_by(|a, b| (a.onset_time, &a.event_id).cmp(&(b.onset_time, &b.event_id)));
    let split = make_splits(&events, splits);

    let (tweet_rows, tweet_rejects) = match tweets {
        Some(p) => read_tweets(p)?,
        None => (Vec::new(), Vec::new()),
    };
    let tweets_rejected = tweet_rejects.len();
    rejected.extend(tweet_rejects);

    fs::create_dir_all(out)?;
    let put = |name: &str, f: &dyn Fn(&mut dyn Write) -> Result<(), GatewayError>| -> Result<(), GatewayError> {
        let mut w = BufWriter::new(fs::File::create(out.join(name))?);
        f(&mut w)?;
        w.flush()?;
        Ok(())
    };
    put("events.jsonl", &|w| Ok(write_jsonl(&events, w)?))?;
    put("train.jsonl", &|w| Ok(write_jsonl(&split.train, w)?))?;
    put("val.jsonl", &|w| Ok(write_jsonl(&split.val, w)?))?;
    put("test.jsonl", &|w| Ok(write_jsonl(&split.test, w)?))?;
    put("rejected.jsonl", &|w| Ok(write_jsonl(&rejected, w)?))?;
    put("tweets.jsonl", &|w| Ok(write_jsonl(&tweet_rows, w)?))?;
    let summary = IngestSummary {
        events: events.len(),
        rejected: rejected.len() - tweets_rejected,
        imputation,
        train: split.train.len(),
        val: split.val.len(),
        test: split.test.len(),
        outside_splits: split.dropped,
        tweets: tweet_rows.len(),
        tweets_rejected,
    };
    fs::write(out.join("summary.json"), serde_json::to_vec_pretty(&summary)?)?;
    Ok(summary)
}

/// MICE when some feature column is fully observed, column means otherwise.
fn impute_features(source: &str, events: &mut [DisasterEvent], cfg: &MiceConfig) -> ImputationSummary {
    let rows: Vec<FeatureVector> = events.iter().map(|e| e.features.clone()).collect();
    let cells = rows.iter().map(|r| r.mask.iter().filter(|m| !**m).count()).sum();
    let mut s = ImputationSummary {
        source: source.into(),
        method: "none".into(),
        cells,
        iterations: 0,
        converged: true,
        note: None,
    };
    if cells == 0 {
        return s;
    }
    let filled = match mice_impute(&rows, cfg) {
        Ok(o) => {
            s.method = "mice".into();
            s.iterations = o.iterations;
            s.converged = o.converged;
            Ok(o.rows)
        }
        Err(e) => {
            s.note = Some(e.to_string());
            s.method = "mean".into();
            mean_impute(&rows)
        }
    };
    match filled {
        Ok(rows) => {
            for (e, r) in events.iter_mut().zip(rows) {
                e.features = r;
            }
        }
        Err(e) => {
            s.method = "skipped".into();
            s.converged = false;
            s.note = Some(e.to_string());
        }
    }
    s
}

#[derive(Deserialize)]
struct TweetRow {
    tweet_id: String,
    time: i64,
    text: String,
    label: String,
}

fn parse_label(raw: &str) -> Option<EventClass> {
    let t = raw.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("none") || t.eq_ignore_ascii_case("not_related") {
        return Some(EventClass::None);
    }
    EventClass::ALL
        .iter()
        .copied()
        .find(|c| format!("{c:?}").eq_ignore_ascii_case(t))
        .or_else(|| Category::parse_loose(t).map(EventClass::from))
}

fn read_tweets(path: &Path) -> Result<(Vec<TweetRecord>, Vec<SourceDiagnostic>), GatewayError> {
    let name = path.display().to_string();
    let f = fs::File::open(path).map_err(|e| GatewayError::Input(format!("{name}: {e}")))?;
    let mut rdr = csv::Reader::from_reader(f);
    let mut ok = Vec::new();
    let mut bad = Vec::new();
    for (i, row) in rdr.deserialize::<TweetRow>().enumerate() {
        let line = i + 2;
        let reject = |reason: String| SourceDiagnostic { source: name.clone(), row: RowDiagnostic { line, reason } };
        match row {
            Err(e) => bad.push(reject(e.to_string())),
            Ok(r) if r.text.trim().is_empty() => bad.push(reject("empty text".into())),
            Ok(r) => match parse_label(&r.label) {
                Some(label) => ok.push(TweetRecord { tweet_id: r.tweet_id, time: r.time, text: r.text, label }),
                None => bad.push(reject(format!("unknown label `{}`", r.label))),
            },
        }
    }
    Ok((ok, bad))
}

/// Reads a ColumnMapping from TOML.
pub fn read_mapping(path: &Path) -> Result<ColumnMapping, GatewayError> {
    let text = fs::read_to_string(path).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))
}

/// Per-category counts of a pack, used by `generate` summaries.
pub fn category_counts(pack: &ScenarioPack) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for e in &pack.events {
        *m.entry(e.category.to_string()).or_insert(0) += 1;
    }
    m
}
