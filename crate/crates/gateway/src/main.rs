use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use mcs_core::engine::{self, Engine, Mode, TrainSpec, SWEEP_LADDER};
use mcs_core::scenario::{GeneratorConfig, MiceConfig, SplitSpec};
use mcs_gateway::commands::{self, IngestSource};
use mcs_gateway::config::{policy_from, read_pack, RunConfig};
use mcs_gateway::server::{Pace, Server};
use mcs_gateway::GatewayError;

/// Multi-agent emergency-response simulator.
///
/// Exit status: 0 success, 1 runtime failure, 2 invalid usage, config or
/// input, 3 replay did not reproduce the recorded run. Failures print one
/// JSON object `{"error": code, "message": text}` on stderr.
#[derive(Parser)]
#[command(name = "mcs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Map disaster CSVs onto the event schema, impute, and split by year.
    Ingest {
        /// `events.csv=mapping.toml`; repeat for several sources.
        #[arg(long = "source", required = true, value_parser = parse_source)]
        sources: Vec<(PathBuf, PathBuf)>,
        /// Crisis tweets CSV with columns tweet_id,time,text,label.
        #[arg(long)]
        tweets: Option<PathBuf>,
        /// TOML SplitSpec; default 1953-2010 / 2011-2018 / 2019-2023.
        #[arg(long)]
        splits: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic scenario pack (or the 20 benchmark packs).
    Generate {
        /// TOML GeneratorConfig.
        #[arg(long, conflicts_with = "benchmark")]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write bench-01.jsonl .. bench-20.jsonl into --out.
        #[arg(long)]
        benchmark: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the assessment, allocation and prediction agents.
    Train {
        /// Pack to train on; default a generated training pack.
        #[arg(long)]
        pack: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// TOML TrainSpec.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Execute a run and write its record directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directive transcript (JSON lines) to apply.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Re-execute a run directory and verify it reproduces byte for byte.
    Replay {
        run_dir: PathBuf,
        /// Also write the replayed artifacts here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute and print metrics of one or more run directories.
    Report {
        #[arg(required = true)]
        run_dirs: Vec<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Run the concurrency ladder and report p95 decision latency per rung.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated incident counts.
        #[arg(long, value_delimiter = ',')]
        ladder: Option<Vec<usize>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run interactively with the operator API bound.
    Serve {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `serve.addr`.
        #[arg(long)]
        addr: Option<String>,
        /// Overrides `serve.speedup` (0 = unpaced).
        #[arg(long)]
        speedup: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Exit once the run ends instead of serving the final state.
        #[arg(long)]
        exit_on_end: bool,
    },
}

fn parse_source(raw: &str) -> Result<(PathBuf, PathBuf), String> {
    let (csv, mapping) = raw.split_once('=').ok_or("expected CSV=MAPPING")?;
    Ok((csv.into(), mapping.into()))
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, GatewayError> {
    let text = fs::read_to_string(path).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))
}

fn output_dir(cfg: &RunConfig, out: Option<PathBuf>) -> Result<PathBuf, GatewayError> {
    out.or_else(|| cfg.output.clone()).ok_or_else(|| GatewayError::Config("no output directory (config `output` or --out)".into()))
}

fn emit(v: serde_json::Value) {
    println!("{v}");
}

fn dispatch(cmd: Command) -> Result<(), GatewayError> {
    match cmd {
        Command::Ingest { sources, tweets, splits, out } => {
            let sources = sources
                .into_iter()
                .map(|(csv, m)| Ok(IngestSource { csv, mapping: commands::read_mapping(&m)? }))
                .collect::<Result<Vec<_>, GatewayError>>()?;
            let spec = match splits {
                Some(p) => read_toml(&p)?,
                None => SplitSpec::default(),
            };
            let summary = commands::ingest(&sources, tweets.as_deref(), &spec, &MiceConfig::default(), &out)?;
            emit(serde_json::to_value(summary)?);
        }
        Command::Generate { config, seed, benchmark, out } => {
            if benchmark {
                emit(json!({ "packs": commands::generate_benchmark(&out)? }));
            } else {
                let cfg: GeneratorConfig = match config {
                    Some(p) => read_toml(&p)?,
                    None => GeneratorConfig::default(),
                };
                let pack = commands::generate(&cfg, seed, &out)?;
                emit(json!({
                    "pack_id": pack.pack_id,
                    "events": pack.events.len(),
                    "readings": pack.sensor_streams.len(),
                    "categories": commands::category_counts(&pack),
                }));
            }
        }
        Command::Train { pack, seed, spec, out } => {
            let pack = match pack {
                Some(p) => read_pack(&p)?,
                None => engine::training_pack(seed)?,
            };
            let spec: TrainSpec = match spec {
                Some(p) => read_toml(&p)?,
                None => TrainSpec::default(),
            };
            let report = commands::train(&pack, &spec, seed, &out)?;
            emit(serde_json::to_value(report)?);
        }
        Command::Run { config, out, transcript } => {
            let cfg = RunConfig::load(&config)?;
            let out = output_dir(&cfg, out)?;
            let transcript = match transcript {
                Some(p) => commands::read_transcript(&p)?,
                None => Vec::new(),
            };
            let arts = commands::run(&cfg, &out, &transcript)?;
            print!("{}", arts.report.table());
            emit(json!({ "run_dir": out, "events": arts.record.log.len() }));
        }
        Command::Replay { run_dir, out } => {
            let (_, outcome) = commands::replay(&run_dir, out.as_deref())?;
            emit(serde_json::to_value(&outcome)?);
            if !outcome.all_identical() {
                return Err(GatewayError::ReplayMismatch(format!("{outcome:?}")));
            }
        }
        Command::Report { run_dirs, json } => {
            let reports = run_dirs.iter().map(|d| commands::load_report(d)).collect::<Result<Vec<_>, _>>()?;
            if json {
                let all: Vec<_> = reports.iter().map(|r| &r.report).collect();
                emit(serde_json::to_value(all)?);
            } else {
                print!("{}", commands::render_reports(&reports));
            }
            for r in reports.iter().filter(|r| !r.matches_stored) {
                eprintln!("{}", json!({ "warning": "report_differs_from_stored", "run_dir": r.dir }));
            }
        }
        Command::Sweep { config, ladder, out } => {
            let cfg = RunConfig::load(&config)?;
            let ladder = ladder.unwrap_or_else(|| SWEEP_LADDER.to_vec());
            let outcome = commands::sweep(&cfg, &ladder)?;
            if let Some(p) = out {
                fs::write(p, serde_json::to_vec_pretty(&outcome)?)?;
            }
            emit(serde_json::to_value(outcome)?);
        }
        Command::Serve { config, addr, speedup, out, exit_on_end } => {
            let mut cfg = RunConfig::load(&config)?;
            cfg.mode = Mode::Interactive;
            let out = output_dir(&cfg, out)?;
            let pack = cfg.load_pack()?;
            let agents = cfg.agents()?;
            let eng = Engine::new(pack.clone(), cfg.engine_config()?, policy_from(agents.clone()), Mode::Interactive)?;
            let addr = addr.unwrap_or_else(|| cfg.serve.addr.clone());
            let pace = Pace::from_speedup(speedup.unwrap_or(cfg.serve.speedup));
            let mut server = Server::start(eng, &addr, pace)?;
            emit(json!({ "listening": server.local_addr().to_string() }));
            let record = server.wait()?;
            let arts = commands::assemble(&cfg, pack, agents, record)?;
            arts.write(&out)?;
            emit(json!({ "run_dir": out, "events": arts.record.log.len(), "directives": arts.record.transcript.len() }));
            if exit_on_end {
                server.shutdown();
            } else {
                loop {
                    std::thread::park();
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({ "error": e.code(), "message": e.to_string() }));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
