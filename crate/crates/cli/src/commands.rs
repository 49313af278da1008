//! Batch subcommands and their exit codes.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use log::info;
use serde::Serialize;
use vocsync::audio::{render, write_wav, AudioError, RenderOptions};
use vocsync::engine::write_snapshots_jsonl;
use vocsync::experiments::ExperimentError;
use vocsync::model::{randomize_individuality, ConfigError};
use vocsync::{
    chain_experiment, run, run_summary, AgentParams, ChainExperiment, EventLog, ExperimentTable,
    Mode, SimConfig, ValidConfig, ValidationErrors,
};

use crate::cli::{ExperimentArgs, ModeArg, RenderArgs, RunArgs, ServeArgs};
use crate::gateway::{Gateway, GatewayOptions};

#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("invalid configuration:\n{0}")]
    Invalid(#[from] ValidationErrors),
    #[error("cannot parse {path}: {reason}")]
    Parse { path: PathBuf, reason: String },
    #[error(transparent)]
    Experiment(ExperimentError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("audio: {0}")]
    Audio(AudioError),
}

impl Failure {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            Failure::Io { .. } => ExitCode::from(2),
            Failure::Audio(AudioError::Io(_)) => ExitCode::from(2),
            _ => ExitCode::from(1),
        }
    }
}

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> Failure + '_ {
    move |source| Failure::Io {
        path: path.to_owned(),
        source,
    }
}

fn csv_at<E: Into<io::Error>>(path: &Path) -> impl FnOnce(E) -> Failure + '_ {
    move |e| Failure::Io {
        path: path.to_owned(),
        source: e.into(),
    }
}

pub fn load_config(path: &Path) -> Result<ValidConfig, Failure> {
    ValidConfig::load(path).map_err(|e| match e {
        ConfigError::Io(source) => Failure::Io {
            path: path.to_owned(),
            source,
        },
        ConfigError::Parse(e) => Failure::Parse {
            path: path.to_owned(),
            reason: e.to_string(),
        },
        ConfigError::Invalid(v) => Failure::Invalid(v),
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(io_at(path))
}

pub fn run_cmd(args: &RunArgs) -> Result<(), Failure> {
    let mut config = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        config = config.with_seed(seed);
    }
    fs::create_dir_all(&args.out).map_err(io_at(&args.out))?;
    let out = run(&config);

    let events_path = args.out.join("events.csv");
    out.events
        .write_csv(create(&events_path)?)
        .map_err(csv_at(&events_path))?;

    let snapshots_path = args.out.join("snapshots.jsonl");
    let mut w = create(&snapshots_path)?;
    write_snapshots_jsonl(&out.snapshots, &mut w).map_err(io_at(&snapshots_path))?;
    w.flush().map_err(io_at(&snapshots_path))?;

    let summary_path = args.out.join("summary.csv");
    let summary = run_summary(&out.events, config.agents(), config.sim().warmup_cycles);
    summary
        .write_csv(create(&summary_path)?)
        .map_err(csv_at(&summary_path))?;

    info!(
        "{} onsets, {} snapshots written to {}",
        out.events.len(),
        out.snapshots.len(),
        args.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct Report<'a> {
    experiments: Vec<ChainExperiment>,
    table: &'a ExperimentTable,
}

pub fn experiment_cmd(args: &ExperimentArgs) -> Result<ExperimentTable, Failure> {
    let template = AgentParams {
        preferred_period_ms: args.period,
        gain_other: args.gain_other,
        gain_self: args.gain_self,
        reaction_latency_ms: args.latency,
        jitter_sigma_ms: args.jitter,
        ..AgentParams::default()
    };
    let violations = template.violations();
    if !violations.is_empty() {
        return Err(ValidationErrors(violations).into());
    }
    let base = ChainExperiment {
        n_agents: args.n,
        mode: Mode::Feedback,
        trials: args.trials,
        cycles_per_trial: args.cycles,
        template,
        sim: SimConfig {
            seed: args.seed,
            warmup_cycles: args.warmup,
            ..SimConfig::default()
        },
    };
    let modes: &[Mode] = match args.mode {
        ModeArg::Feedback => &[Mode::Feedback],
        ModeArg::ActionReaction => &[Mode::ActionReaction],
        ModeArg::Both => &[Mode::Feedback, Mode::ActionReaction],
    };
    let experiments: Vec<ChainExperiment> = modes
        .iter()
        .map(|&mode| ChainExperiment {
            mode,
            ..base.clone()
        })
        .collect();
    let mut table = ExperimentTable::default();
    for exp in &experiments {
        let t = chain_experiment(exp).map_err(|e| match e {
            ExperimentError::Invalid(v) => Failure::Invalid(v),
            other => Failure::Experiment(other),
        })?;
        table.extend(t);
    }

    print!("{table}");
    if let Some(path) = &args.out {
        table.write_csv(create(path)?).map_err(csv_at(path))?;
    }
    if let Some(path) = &args.report {
        let mut w = create(path)?;
        serde_json::to_writer_pretty(
            &mut w,
            &Report {
                experiments,
                table: &table,
            },
        )
        .map_err(|e| io_at(path)(e.into()))?;
        w.write_all(b"\n")
            .and_then(|_| w.flush())
            .map_err(io_at(path))?;
    }
    Ok(table)
}

pub fn render_cmd(args: &RenderArgs) -> Result<(), Failure> {
    let config = load_config(&args.config)?;
    let events = match &args.events {
        Some(path) => EventLog::read_csv(File::open(path).map_err(io_at(path))?).map_err(|e| {
            Failure::Parse {
                path: path.clone(),
                reason: e.to_string(),
            }
        })?,
        None => run(&config).events,
    };
    let agents = match args.individuality_seed {
        Some(seed) => randomize_individuality(config.agents(), seed),
        None => config.agents().to_vec(),
    };
    let pcm = render(
        events.events(),
        &agents,
        RenderOptions {
            sample_rate_hz: args.sample_rate,
            ..RenderOptions::default()
        },
    )
    .map_err(Failure::Audio)?;
    write_wav(&pcm, &args.out).map_err(|e| match e {
        AudioError::Io(source) => Failure::Io {
            path: args.out.clone(),
            source,
        },
        other => Failure::Audio(other),
    })?;
    info!(
        "{:.1} s of audio written to {}",
        pcm.duration_ms() / 1000.0,
        args.out.display()
    );
    Ok(())
}

pub fn serve_cmd(args: &ServeArgs) -> Result<(), Failure> {
    let mut config = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        config = config.with_seed(seed);
    }
    let addr = (args.host.as_str(), args.port);
    let gateway =
        Gateway::bind(addr, config, GatewayOptions { speed: args.speed }).map_err(|source| {
            Failure::Io {
                path: PathBuf::from(format!("{}:{}", args.host, args.port)),
                source,
            }
        })?;
    let local = gateway.local_addr().map_err(io_at(Path::new(&args.host)))?;
    println!("listening on ws://{local}");
    gateway
        .spawn()
        .map_err(io_at(Path::new(&args.host)))?
        .wait();
    Ok(())
}
