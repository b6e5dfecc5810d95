//! Command-line harness: training, evaluation, trajectory recording and slip analysis.

pub mod error;
pub mod eval;
pub mod record;
pub mod slip;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Deserialize;

use residual_racing::checkpoint::Checkpoint;
use residual_racing::env::{EnvConfig, RacingEnv};
use residual_racing::ppo::{TrackSource, TrainConfig, Trainer};
use residual_racing::track::{synth, Track};
use residual_racing::Error;

pub use error::{CliError, CliResult, Kind};
use eval::{eval_env_config, evaluate_track, run_episode, write_report, Controller, Mode, ReportRow};
use record::{read_records, RecordWriter, StepRecord};
use slip::SlipHistogram;

#[derive(Debug, Parser)]
#[command(name = "residual-racing", version, about = "Residual policy learning for autonomous racing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a residual policy with PPO.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Continue from a checkpoint written by a previous run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Lap-time evaluation of the base and/or residual controller.
    Eval {
        /// TOML file with a `tracks` list and optional `env` section (a training config works).
        #[arg(long)]
        config: PathBuf,
        /// Required for `rpl` and `both`.
        #[arg(long)]
        ckpt: Option<PathBuf>,
        /// Comma-separated track names, or `all`.
        #[arg(long, default_value = "all")]
        tracks: String,
        #[arg(long, value_enum, default_value = "both")]
        mode: Mode,
        #[arg(long, default_value_t = 2)]
        laps: usize,
        #[arg(long, default_value_t = 3)]
        starts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Record a trajectory with the per-step action decomposition.
    Record {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        track: String,
        /// `base` or `rpl`.
        #[arg(long, value_enum, default_value = "rpl")]
        mode: Mode,
        #[arg(long, default_value_t = 1)]
        laps: usize,
        /// Start waypoint index.
        #[arg(long, default_value_t = 0)]
        start: usize,
        /// Keep every n-th lidar beam in the record; 0 omits the scan.
        #[arg(long, default_value_t = 0)]
        lidar_stride: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Histogram of slip angles from trajectory records.
    SlipHist {
        #[arg(long = "in", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value_t = 0.01)]
        bin: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the procedural demonstration oval as map and racing-line files.
    MakeTrack {
        #[arg(long, default_value = "oval")]
        name: String,
        /// Fraction of the feasible speed profile used as planned speed.
        #[arg(long, default_value_t = 0.7)]
        scale: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Track list and environment settings, read from any TOML file that has them.
#[derive(Debug, Deserialize)]
struct TrackCatalog {
    tracks: Vec<TrackSource>,
    #[serde(default)]
    env: EnvConfig,
}

struct LoadedCatalog {
    tracks: Vec<Track>,
    env: EnvConfig,
}

fn load_catalog(path: &Path) -> CliResult<LoadedCatalog> {
    if !path.exists() {
        return Err(CliError::loading(Error::MissingAsset(path.to_path_buf())));
    }
    let text = std::fs::read_to_string(path).map_err(|e| CliError::loading(Error::io(path, e)))?;
    let cat: TrackCatalog = toml::from_str(&text).map_err(|e| CliError::config(e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let tracks = cat
        .tracks
        .iter()
        .map(|t| t.load(base, &cat.env.vehicle))
        .collect::<residual_racing::Result<Vec<_>>>()
        .map_err(CliError::loading)?;
    Ok(LoadedCatalog { tracks, env: cat.env })
}

fn select_tracks(all: &[Track], names: &str) -> CliResult<Vec<(usize, Track)>> {
    if names.trim() == "all" {
        return Ok(all.iter().cloned().enumerate().collect());
    }
    names
        .split(',')
        .map(str::trim)
        .filter(|n| !n.is_empty())
        .map(|n| {
            all.iter()
                .position(|t| t.name == n)
                .map(|i| (i, all[i].clone()))
                .ok_or_else(|| CliError::config(format!("unknown track `{n}`")))
        })
        .collect()
}

/// Controller and environment settings for a mode; the checkpoint's settings win when present.
fn load_controller(mode: Mode, ckpt: Option<&Path>, env: &EnvConfig) -> CliResult<(Controller, EnvConfig)> {
    let ckpt = ckpt
        .map(|p| Checkpoint::load(p).map_err(CliError::loading))
        .transpose()?;
    let env = ckpt.as_ref().map_or_else(|| env.clone(), |c| c.env.clone());
    match mode {
        Mode::Base => Ok((Controller::Base, env)),
        _ => {
            let ckpt = ckpt.ok_or_else(|| CliError::config("rpl mode needs --ckpt"))?;
            ckpt.expect_layout(&env.layout()).map_err(CliError::loading)?;
            Ok((Controller::from_checkpoint(&ckpt).map_err(CliError::loading)?, env))
        }
    }
}

pub fn cmd_train(config: &Path, seed: Option<u64>, resume: Option<&Path>) -> CliResult<PathBuf> {
    let (mut cfg, base) = TrainConfig::load(config).map_err(CliError::loading)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let mut trainer = match resume {
        Some(p) => {
            let ckpt = Checkpoint::load(p).map_err(CliError::loading)?;
            Trainer::resume(cfg, &base, &ckpt).map_err(CliError::loading)?
        }
        None => Trainer::new(cfg, &base).map_err(CliError::loading)?,
    };
    let summary = trainer.run().map_err(CliError::runtime)?;
    log::info!(
        "trained {} updates, {} steps, {} episodes; final checkpoint {}",
        summary.updates,
        summary.global_step,
        summary.episodes,
        summary.final_checkpoint.display()
    );
    Ok(summary.final_checkpoint)
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_eval(
    config: &Path,
    ckpt: Option<&Path>,
    tracks: &str,
    mode: Mode,
    laps: usize,
    starts: usize,
    seed: u64,
    out: &Path,
) -> CliResult<Vec<ReportRow>> {
    if laps == 0 || starts == 0 {
        return Err(CliError::config("laps and starts must be positive"));
    }
    let cat = load_catalog(config)?;
    let selected = select_tracks(&cat.tracks, tracks)?;
    let (base, env) = load_controller(Mode::Base, ckpt, &cat.env)?;
    let rpl = match mode {
        Mode::Base => None,
        _ => Some(load_controller(Mode::Rpl, ckpt, &cat.env)?.0),
    };
    let mut rows = Vec::new();
    for (idx, track) in &selected {
        let run = |c: &Controller| evaluate_track(track, *idx, &env, c, laps, starts, seed).map_err(CliError::runtime);
        let b = match mode {
            Mode::Rpl => None,
            _ => Some(run(&base)?),
        };
        let r = rpl.as_ref().map(run).transpose()?;
        rows.push(ReportRow::new(&track.name, b.as_ref(), r.as_ref()));
    }
    rows.push(ReportRow::overall(&rows));
    write_report(&rows, out).map_err(CliError::runtime)?;
    Ok(rows)
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_record(
    config: &Path,
    ckpt: Option<&Path>,
    track: &str,
    mode: Mode,
    laps: usize,
    start: usize,
    lidar_stride: usize,
    out: &Path,
) -> CliResult<usize> {
    if mode == Mode::Both {
        return Err(CliError::config("record takes --mode base or rpl"));
    }
    let cat = load_catalog(config)?;
    let (_, track) = select_tracks(&cat.tracks, track)?
        .into_iter()
        .next()
        .ok_or_else(|| CliError::config("no track given"))?;
    let (controller, env_cfg) = load_controller(mode, ckpt, &cat.env)?;
    let cfg = eval_env_config(&env_cfg, laps, &track);
    let mut env = RacingEnv::new(track, cfg, 0).map_err(CliError::runtime)?;
    let mut writer = RecordWriter::create(out).map_err(CliError::runtime)?;
    let mut result = Ok(());
    let mut count = 0usize;
    run_episode(&mut env, &controller, start, |env, step| {
        if result.is_ok() {
            result = writer.write(&StepRecord::new(env, step, lidar_stride));
            count += 1;
        }
    })
    .map_err(CliError::runtime)?;
    result.map_err(CliError::runtime)?;
    writer.finish().map_err(CliError::runtime)?;
    Ok(count)
}

pub fn cmd_slip_hist(inputs: &[PathBuf], bin: f64, out: &Path) -> CliResult<SlipHistogram> {
    if !(bin > 0.0) {
        return Err(CliError::config("bin width must be positive"));
    }
    let mut hist = SlipHistogram::new(bin);
    for p in inputs {
        let recs = read_records(p).map_err(CliError::loading)?;
        hist.merge(&SlipHistogram::from_values(recs.iter().map(|r| r.slip), bin));
    }
    hist.write(out).map_err(CliError::runtime)?;
    Ok(hist)
}

pub fn cmd_make_track(name: &str, scale: f64, out: &Path) -> CliResult<PathBuf> {
    let track = synth::build(name, &synth::demo_oval_spec(scale)).map_err(CliError::loading)?;
    let spec = track.save(out).map_err(CliError::runtime)?;
    let catalog = out.join(format!("{name}.toml"));
    let rel = |p: &Path| p.file_name().map(PathBuf::from).unwrap_or_default();
    let text = format!(
        "[[tracks]]\nname = \"{}\"\nmap = \"{}\"\nline = \"{}\"\n",
        name,
        rel(&spec.map).display(),
        rel(&spec.line).display()
    );
    std::fs::write(&catalog, text).map_err(|e| CliError::runtime(Error::io(&catalog, e)))?;
    Ok(catalog)
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train { config, seed, resume } => {
            cmd_train(&config, seed, resume.as_deref())?;
        }
        Command::Eval {
            config,
            ckpt,
            tracks,
            mode,
            laps,
            starts,
            seed,
            out,
        } => {
            let rows = cmd_eval(&config, ckpt.as_deref(), &tracks, mode, laps, starts, seed, &out)?;
            for r in &rows {
                log::info!(
                    "{}: base {:?} rpl {:?} improvement {:?}",
                    r.track,
                    r.base_median,
                    r.rpl_median,
                    r.rel_improvement
                );
            }
        }
        Command::Record {
            config,
            ckpt,
            track,
            mode,
            laps,
            start,
            lidar_stride,
            out,
        } => {
            let n = cmd_record(&config, ckpt.as_deref(), &track, mode, laps, start, lidar_stride, &out)?;
            log::info!("recorded {n} steps to {}", out.display());
        }
        Command::SlipHist { inputs, bin, out } => {
            let h = cmd_slip_hist(&inputs, bin, &out)?;
            log::info!("{} samples, slip in [{}, {}]", h.total(), h.min, h.max);
        }
        Command::MakeTrack { name, scale, out } => {
            let catalog = cmd_make_track(&name, scale, &out)?;
            log::info!("wrote {}", catalog.display());
        }
    }
    Ok(())
}
