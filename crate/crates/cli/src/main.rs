//! `deimsense`: event detection in trip data from a few sensor cells.

mod commands;
mod config;
mod pipeline;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use deimsense_core::SelectionMethod;
use sha2::{Digest, Sha256};

use crate::commands::DetectOptions;
use crate::config::{expand_globs, LoadedConfig, Window, TEMPLATE};
use crate::pipeline::RunLayout;

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Parser)]
#[command(
    name = "deimsense",
    version,
    about = "Detect events in gridded trip data from a few sensor cells"
)]
struct Cli {
    /// Worker thread cap (all cores when unset).
    #[arg(long, global = true, env = "DEIMSENSE_THREADS")]
    threads: Option<usize>,

    /// Run configuration; fills in defaults for every subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write an annotated configuration template.
    Init {
        #[arg(default_value = "deimsense.toml")]
        path: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Bin trip CSV files into an activity matrix.
    BuildMatrix {
        /// Trip files or glob patterns (default: the window's config entry).
        #[arg(long, num_args = 1..)]
        trips: Vec<String>,
        #[arg(long, value_enum, default_value_t = Window::Train)]
        window: Window,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the orthonormal basis of an activity matrix.
    Fit {
        #[arg(long)]
        matrix: Option<PathBuf>,
        #[arg(long)]
        max_rank: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Choose sensor cells from a basis.
    Select {
        #[arg(long)]
        basis: Option<PathBuf>,
        #[arg(long)]
        q: usize,
        #[arg(long)]
        method: Option<SelectionMethod>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reconstruct the uneventful field from the sensor rows.
    Simulate {
        #[arg(long)]
        basis: Option<PathBuf>,
        #[arg(long)]
        sensors: Option<PathBuf>,
        #[arg(long)]
        matrix: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep sensor counts against a validation matrix.
    Sweep {
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        val: Option<PathBuf>,
        /// Reuse a basis fitted to the training matrix.
        #[arg(long)]
        basis: Option<PathBuf>,
        #[arg(long)]
        q_min: Option<usize>,
        #[arg(long)]
        q_max: Option<usize>,
        #[arg(long)]
        method: Option<SelectionMethod>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank event days and write Event Index maps.
    Detect(DetectArgs),
    /// Run every stage from a configuration file.
    Run,
}

#[derive(Debug, Args)]
struct DetectArgs {
    #[arg(long)]
    matrix: Option<PathBuf>,
    #[arg(long)]
    recon: Option<PathBuf>,
    #[arg(long)]
    top: Option<usize>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Map every unit instead of the top ones.
    #[arg(long)]
    all_days: bool,
}

/// Exit status of a stage failure that is not a numerical guard.
const EXIT_FAILURE: u8 = 1;
/// Exit status when an interpolation guard fired.
const EXIT_GUARD: u8 = 2;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            log::error!("cannot set thread count: {e}");
            return ExitCode::from(EXIT_FAILURE);
        }
    }
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            log::error!("{e:#}");
            let guard = e.chain().any(|c| {
                matches!(
                    c.downcast_ref::<deimsense_core::Error>(),
                    Some(deimsense_core::Error::Numerical(_))
                )
            });
            ExitCode::from(if guard { EXIT_GUARD } else { EXIT_FAILURE })
        }
    }
}

/// Resolves a path from the flag or, failing that, the config run directory.
fn pick(
    flag: Option<PathBuf>,
    cfg: Option<&LoadedConfig>,
    default: impl Fn(&RunLayout) -> PathBuf,
    what: &str,
) -> Result<PathBuf> {
    match (flag, cfg) {
        (Some(p), _) => Ok(p),
        (None, Some(c)) => Ok(default(&RunLayout::new(c.output_dir()))),
        (None, None) => bail!("--{what} is required without --config"),
    }
}

fn pick_value<T>(flag: Option<T>, from_config: Option<T>, what: &str) -> Result<T> {
    flag.or(from_config)
        .with_context(|| format!("--{what} is required without --config"))
}

fn dispatch(cli: Cli) -> Result<u8> {
    let cfg = cli.config.as_deref().map(LoadedConfig::load).transpose()?;
    let cfg = cfg.as_ref();
    match cli.command {
        Command::Init { path, force } => {
            init(&path, force)?;
        }
        Command::BuildMatrix { trips, window, out } => {
            let c = cfg.context("build-matrix needs --config for the grid, schema and window")?;
            let files = if trips.is_empty() {
                c.trip_files(window)?
            } else {
                expand_globs(trips.iter().map(PathBuf::from))?
            };
            let out = pick(out, Some(c), |l| l.matrix(window), "out")?;
            commands::build_matrix(
                &files,
                &c.config.schema,
                c.grid()?,
                c.temporal(window)?,
                &out,
            )?;
            println!("{}", out.display());
        }
        Command::Fit {
            matrix,
            max_rank,
            out,
        } => {
            let matrix = pick(matrix, cfg, |l| l.matrix(Window::Train), "matrix")?;
            let max_rank = pick_value(
                max_rank,
                cfg.map(|c| c.config.sweep.q.unwrap_or(c.config.sweep.q_max)),
                "max-rank",
            )?;
            let out = pick(out, cfg, RunLayout::basis, "out")?;
            let basis = commands::fit(&matrix, max_rank, &out)?;
            println!("rank {}", basis.rank());
        }
        Command::Select {
            basis,
            q,
            method,
            out,
        } => {
            let basis = pick(basis, cfg, RunLayout::basis, "basis")?;
            let method = method
                .or(cfg.map(|c| c.config.sweep.method))
                .unwrap_or_default();
            let out = pick(out, cfg, RunLayout::sensors, "out")?;
            let s = commands::select(&basis, q, method, &out)?;
            println!(
                "{} sensors {:?} condition {:.6e}",
                s.q, s.indices, s.condition
            );
        }
        Command::Simulate {
            basis,
            sensors,
            matrix,
            out,
        } => {
            let basis = pick(basis, cfg, RunLayout::basis, "basis")?;
            let sensors = pick(sensors, cfg, RunLayout::sensors, "sensors")?;
            let matrix = pick(matrix, cfg, |l| l.matrix(observed_window(cfg)), "matrix")?;
            let out = pick(out, cfg, RunLayout::reconstruction, "out")?;
            let condition = commands::simulate(&basis, &sensors, &matrix, &out)?;
            println!("condition {condition:.6e}");
        }
        Command::Sweep {
            train,
            val,
            basis,
            q_min,
            q_max,
            method,
            out,
        } => {
            let train = pick(train, cfg, |l| l.matrix(Window::Train), "train")?;
            let val = pick(val, cfg, |l| l.matrix(Window::Validation), "val")?;
            let q_min = pick_value(q_min, cfg.map(|c| c.config.sweep.q_min), "q-min")?;
            let q_max = pick_value(q_max, cfg.map(|c| c.config.sweep.q_max), "q-max")?;
            let method = method
                .or(cfg.map(|c| c.config.sweep.method))
                .unwrap_or_default();
            let out = pick(out, cfg, RunLayout::sweep, "out")?;
            let outcome =
                commands::sweep(&train, &val, basis.as_deref(), q_min, q_max, method, &out)?;
            println!("q {}", outcome.optimum.q);
            if outcome.curve.points.iter().any(|p| p.guard_fired()) {
                return Ok(EXIT_GUARD);
            }
        }
        Command::Detect(args) => {
            let matrix = pick(
                args.matrix,
                cfg,
                |l| l.matrix(observed_window(cfg)),
                "matrix",
            )?;
            let recon = pick(args.recon, cfg, RunLayout::reconstruction, "recon")?;
            let out_dir = pick(args.out_dir, cfg, RunLayout::detect_dir, "out-dir")?;
            let report = cfg.map(|c| &c.config.report);
            let opts = DetectOptions {
                top: args.top.or(report.map(|r| r.top)).unwrap_or(10),
                classes: args
                    .classes
                    .or(report.map(|r| r.classes))
                    .unwrap_or(deimsense_core::detection::DEFAULT_JENKS_CLASSES),
                all_days: args.all_days || report.is_some_and(|r| r.all_days),
            };
            let summary = commands::detect(&matrix, &recon, &opts, &out_dir)?;
            for day in &summary.top_days {
                println!("{day}");
            }
        }
        Command::Run => {
            let c = cfg.context("run needs --config")?;
            let outcome = pipeline::run_pipeline(c)?;
            let m = &outcome.manifest;
            println!("q {}", m.chosen_q);
            if !m.guards_fired.is_empty() {
                for g in &m.guards_fired {
                    log::warn!("guard fired: {g}");
                }
                return Ok(EXIT_GUARD);
            }
        }
    }
    Ok(0)
}

fn observed_window(cfg: Option<&LoadedConfig>) -> Window {
    match cfg {
        Some(c) if c.config.detect.is_some() => Window::Detect,
        _ => Window::Train,
    }
}

fn init(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        bail!("{} exists (use --force to overwrite)", path.display());
    }
    std::fs::write(path, TEMPLATE).with_context(|| format!("writing {}", path.display()))?;
    println!("{}", path.display());
    Ok(())
}
