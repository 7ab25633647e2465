//! Full run: the stage commands chained through files in one run directory.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use chrono::{DateTime, SecondsFormat, Utc};
use deimsense_core::sensors::SensorLocation;
use serde::Serialize;

use crate::commands::{self, DetectOptions};
use crate::config::{LoadedConfig, Window};

pub const PARTIAL_MARKER: &str = ".partial";

/// Files of a run directory.
pub struct RunLayout {
    pub dir: PathBuf,
}

impl RunLayout {
    pub fn new(dir: PathBuf) -> Self {
        RunLayout { dir }
    }

    pub fn matrix(&self, which: Window) -> PathBuf {
        self.dir.join(format!("matrix_{which}.bin"))
    }

    pub fn basis(&self) -> PathBuf {
        self.dir.join("basis.bin")
    }

    pub fn sweep(&self) -> PathBuf {
        self.dir.join("sweep.csv")
    }

    pub fn sensors(&self) -> PathBuf {
        self.dir.join("sensors.json")
    }

    pub fn reconstruction(&self) -> PathBuf {
        self.dir.join("reconstruction.bin")
    }

    pub fn detect_dir(&self) -> PathBuf {
        self.dir.join("detect")
    }

    pub fn manifest(&self) -> PathBuf {
        self.dir.join("manifest.json")
    }

    pub fn marker(&self) -> PathBuf {
        self.dir.join(PARTIAL_MARKER)
    }
}

#[derive(Debug, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: PathBuf,
    pub config_sha256: String,
    pub threads: usize,
    pub grid_cells: usize,
    pub chosen_q: usize,
    /// Whether q came from the sweep (as opposed to the config).
    pub swept: bool,
    pub on_boundary: bool,
    pub method: String,
    pub sensors: Vec<SensorLocation>,
    pub condition: f64,
    pub guards_fired: Vec<String>,
    pub dropped_count: u64,
    pub rejected_rows: u64,
    pub overall_rmse: f64,
    pub top_days: Vec<String>,
    pub started_at: String,
    pub finished_at: String,
    pub timings: Vec<StageTiming>,
}

/// Result of a completed run; `guards_fired` decides the exit code.
pub struct RunOutcome {
    pub manifest: Manifest,
}

struct Stages {
    timings: Vec<StageTiming>,
}

impl Stages {
    fn run<T>(&mut self, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        log::info!("stage {name}");
        let start = Instant::now();
        let out = f().with_context(|| format!("stage {name} failed"))?;
        self.timings.push(StageTiming {
            stage: name.to_owned(),
            seconds: start.elapsed().as_secs_f64(),
        });
        Ok(out)
    }
}

fn timestamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Runs every stage. On failure the run directory keeps a `.partial`
/// marker holding the error.
pub fn run_pipeline(cfg: &LoadedConfig) -> Result<RunOutcome> {
    cfg.check_inputs().context("validating inputs")?;
    let layout = RunLayout::new(cfg.output_dir());
    std::fs::create_dir_all(&layout.dir)
        .with_context(|| format!("creating {}", layout.dir.display()))?;
    std::fs::write(layout.marker(), "running\n")?;
    match run_stages(cfg, &layout) {
        Ok(outcome) => {
            std::fs::remove_file(layout.marker())?;
            Ok(outcome)
        }
        Err(e) => {
            // the marker must not hide the original error
            let _ = std::fs::write(layout.marker(), format!("{e:#}\n"));
            Err(e)
        }
    }
}

fn run_stages(cfg: &LoadedConfig, layout: &RunLayout) -> Result<RunOutcome> {
    let c = &cfg.config;
    let started = Utc::now();
    let mut stages = Stages {
        timings: Vec::new(),
    };
    let grid = cfg.grid()?;

    let mut windows = vec![Window::Train];
    if c.validation.is_some() {
        windows.push(Window::Validation);
    }
    if c.detect.is_some() {
        windows.push(Window::Detect);
    }
    for &w in &windows {
        let files = cfg.trip_files(w)?;
        let temporal = cfg.temporal(w)?;
        stages.run(&format!("build-matrix[{w}]"), || {
            commands::build_matrix(&files, &c.schema, grid, temporal, &layout.matrix(w))
        })?;
    }
    let train = layout.matrix(Window::Train);
    let observed = if c.detect.is_some() {
        layout.matrix(Window::Detect)
    } else {
        train.clone()
    };

    let max_rank = c.sweep.q.unwrap_or(c.sweep.q_max);
    stages.run("fit", || commands::fit(&train, max_rank, &layout.basis()))?;

    let mut guards_fired = Vec::new();
    let (q, on_boundary, swept) = match c.sweep.q {
        Some(q) => (q, false, false),
        None => {
            let val = layout.matrix(Window::Validation);
            let outcome = stages.run("sweep", || {
                commands::sweep(
                    &train,
                    &val,
                    Some(&layout.basis()),
                    c.sweep.q_min,
                    c.sweep.q_max,
                    c.sweep.method,
                    &layout.sweep(),
                )
            })?;
            for p in outcome.curve.points.iter().filter(|p| p.guard_fired()) {
                guards_fired.push(format!(
                    "sweep q={}: {}",
                    p.q,
                    p.note.as_deref().unwrap_or("interpolation guard")
                ));
            }
            (outcome.optimum.q, outcome.optimum.on_boundary, true)
        }
    };
    let selection = stages.run("select", || {
        commands::select(&layout.basis(), q, c.sweep.method, &layout.sensors())
    })?;
    let condition = stages.run("simulate", || {
        commands::simulate(
            &layout.basis(),
            &layout.sensors(),
            &observed,
            &layout.reconstruction(),
        )
    })?;
    let opts = DetectOptions {
        top: c.report.top,
        classes: c.report.classes,
        all_days: c.report.all_days,
    };
    let summary = stages.run("detect", || {
        commands::detect(
            &observed,
            &layout.reconstruction(),
            &opts,
            &layout.detect_dir(),
        )
    })?;

    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: cfg.path.clone(),
        config_sha256: cfg.sha256.clone(),
        threads: rayon::current_num_threads(),
        grid_cells: grid.num_cells(),
        chosen_q: q,
        swept,
        on_boundary,
        method: c.sweep.method.to_string(),
        sensors: selection.locations.unwrap_or_default(),
        condition,
        guards_fired,
        dropped_count: summary.dropped_count,
        rejected_rows: summary.rejected_rows,
        overall_rmse: summary.overall_rmse,
        top_days: summary.top_days,
        started_at: timestamp(started),
        finished_at: timestamp(Utc::now()),
        timings: stages.timings,
    };
    write_manifest(&layout.manifest(), &manifest)?;
    Ok(RunOutcome { manifest })
}

fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
