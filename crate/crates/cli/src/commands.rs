//! One function per pipeline stage, each reading and writing files.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use deimsense_core::container::{load_matrix, persist_matrix};
use deimsense_core::decomposition::{compute_basis, load_basis, persist_basis};
use deimsense_core::detection::detect_events;
use deimsense_core::export::{
    daily_rmse_csv, event_index_geojson, ranked_days_csv, sensors_csv, sensors_geojson,
};
use deimsense_core::ingest::{ingest_trips, DEFAULT_CHUNK_ROWS};
use deimsense_core::matrix::MatrixAccumulator;
use deimsense_core::sensors::{
    load_sensors, save_sensors, select_sensors, sensor_geolocation, SensorLocation,
};
use deimsense_core::simulation::{
    interpolation_condition, load_reconstruction, persist_reconstruction, simulate_uneventful,
};
use deimsense_core::sweep::{
    optimal_sensor_count, sweep_sensor_counts, sweep_with_basis, OptimalCount,
};
use deimsense_core::{
    ActivityMatrix, GridSpec, OrthonormalBasis, SelectionMethod, SweepCurve, TemporalSpec,
    TripSchema,
};
use serde::Serialize;
use serde_json::json;

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
    }
    Ok(())
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    ensure_parent(path)?;
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text)
}

/// Bins every trip file into one activity matrix and persists it.
pub fn build_matrix(
    files: &[PathBuf],
    schema: &TripSchema,
    grid: GridSpec,
    temporal: TemporalSpec,
    out: &Path,
) -> Result<ActivityMatrix> {
    let mut acc = MatrixAccumulator::new(grid, temporal)?;
    for f in files {
        let reader =
            BufReader::new(File::open(f).with_context(|| format!("opening {}", f.display()))?);
        let stats = ingest_trips(reader, schema, &mut acc, DEFAULT_CHUNK_ROWS)
            .with_context(|| format!("reading trips from {}", f.display()))?;
        log::info!(
            "{}: {} rows, {} rejected",
            f.display(),
            stats.rows_read,
            stats.rejected_rows
        );
    }
    let matrix = acc.finish();
    ensure!(
        matrix.has_activity(),
        "no trip point fell inside the grid and window"
    );
    log::info!(
        "matrix {}x{}: total {}, {} points outside grid or window, {} rejected rows",
        matrix.num_cells(),
        matrix.num_units(),
        matrix.total(),
        matrix.dropped_count,
        matrix.rejected_rows
    );
    ensure_parent(out)?;
    persist_matrix(&matrix, out)?;
    Ok(matrix)
}

pub fn fit(matrix: &Path, max_rank: usize, out: &Path) -> Result<OrthonormalBasis> {
    let a = load_matrix(matrix)?;
    let basis = compute_basis(&a, max_rank)?;
    if basis.rank() < max_rank {
        log::warn!(
            "numerical rank is {}, below the requested {max_rank}",
            basis.rank()
        );
    }
    log::info!(
        "basis rank {}: explained variance {:.6}",
        basis.rank(),
        basis.explained_variance(basis.rank())?
    );
    ensure_parent(out)?;
    persist_basis(&basis, out)?;
    Ok(basis)
}

pub struct SweepOutcome {
    pub curve: SweepCurve,
    pub optimum: OptimalCount,
}

/// Runs the sensor-count sweep and writes its curve as CSV.
pub fn sweep(
    train: &Path,
    validation: &Path,
    basis: Option<&Path>,
    q_min: usize,
    q_max: usize,
    method: SelectionMethod,
    out: &Path,
) -> Result<SweepOutcome> {
    let train = load_matrix(train)?;
    let validation = load_matrix(validation)?;
    let mut curve = match basis {
        Some(path) => {
            let basis = load_basis(path)?;
            ensure!(
                train.grid == validation.grid && basis.grid.is_none_or(|g| g == train.grid),
                "training, validation and basis grids differ"
            );
            sweep_with_basis(
                &basis,
                &train.to_dense(),
                &validation.to_dense(),
                q_min,
                q_max,
                method,
            )?
        }
        None => sweep_sensor_counts(&train, &validation, q_min, q_max, method)?,
    };
    for p in curve.invalid_points() {
        log::warn!("q={}: {}", p.q, p.note.as_deref().unwrap_or("invalid"));
    }
    let optimum = optimal_sensor_count(&curve)?;
    curve.chosen_q = Some(optimum.q);
    if optimum.on_boundary {
        log::warn!(
            "validation minimum q={} lies on the edge of {}..={}",
            optimum.q,
            q_min,
            q_max
        );
    }
    write_file(out, curve.to_csv())?;
    Ok(SweepOutcome { curve, optimum })
}

pub struct Selection {
    pub q: usize,
    pub indices: Vec<usize>,
    pub locations: Option<Vec<SensorLocation>>,
    pub condition: f64,
}

/// Picks `q` sensors; writes `out` plus `.geojson` and `.csv` siblings
/// when the basis knows its grid.
pub fn select(basis: &Path, q: usize, method: SelectionMethod, out: &Path) -> Result<Selection> {
    let basis = load_basis(basis)?;
    let sensors = select_sensors(&basis, q, method)?;
    let condition = interpolation_condition(&basis, &sensors)?;
    ensure_parent(out)?;
    save_sensors(
        &sensors,
        basis.num_cells(),
        basis.grid,
        Some(condition),
        out,
    )?;
    let locations = match basis.grid {
        Some(grid) => {
            let points = sensor_geolocation(&sensors, &grid)?;
            write_json(&out.with_extension("geojson"), &sensors_geojson(&points))?;
            write_file(&out.with_extension("csv"), sensors_csv(&points))?;
            Some(points)
        }
        None => None,
    };
    log::info!(
        "{} sensors by {method}: cells {:?}, condition {condition:.3e}",
        sensors.q(),
        sensors.indices()
    );
    Ok(Selection {
        q: sensors.q(),
        indices: sensors.indices().to_vec(),
        locations,
        condition,
    })
}

pub fn simulate(basis: &Path, sensors: &Path, matrix: &Path, out: &Path) -> Result<f64> {
    let basis = load_basis(basis)?;
    let (sensors, _) = load_sensors(sensors)?;
    let observed = load_matrix(matrix)?;
    let recon = simulate_uneventful(&basis, &sensors, &observed)?;
    ensure_parent(out)?;
    persist_reconstruction(&recon, out)?;
    Ok(recon.interpolation_condition)
}

pub struct DetectOptions {
    pub top: usize,
    pub classes: usize,
    pub all_days: bool,
}

#[derive(Debug, Serialize)]
pub struct DetectSummary {
    pub q: usize,
    pub condition: f64,
    pub overall_rmse: f64,
    pub top_days: Vec<String>,
    pub classified_cells: usize,
    pub dropped_count: u64,
    pub rejected_rows: u64,
}

/// Writes the daily RMSE series, the ranking, the Jenks breaks and one
/// Event Index map per reported unit into `out_dir`.
pub fn detect(
    matrix: &Path,
    recon: &Path,
    opts: &DetectOptions,
    out_dir: &Path,
) -> Result<DetectSummary> {
    let observed = load_matrix(matrix)?;
    let recon = load_reconstruction(recon)?;
    ensure!(
        recon.grid.is_none_or(|g| g == observed.grid),
        "reconstruction grid differs from the observation grid"
    );
    ensure!(
        recon.temporal.is_none_or(|t| t == observed.temporal),
        "reconstruction window differs from the observation window"
    );
    let active = observed.active_cells();
    let report = detect_events(
        &observed.to_dense(),
        &recon.values,
        opts.classes,
        Some(&active),
    )?;
    let temporal = &observed.temporal;
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    write_file(
        &out_dir.join("daily_rmse.csv"),
        daily_rmse_csv(temporal, &report.daily_rmse),
    )?;
    write_file(
        &out_dir.join("ranked_days.csv"),
        ranked_days_csv(temporal, &report.ranked_days),
    )?;
    write_json(
        &out_dir.join("breaks.json"),
        &json!({
            "classes": report.jenks.classes(),
            "breaks": report.jenks.breaks,
            "within_ssd": report.jenks.within_ssd,
            "pooled_cells": report.classified_cells.len(),
        }),
    )?;
    let mapped: Vec<usize> = if opts.all_days {
        (0..observed.num_units()).collect()
    } else {
        report
            .ranked_days
            .iter()
            .take(opts.top)
            .map(|d| d.unit)
            .collect()
    };
    for &unit in &mapped {
        let geo = event_index_geojson(
            &observed.grid,
            &report.classified_cells,
            &report.event_index,
            unit,
            &report.jenks,
        )?;
        write_json(
            &out_dir.join(format!("event_index_{}.geojson", map_label(temporal, unit))),
            &geo,
        )?;
    }
    let summary = DetectSummary {
        q: recon.sensors.q(),
        condition: recon.interpolation_condition,
        overall_rmse: report.overall_rmse,
        top_days: report
            .ranked_days
            .iter()
            .take(opts.top)
            .map(|d| temporal.label(d.unit))
            .collect(),
        classified_cells: report.classified_cells.len(),
        dropped_count: observed.dropped_count,
        rejected_rows: observed.rejected_rows,
    };
    write_json(&out_dir.join("report.json"), &summary)?;
    log::info!("top days: {}", summary.top_days.join(", "));
    Ok(summary)
}

/// Unit label usable in a file name.
fn map_label(temporal: &TemporalSpec, unit: usize) -> String {
    temporal.label(unit).replace([':', ' '], "-")
}
