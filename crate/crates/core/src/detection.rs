//! Observation vs. baseline comparison.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jenks::{jenks_breaks, JenksBreaks};

/// Class count used when none is configured.
pub const DEFAULT_JENKS_CLASSES: usize = 7;

fn check_dims(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::arg(format!(
            "observation is {:?}, simulation is {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Per-unit RMSE over all cells: `sqrt(sum_i (a_ij - a~_ij)^2 / x)`.
pub fn column_rmse(observed: &DMatrix<f64>, simulated: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_dims(observed, simulated)?;
    let x = observed.nrows() as f64;
    Ok(observed
        .column_iter()
        .zip(simulated.column_iter())
        .map(|(a, s)| {
            let sq: f64 = a.iter().zip(s.iter()).map(|(a, s)| (a - s) * (a - s)).sum();
            (sq / x).sqrt()
        })
        .collect())
}

/// RMSE over every entry, normalised by `x * k`.
pub fn overall_rmse(observed: &DMatrix<f64>, simulated: &DMatrix<f64>) -> Result<f64> {
    check_dims(observed, simulated)?;
    let n = observed.len() as f64;
    let sq: f64 = observed
        .iter()
        .zip(simulated.iter())
        .map(|(a, s)| (a - s) * (a - s))
        .sum();
    Ok((sq / n).sqrt())
}

/// Observation minus simulation; positive means more demand than the baseline.
pub fn event_index(observed: &DMatrix<f64>, simulated: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_dims(observed, simulated)?;
    Ok(observed - simulated)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedDay {
    pub unit: usize,
    pub rmse: f64,
}

/// The `top_n` largest entries, descending; equal values keep chronological order.
pub fn rank_event_days(series: &[f64], top_n: usize) -> Vec<RankedDay> {
    let mut ranked: Vec<RankedDay> = series
        .iter()
        .enumerate()
        .map(|(unit, &rmse)| RankedDay { unit, rmse })
        .collect();
    ranked.sort_by(|a, b| b.rmse.total_cmp(&a.rmse).then(a.unit.cmp(&b.unit)));
    ranked.truncate(top_n);
    ranked
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventReport {
    pub daily_rmse: Vec<f64>,
    pub overall_rmse: f64,
    pub event_index: DMatrix<f64>,
    /// All units by descending daily RMSE.
    pub ranked_days: Vec<RankedDay>,
    pub jenks: JenksBreaks,
    /// Rows whose Event Index values were pooled for the breaks.
    pub classified_cells: Vec<usize>,
}

/// Builds the full report. Breaks are fitted once on the Event Index of
/// `cells` pooled over every unit; `None` pools every row.
pub fn detect_events(
    observed: &DMatrix<f64>,
    simulated: &DMatrix<f64>,
    classes: usize,
    cells: Option<&[usize]>,
) -> Result<EventReport> {
    let daily_rmse = column_rmse(observed, simulated)?;
    let overall = overall_rmse(observed, simulated)?;
    let index = event_index(observed, simulated)?;
    let ranked_days = rank_event_days(&daily_rmse, daily_rmse.len());
    let classified_cells: Vec<usize> = match cells {
        Some(c) => c.to_vec(),
        None => (0..observed.nrows()).collect(),
    };
    if let Some(&bad) = classified_cells.iter().find(|&&c| c >= observed.nrows()) {
        return Err(Error::arg(format!("cell {bad} outside matrix")));
    }
    let pooled = pooled_values(&index, &classified_cells);
    let jenks = jenks_breaks(&pooled, classes)?;
    Ok(EventReport {
        daily_rmse,
        overall_rmse: overall,
        event_index: index,
        ranked_days,
        jenks,
        classified_cells,
    })
}

/// All Event Index values of `cells` across every unit, one vector.
pub fn pooled_values(index: &DMatrix<f64>, cells: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(cells.len() * index.ncols());
    for j in 0..index.ncols() {
        out.extend(cells.iter().map(|&i| index[(i, j)]));
    }
    out
}
