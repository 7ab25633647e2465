//! The activity matrix: one row per grid cell, one column per temporal unit.

use chrono::{DateTime, Utc};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::ingest::PointRecord;
use crate::temporal::{TemporalSpec, TimeUnit};

/// Integer demand counts `a_ij` for cell `i` during unit `j`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivityMatrix {
    values: Vec<u64>,
    pub grid: GridSpec,
    pub temporal: TemporalSpec,
    /// Weight of points that fell outside the grid or the temporal window.
    pub dropped_count: u64,
    /// Input rows rejected by the parser (reported, not part of conservation).
    pub rejected_rows: u64,
}

impl ActivityMatrix {
    pub fn from_parts(
        values: Vec<u64>,
        grid: GridSpec,
        temporal: TemporalSpec,
        dropped_count: u64,
    ) -> Result<Self> {
        grid.validate()?;
        temporal.validate()?;
        let expected = grid.num_cells() * temporal.num_units;
        if values.len() != expected {
            return Err(Error::arg(format!(
                "payload has {} entries, grid x window needs {expected}",
                values.len()
            )));
        }
        Ok(ActivityMatrix {
            values,
            grid,
            temporal,
            dropped_count,
            rejected_rows: 0,
        })
    }

    pub fn zeros(grid: GridSpec, temporal: TemporalSpec) -> Result<Self> {
        let n = grid.num_cells() * temporal.num_units;
        Self::from_parts(vec![0; n], grid, temporal, 0)
    }

    /// Number of rows (`x`).
    pub fn num_cells(&self) -> usize {
        self.grid.num_cells()
    }

    /// Number of columns (`k`).
    pub fn num_units(&self) -> usize {
        self.temporal.num_units
    }

    #[inline]
    pub fn get(&self, cell: usize, unit: usize) -> u64 {
        self.values[cell * self.num_units() + unit]
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn row(&self, cell: usize) -> &[u64] {
        let k = self.num_units();
        &self.values[cell * k..(cell + 1) * k]
    }

    pub fn total(&self) -> u64 {
        self.values.iter().sum()
    }

    pub fn has_activity(&self) -> bool {
        self.values.iter().any(|&v| v > 0)
    }

    /// Cells with at least one non-zero count over the window.
    pub fn active_cells(&self) -> Vec<usize> {
        (0..self.num_cells())
            .filter(|&i| self.row(i).iter().any(|&v| v > 0))
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let k = self.num_units();
        DMatrix::from_fn(self.num_cells(), k, |i, j| self.values[i * k + j] as f64)
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.values.iter().map(|&v| (v as f64) * (v as f64)).sum()
    }
}

/// Incremental builder used by streaming ingestion.
///
/// Counts are merged with integer addition, so the result does not depend
/// on point order or on how the input was chunked.
#[derive(Debug, Clone)]
pub struct MatrixAccumulator {
    grid: GridSpec,
    temporal: TemporalSpec,
    hour_origin: Option<DateTime<Utc>>,
    counts: Vec<u64>,
    dropped: u64,
    rejected_rows: u64,
    input_weight: u64,
}

impl MatrixAccumulator {
    pub fn new(grid: GridSpec, temporal: TemporalSpec) -> Result<Self> {
        grid.validate()?;
        temporal.validate()?;
        let hour_origin = match temporal.unit {
            TimeUnit::Hour => Some(temporal.window_start()?),
            TimeUnit::Day => None,
        };
        Ok(MatrixAccumulator {
            grid,
            temporal,
            hour_origin,
            counts: vec![0; grid.num_cells() * temporal.num_units],
            dropped: 0,
            rejected_rows: 0,
            input_weight: 0,
        })
    }

    /// Flat row-major index of the point, or `None` when out of bounds or window.
    #[inline]
    pub fn slot(&self, p: &PointRecord) -> Option<usize> {
        let cell = self.grid.locate(p.longitude, p.latitude)?;
        let unit = match self.hour_origin {
            Some(origin) => {
                let h = (p.timestamp - origin).num_seconds().div_euclid(3600);
                (h >= 0 && (h as usize) < self.temporal.num_units).then_some(h as usize)?
            }
            None => self.temporal.unit_of(p.timestamp)?,
        };
        Some(cell * self.temporal.num_units + unit)
    }

    pub fn add(&mut self, p: &PointRecord) {
        let slot = self.slot(p);
        self.add_slot(slot, p.weight);
    }

    #[inline]
    fn add_slot(&mut self, slot: Option<usize>, weight: u64) {
        self.input_weight += weight;
        match slot {
            Some(s) => self.counts[s] += weight,
            None => self.dropped += weight,
        }
    }

    /// Locates points in parallel, then adds them in input order.
    pub fn add_points(&mut self, points: &[PointRecord]) {
        let slots: Vec<Option<usize>> = points.par_iter().map(|p| self.slot(p)).collect();
        for (slot, p) in slots.into_iter().zip(points) {
            self.add_slot(slot, p.weight);
        }
    }

    pub fn add_rejected_rows(&mut self, n: u64) {
        self.rejected_rows += n;
    }

    pub fn input_weight(&self) -> u64 {
        self.input_weight
    }

    pub fn finish(self) -> ActivityMatrix {
        let matrix = ActivityMatrix {
            values: self.counts,
            grid: self.grid,
            temporal: self.temporal,
            dropped_count: self.dropped,
            rejected_rows: self.rejected_rows,
        };
        if !matrix.has_activity() {
            log::warn!(
                "activity matrix is all zero ({} points dropped as out of bounds or window)",
                matrix.dropped_count
            );
        }
        matrix
    }
}

/// Bins points into cells and units. Pickups and dropoffs count the same.
pub fn build_activity_matrix(
    points: &[PointRecord],
    grid: &GridSpec,
    temporal: &TemporalSpec,
) -> Result<ActivityMatrix> {
    let mut acc = MatrixAccumulator::new(*grid, *temporal)?;
    acc.add_points(points);
    Ok(acc.finish())
}

/// Sidecar metadata persisted next to the payload.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct ActivityMeta {
    pub grid: GridSpec,
    pub temporal: TemporalSpec,
    pub dropped_count: u64,
    #[serde(default)]
    pub rejected_rows: u64,
}

impl ActivityMatrix {
    pub(crate) fn meta(&self) -> ActivityMeta {
        ActivityMeta {
            grid: self.grid,
            temporal: self.temporal,
            dropped_count: self.dropped_count,
            rejected_rows: self.rejected_rows,
        }
    }

    pub(crate) fn from_meta(values: Vec<u64>, meta: ActivityMeta) -> Result<Self> {
        let mut m = Self::from_parts(values, meta.grid, meta.temporal, meta.dropped_count)
            .map_err(|e| Error::format(e.to_string()))?;
        m.rejected_rows = meta.rejected_rows;
        Ok(m)
    }
}
