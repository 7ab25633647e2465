//! Regular longitude/latitude grid.
//!
//! Cells are numbered row-major from the south-west origin:
//! `cell_id = row * num_cols + col`. Every cell covers the half-open box
//! `[lon0 + col*w, lon0 + (col+1)*w) x [lat0 + row*h, lat0 + (row+1)*h)`,
//! so a point on the outer north or east edge of the grid is out of bounds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cell size, roughly 80 m east-west by 110 m north-south at New York's latitude.
pub const DEFAULT_CELL_DEG: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub min_longitude: f64,
    pub min_latitude: f64,
    pub cell_width_deg: f64,
    pub cell_height_deg: f64,
    pub num_cols: usize,
    pub num_rows: usize,
}

impl GridSpec {
    pub fn new(
        min_longitude: f64,
        min_latitude: f64,
        cell_width_deg: f64,
        cell_height_deg: f64,
        num_cols: usize,
        num_rows: usize,
    ) -> Result<Self> {
        let grid = GridSpec {
            min_longitude,
            min_latitude,
            cell_width_deg,
            cell_height_deg,
            num_cols,
            num_rows,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// Smallest grid of `cell_deg` cells whose extent covers the given bounds.
    pub fn covering(
        min_longitude: f64,
        min_latitude: f64,
        max_longitude: f64,
        max_latitude: f64,
        cell_width_deg: f64,
        cell_height_deg: f64,
    ) -> Result<Self> {
        if !(max_longitude > min_longitude && max_latitude > min_latitude) {
            return Err(Error::Config(format!(
                "empty bounding box ({min_longitude}, {min_latitude}) .. ({max_longitude}, {max_latitude})"
            )));
        }
        // tolerate round-off in extents that are whole multiples of the cell size
        let cols = ((max_longitude - min_longitude) / cell_width_deg - 1e-9).ceil() as usize;
        let rows = ((max_latitude - min_latitude) / cell_height_deg - 1e-9).ceil() as usize;
        Self::new(
            min_longitude,
            min_latitude,
            cell_width_deg,
            cell_height_deg,
            cols.max(1),
            rows.max(1),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.min_longitude,
            self.min_latitude,
            self.cell_width_deg,
            self.cell_height_deg,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("grid parameters must be finite".into()));
        }
        if self.cell_width_deg <= 0.0 || self.cell_height_deg <= 0.0 {
            return Err(Error::Config(format!(
                "cell size must be positive, got {} x {}",
                self.cell_width_deg, self.cell_height_deg
            )));
        }
        if self.num_cols == 0 || self.num_rows == 0 {
            return Err(Error::Config(
                "grid must have at least one row and column".into(),
            ));
        }
        if !(-180.0..=180.0).contains(&self.min_longitude)
            || !(-90.0..=90.0).contains(&self.min_latitude)
        {
            return Err(Error::Config("grid origin outside lon/lat range".into()));
        }
        Ok(())
    }

    /// Total number of cells (rows of the activity matrix).
    pub fn num_cells(&self) -> usize {
        self.num_rows * self.num_cols
    }

    /// Cell containing `(longitude, latitude)`, or `None` when the point
    /// falls outside the grid.
    #[inline]
    pub fn locate(&self, longitude: f64, latitude: f64) -> Option<usize> {
        let col = ((longitude - self.min_longitude) / self.cell_width_deg).floor();
        let row = ((latitude - self.min_latitude) / self.cell_height_deg).floor();
        // NaN fails both comparisons
        if !(col >= 0.0 && row >= 0.0) {
            return None;
        }
        if col >= self.num_cols as f64 || row >= self.num_rows as f64 {
            return None;
        }
        Some(row as usize * self.num_cols + col as usize)
    }

    pub fn row_col(&self, cell_id: usize) -> (usize, usize) {
        (cell_id / self.num_cols, cell_id % self.num_cols)
    }

    pub fn centroid(&self, cell_id: usize) -> Result<(f64, f64)> {
        self.check_cell(cell_id)?;
        let (row, col) = self.row_col(cell_id);
        Ok((
            self.min_longitude + (col as f64 + 0.5) * self.cell_width_deg,
            self.min_latitude + (row as f64 + 0.5) * self.cell_height_deg,
        ))
    }

    /// Closed counter-clockwise ring of the cell's corners as `[lon, lat]`.
    pub fn cell_ring(&self, cell_id: usize) -> Result<[[f64; 2]; 5]> {
        self.check_cell(cell_id)?;
        let (row, col) = self.row_col(cell_id);
        let west = self.min_longitude + col as f64 * self.cell_width_deg;
        let south = self.min_latitude + row as f64 * self.cell_height_deg;
        let east = west + self.cell_width_deg;
        let north = south + self.cell_height_deg;
        Ok([
            [west, south],
            [east, south],
            [east, north],
            [west, north],
            [west, south],
        ])
    }

    fn check_cell(&self, cell_id: usize) -> Result<()> {
        if cell_id >= self.num_cells() {
            return Err(Error::arg(format!(
                "cell id {cell_id} outside grid of {} cells",
                self.num_cells()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> GridSpec {
        GridSpec::new(-74.0, 40.0, 0.01, 0.02, 10, 5).unwrap()
    }

    #[test]
    fn origin_is_cell_zero() {
        assert_eq!(grid().locate(-74.0, 40.0), Some(0));
    }

    #[test]
    fn floor_arithmetic() {
        let g = grid();
        assert_eq!(g.locate(-74.0 + 1.5 * 0.01, 40.0 + 0.5 * 0.02), Some(1));
        assert_eq!(g.locate(-74.0 + 0.5 * 0.01, 40.0 + 1.5 * 0.02), Some(10));
    }

    #[test]
    fn outer_max_edge_is_out_of_bounds() {
        let g = GridSpec::new(0.0, 0.0, 0.5, 0.5, 4, 2).unwrap();
        assert_eq!(g.locate(2.0, 0.25), None);
        assert_eq!(g.locate(0.25, 1.0), None);
        assert_eq!(g.locate(1.999, 0.999), Some(7));
        assert_eq!(g.locate(-0.001, 0.2), None);
        assert_eq!(g.locate(f64::NAN, 0.2), None);
    }

    #[test]
    fn centroid_of_origin_cell() {
        let g = grid();
        let (lon, lat) = g.centroid(0).unwrap();
        assert!((lon - (-74.0 + 0.005)).abs() < 1e-12);
        assert!((lat - 40.01).abs() < 1e-12);
        assert!(g.centroid(50).is_err());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(GridSpec::new(0.0, 0.0, 0.0, 0.1, 2, 2).is_err());
        assert!(GridSpec::new(0.0, 0.0, 0.1, 0.1, 0, 2).is_err());
        assert!(GridSpec::new(0.0, 95.0, 0.1, 0.1, 2, 2).is_err());
    }

    #[test]
    fn covering_grid_contains_bounds() {
        let g = GridSpec::covering(-74.3, 40.5, -73.7, 40.92, 0.001, 0.001).unwrap();
        assert_eq!(g.num_cols, 600);
        assert_eq!(g.num_rows, 420);
        assert!(g.locate(-73.7001, 40.9199).is_some());
    }

    proptest! {
        #[test]
        fn centroid_locates_back(
            lon0 in -179.0f64..170.0,
            lat0 in -89.0f64..80.0,
            w in 1e-4f64..0.5,
            h in 1e-4f64..0.5,
            cols in 1usize..300,
            rows in 1usize..300,
            pick in 0usize..usize::MAX,
        ) {
            let g = GridSpec::new(lon0, lat0, w, h, cols, rows).unwrap();
            let cell = pick % g.num_cells();
            let (lon, lat) = g.centroid(cell).unwrap();
            prop_assert_eq!(g.locate(lon, lat), Some(cell));
        }
    }
}
