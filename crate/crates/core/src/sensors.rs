//! Sensor placement.
//!
//! A sensor set is an ordered list of distinct row indices of the basis.
//! The selection operator `P` is never formed; every `P^T M` is a row
//! gather by index.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DMatrixView, DVector};
use serde::{Deserialize, Serialize};

use crate::decomposition::OrthonormalBasis;
use crate::error::{Error, Result};
use crate::grid::GridSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMethod {
    /// Greedy residual recursion of the discrete empirical interpolation method.
    #[default]
    Deim,
    /// Independent per-column argmax, next unused row on collision.
    Naive,
}

impl FromStr for SelectionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "deim" => Ok(SelectionMethod::Deim),
            "naive" => Ok(SelectionMethod::Naive),
            other => Err(Error::arg(format!("unknown selection method '{other}'"))),
        }
    }
}

impl fmt::Display for SelectionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectionMethod::Deim => f.write_str("deim"),
            SelectionMethod::Naive => f.write_str("naive"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorSet {
    indices: Vec<usize>,
    pub method: SelectionMethod,
}

impl SensorSet {
    pub fn new(indices: Vec<usize>, method: SelectionMethod, num_rows: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::arg("sensor set is empty"));
        }
        let mut seen = HashSet::with_capacity(indices.len());
        for &i in &indices {
            if i >= num_rows {
                return Err(Error::arg(format!("sensor row {i} outside 0..{num_rows}")));
            }
            if !seen.insert(i) {
                return Err(Error::arg(format!("sensor row {i} repeated")));
            }
        }
        Ok(SensorSet { indices, method })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn q(&self) -> usize {
        self.indices.len()
    }

    pub fn contains(&self, row: usize) -> bool {
        self.indices.contains(&row)
    }

    /// The first `p` sensors.
    pub fn prefix(&self, p: usize) -> Result<SensorSet> {
        if p == 0 || p > self.q() {
            return Err(Error::arg(format!("prefix {p} outside 1..={}", self.q())));
        }
        Ok(SensorSet {
            indices: self.indices[..p].to_vec(),
            method: self.method,
        })
    }

    /// `P^T M`: the sensor rows of `m`, in selection order.
    pub fn gather(&self, m: &DMatrixView<'_, f64>) -> DMatrix<f64> {
        DMatrix::from_fn(self.q(), m.ncols(), |r, c| m[(self.indices[r], c)])
    }
}

pub fn select_sensors(
    basis: &OrthonormalBasis,
    q: usize,
    method: SelectionMethod,
) -> Result<SensorSet> {
    match method {
        SelectionMethod::Deim => select_sensors_deim(basis, q),
        SelectionMethod::Naive => select_sensors_naive(basis, q),
    }
}

fn check_q(basis: &OrthonormalBasis, q: usize) -> Result<()> {
    if q == 0 || q > basis.rank() {
        return Err(Error::arg(format!(
            "cannot place {q} sensors with a rank-{} basis",
            basis.rank()
        )));
    }
    Ok(())
}

/// Lowest index of the largest `|v_i|` among rows accepted by `allowed`.
fn argmax_abs(
    v: impl Iterator<Item = f64>,
    allowed: impl Fn(usize) -> bool,
) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, x) in v.enumerate() {
        if !allowed(i) {
            continue;
        }
        let a = x.abs();
        if best.is_none_or(|(_, b)| a > b) {
            best = Some((i, a));
        }
    }
    best
}

pub fn select_sensors_deim(basis: &OrthonormalBasis, q: usize) -> Result<SensorSet> {
    check_q(basis, q)?;
    let u = &basis.components;
    let x = u.nrows();
    let (first, _) = argmax_abs(u.column(0).iter().copied(), |_| true).expect("non-empty column");
    let mut picks = vec![first];
    for l in 1..q {
        let system = DMatrix::from_fn(l, l, |r, c| u[(picks[r], c)]);
        let rhs = DVector::from_fn(l, |r, _| u[(picks[r], l)]);
        let coeffs = system.lu().solve(&rhs).ok_or_else(|| {
            Error::Numerical(format!(
                "interpolation system singular at step {} (sensors {:?})",
                l + 1,
                picks
            ))
        })?;
        let residual = u.column(l) - u.columns(0, l) * coeffs;
        let (next, size) =
            argmax_abs(residual.iter().copied(), |_| true).expect("non-empty column");
        if size == 0.0 || !size.is_finite() || picks.contains(&next) {
            return Err(Error::Numerical(format!(
                "residual vanished at step {} (sensors {:?})",
                l + 1,
                picks
            )));
        }
        picks.push(next);
    }
    SensorSet::new(picks, SelectionMethod::Deim, x)
}

pub fn select_sensors_naive(basis: &OrthonormalBasis, q: usize) -> Result<SensorSet> {
    check_q(basis, q)?;
    let u = &basis.components;
    let mut picks: Vec<usize> = Vec::with_capacity(q);
    for l in 0..q {
        let (row, _) = argmax_abs(u.column(l).iter().copied(), |i| !picks.contains(&i))
            .ok_or_else(|| Error::arg("more sensors than rows"))?;
        picks.push(row);
    }
    SensorSet::new(picks, SelectionMethod::Naive, u.nrows())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorLocation {
    /// 1-based selection order.
    pub order: usize,
    pub cell_id: usize,
    pub longitude: f64,
    pub latitude: f64,
}

pub fn sensor_geolocation(sensors: &SensorSet, grid: &GridSpec) -> Result<Vec<SensorLocation>> {
    sensors
        .indices()
        .iter()
        .enumerate()
        .map(|(k, &cell)| {
            let (longitude, latitude) = grid.centroid(cell)?;
            Ok(SensorLocation {
                order: k + 1,
                cell_id: cell,
                longitude,
                latitude,
            })
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SensorFile {
    pub method: SelectionMethod,
    pub q: usize,
    pub indices: Vec<usize>,
    pub num_cells: usize,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub condition: Option<f64>,
}

pub fn save_sensors(
    sensors: &SensorSet,
    num_cells: usize,
    grid: Option<GridSpec>,
    condition: Option<f64>,
    path: &Path,
) -> Result<()> {
    let file = SensorFile {
        method: sensors.method,
        q: sensors.q(),
        indices: sensors.indices().to_vec(),
        num_cells,
        grid,
        condition,
    };
    let json = serde_json::to_vec_pretty(&file).map_err(|e| Error::format(e.to_string()))?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_sensors(path: &Path) -> Result<(SensorSet, SensorFile)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let file: SensorFile =
        serde_json::from_slice(&bytes).map_err(|e| Error::format(e.to_string()))?;
    if file.q != file.indices.len() {
        return Err(Error::format("sensor count does not match index list"));
    }
    let set = SensorSet::new(file.indices.clone(), file.method, file.num_cells)
        .map_err(|e| Error::format(e.to_string()))?;
    Ok((set, file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::compute_basis_dense;

    fn basis_from(u: DMatrix<f64>) -> OrthonormalBasis {
        OrthonormalBasis::from_components(u)
    }

    #[test]
    fn standard_basis_vectors() {
        let u = DMatrix::from_fn(5, 2, |i, j| if i == j { 1.0 } else { 0.0 });
        let b = basis_from(u);
        assert_eq!(select_sensors_deim(&b, 2).unwrap().indices(), &[0, 1]);
        assert_eq!(select_sensors_naive(&b, 2).unwrap().indices(), &[0, 1]);
    }

    #[test]
    fn hand_executed_recursion() {
        let u = DMatrix::from_row_slice(3, 2, &[0.6, 0.8, 0.8, -0.6, 0.0, 0.0]);
        let s = select_sensors_deim(&basis_from(u), 2).unwrap();
        assert_eq!(s.indices(), &[1, 0]);
        assert_eq!(s.method, SelectionMethod::Deim);
    }

    #[test]
    fn naive_collision_takes_next_largest_unused() {
        // row 2 is the argmax of both columns
        let u = DMatrix::from_row_slice(4, 2, &[0.1, 0.5, 0.2, -0.3, 0.9, 0.7, 0.3, 0.1]);
        let s = select_sensors_naive(&basis_from(u), 2).unwrap();
        assert_eq!(s.indices(), &[2, 0]);
    }

    #[test]
    fn ties_pick_lowest_row() {
        let u = DMatrix::from_row_slice(3, 1, &[0.5, -0.5, 0.5]);
        assert_eq!(
            select_sensors_deim(&basis_from(u.clone()), 1)
                .unwrap()
                .indices(),
            &[0]
        );
        assert_eq!(
            select_sensors_naive(&basis_from(u), 1).unwrap().indices(),
            &[0]
        );
    }

    #[test]
    fn too_many_sensors() {
        let u = DMatrix::from_fn(5, 2, |i, j| if i == j { 1.0 } else { 0.0 });
        let b = basis_from(u);
        assert!(matches!(
            select_sensors_deim(&b, 3),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            select_sensors_naive(&b, 3),
            Err(Error::Argument(_))
        ));
        assert!(select_sensors_deim(&b, 0).is_err());
    }

    #[test]
    fn singular_recursion_is_reported() {
        // not orthonormal: second column equals the first
        let u = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let err = select_sensors_deim(&basis_from(u), 2).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)));
        assert!(err.to_string().contains("step 2"), "{err}");
    }

    #[test]
    fn deim_prefix_consistency() {
        let a = DMatrix::from_fn(40, 9, |i, j| {
            (((i * 7 + j * 13) % 11) as f64) + (i % 3) as f64 * j as f64
        });
        let b = compute_basis_dense(&a, 8).unwrap();
        let full = select_sensors_deim(&b, b.rank()).unwrap();
        for p in 1..=b.rank() {
            assert_eq!(select_sensors_deim(&b, p).unwrap(), full.prefix(p).unwrap());
        }
    }

    #[test]
    fn set_validation() {
        assert!(SensorSet::new(vec![1, 1], SelectionMethod::Deim, 4).is_err());
        assert!(SensorSet::new(vec![4], SelectionMethod::Deim, 4).is_err());
        assert!(SensorSet::new(vec![], SelectionMethod::Deim, 4).is_err());
    }

    #[test]
    fn geolocation_preserves_order() {
        let g = GridSpec::new(10.0, 20.0, 0.5, 0.25, 4, 3).unwrap();
        let s = SensorSet::new(vec![0, 5], SelectionMethod::Naive, 12).unwrap();
        let loc = sensor_geolocation(&s, &g).unwrap();
        assert_eq!(loc[0].cell_id, 0);
        assert_eq!((loc[0].longitude, loc[0].latitude), (10.25, 20.125));
        assert_eq!(loc[1].order, 2);
        assert_eq!(g.locate(loc[1].longitude, loc[1].latitude), Some(5));
        let bad = SensorSet::new(vec![12], SelectionMethod::Naive, 13).unwrap();
        assert!(sensor_geolocation(&bad, &g).is_err());
    }

    #[test]
    fn sensor_file_round_trip() {
        let s = SensorSet::new(vec![3, 1, 7], SelectionMethod::Deim, 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.json");
        save_sensors(&s, 9, None, Some(2.5), &p).unwrap();
        let (back, file) = load_sensors(&p).unwrap();
        assert_eq!(back, s);
        assert_eq!(file.condition, Some(2.5));
    }
}
