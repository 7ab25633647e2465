//! Uneventful-scenario reconstruction from sensor rows.
//!
//! `A~ = U (P^T U)^{-1} P^T A`, evaluated as one LU factorisation of the
//! `q x q` interpolation matrix and an independent solve per column.
//! Reconstructed values are left unclipped, so negative demand is possible.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::container::{self, Dtype, Kind};
use crate::decomposition::OrthonormalBasis;
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::linalg;
use crate::matrix::ActivityMatrix;
use crate::sensors::SensorSet;
use crate::temporal::TemporalSpec;

/// Interpolation matrices with a larger 2-norm condition number are rejected.
pub const CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructedMatrix {
    pub values: DMatrix<f64>,
    pub sensors: SensorSet,
    pub basis_rank: usize,
    pub interpolation_condition: f64,
    pub grid: Option<GridSpec>,
    pub temporal: Option<TemporalSpec>,
}

fn interpolation_matrix(basis: &OrthonormalBasis, sensors: &SensorSet) -> Result<DMatrix<f64>> {
    let u = basis.leading(sensors.q())?;
    if let Some(&bad) = sensors.indices().iter().find(|&&i| i >= u.nrows()) {
        return Err(Error::arg(format!(
            "sensor row {bad} outside basis with {} rows",
            u.nrows()
        )));
    }
    Ok(sensors.gather(&u))
}

/// 2-norm condition number of `P^T U_q`; infinite when singular.
pub fn interpolation_condition(basis: &OrthonormalBasis, sensors: &SensorSet) -> Result<f64> {
    condition_number(&interpolation_matrix(basis, sensors)?)
}

pub(crate) fn condition_number(m: &DMatrix<f64>) -> Result<f64> {
    let sv = linalg::singular_values(m)?;
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(if min == 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    })
}

/// Reconstructs every column of `observed` from its sensor rows.
pub fn simulate_dense(
    basis: &OrthonormalBasis,
    sensors: &SensorSet,
    observed: &DMatrix<f64>,
) -> Result<ReconstructedMatrix> {
    let q = sensors.q();
    let u = basis.leading(q)?;
    if observed.nrows() != u.nrows() {
        return Err(Error::arg(format!(
            "observation has {} rows, basis has {}",
            observed.nrows(),
            u.nrows()
        )));
    }
    let system = interpolation_matrix(basis, sensors)?;
    let condition = condition_number(&system)?;
    if condition > CONDITION_LIMIT || !condition.is_finite() {
        return Err(Error::Numerical(format!(
            "interpolation matrix for {} sensors {:?} is singular (condition {condition:.3e})",
            sensors.method,
            sensors.indices()
        )));
    }
    let lu = system.lu();
    let x = u.nrows();
    let k = observed.ncols();
    let columns: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|j| {
            let rhs = DVector::from_fn(q, |r, _| observed[(sensors.indices()[r], j)]);
            let c = lu.solve(&rhs).expect("condition checked");
            (0..x)
                .map(|i| {
                    let mut acc = 0.0;
                    for l in 0..q {
                        acc += u[(i, l)] * c[l];
                    }
                    acc
                })
                .collect()
        })
        .collect();
    let values = DMatrix::from_vec(x, k, columns.concat());
    Ok(ReconstructedMatrix {
        values,
        sensors: sensors.clone(),
        basis_rank: q,
        interpolation_condition: condition,
        grid: basis.grid,
        temporal: None,
    })
}

pub fn simulate_uneventful(
    basis: &OrthonormalBasis,
    sensors: &SensorSet,
    observed: &ActivityMatrix,
) -> Result<ReconstructedMatrix> {
    if let Some(g) = basis.grid {
        if g != observed.grid {
            return Err(Error::arg("observation grid differs from the basis grid"));
        }
    }
    let mut recon = simulate_dense(basis, sensors, &observed.to_dense())?;
    recon.grid = Some(observed.grid);
    recon.temporal = Some(observed.temporal);
    Ok(recon)
}

#[derive(Debug, Serialize, Deserialize)]
struct ReconMeta {
    sensors: SensorSet,
    basis_rank: usize,
    interpolation_condition: f64,
    grid: Option<GridSpec>,
    temporal: Option<TemporalSpec>,
}

pub fn persist_reconstruction(recon: &ReconstructedMatrix, path: &Path) -> Result<()> {
    let meta = ReconMeta {
        sensors: recon.sensors.clone(),
        basis_rank: recon.basis_rank,
        interpolation_condition: recon.interpolation_condition,
        grid: recon.grid,
        temporal: recon.temporal,
    };
    container::write(
        path,
        Kind::Reconstruction,
        Dtype::F64,
        recon.values.nrows(),
        recon.values.ncols(),
        &container::encode_f64(&recon.values),
        &meta,
    )
}

pub fn load_reconstruction(path: &Path) -> Result<ReconstructedMatrix> {
    let loaded = container::read::<ReconMeta>(path, Kind::Reconstruction, Dtype::F64)?;
    let meta = loaded.meta;
    if let Some(g) = meta.grid {
        if g.num_cells() != loaded.rows {
            return Err(Error::format("reconstruction rows do not match grid"));
        }
    }
    if let Some(t) = meta.temporal {
        if t.num_units != loaded.cols {
            return Err(Error::format("reconstruction columns do not match window"));
        }
    }
    Ok(ReconstructedMatrix {
        values: container::decode_f64(&loaded.payload, loaded.rows, loaded.cols),
        sensors: meta.sensors,
        basis_rank: meta.basis_rank,
        interpolation_condition: meta.interpolation_condition,
        grid: meta.grid,
        temporal: meta.temporal,
    })
}
