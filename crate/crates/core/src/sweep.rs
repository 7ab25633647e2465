//! Sensor-count selection on an external validation set.
//!
//! Basis and sensors come from the training matrix only. The validation
//! matrix is reconstructed with the training basis from its own values at
//! the training sensor rows, and the count with the lowest validation RMSE
//! wins.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::decomposition::{compute_basis_dense, OrthonormalBasis};
use crate::detection::overall_rmse;
use crate::error::{Error, Result};
use crate::matrix::ActivityMatrix;
use crate::sensors::{select_sensors, SelectionMethod};
use crate::simulation::{interpolation_condition, simulate_dense};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub q: usize,
    pub train_rmse: f64,
    pub validation_rmse: f64,
    pub condition: f64,
    pub valid: bool,
    /// The count exceeds the numerical rank of the training basis.
    pub above_rank: bool,
    /// Why the point is invalid.
    pub note: Option<String>,
}

impl SweepPoint {
    /// Invalid for a numerical reason (singular or ill-conditioned
    /// interpolation system) rather than a rank limit.
    pub fn guard_fired(&self) -> bool {
        !self.valid && !self.above_rank
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCurve {
    pub points: Vec<SweepPoint>,
    pub q_range: (usize, usize),
    pub method: SelectionMethod,
    pub chosen_q: Option<usize>,
}

impl SweepCurve {
    pub fn invalid_points(&self) -> impl Iterator<Item = &SweepPoint> {
        self.points.iter().filter(|p| !p.valid)
    }

    /// CSV with columns `q,train_rmse,val_rmse,condition,valid`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("q,train_rmse,val_rmse,condition,valid\n");
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                p.q, p.train_rmse, p.validation_rmse, p.condition, p.valid
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OptimalCount {
    pub q: usize,
    /// The minimum sits on an end of the swept range, so the true optimum
    /// may lie outside it.
    pub on_boundary: bool,
}

pub fn sweep_sensor_counts(
    train: &ActivityMatrix,
    validation: &ActivityMatrix,
    q_min: usize,
    q_max: usize,
    method: SelectionMethod,
) -> Result<SweepCurve> {
    if train.grid != validation.grid {
        return Err(Error::arg("training and validation grids differ"));
    }
    sweep_dense(
        &train.to_dense(),
        &validation.to_dense(),
        q_min,
        q_max,
        method,
    )
}

pub fn sweep_dense(
    train: &DMatrix<f64>,
    validation: &DMatrix<f64>,
    q_min: usize,
    q_max: usize,
    method: SelectionMethod,
) -> Result<SweepCurve> {
    check_range(train, q_min, q_max)?;
    let basis = compute_basis_dense(train, q_max)?;
    sweep_with_basis(&basis, train, validation, q_min, q_max, method)
}

fn check_range(train: &DMatrix<f64>, q_min: usize, q_max: usize) -> Result<()> {
    if q_min == 0 || q_min > q_max {
        return Err(Error::arg(format!("invalid sweep range {q_min}..={q_max}")));
    }
    if q_max > train.nrows().min(train.ncols()) {
        return Err(Error::arg(format!(
            "q_max {q_max} exceeds min(x, k) = {}",
            train.nrows().min(train.ncols())
        )));
    }
    Ok(())
}

/// Sweep reusing a basis already fitted to `train` (singular vectors nest,
/// so one decomposition at `q_max` serves every count).
pub fn sweep_with_basis(
    basis: &OrthonormalBasis,
    train: &DMatrix<f64>,
    validation: &DMatrix<f64>,
    q_min: usize,
    q_max: usize,
    method: SelectionMethod,
) -> Result<SweepCurve> {
    check_range(train, q_min, q_max)?;
    if validation.nrows() != train.nrows() || basis.num_cells() != train.nrows() {
        return Err(Error::arg(format!(
            "row mismatch: train {}, validation {}, basis {}",
            train.nrows(),
            validation.nrows(),
            basis.num_cells()
        )));
    }
    let points: Vec<SweepPoint> = (q_min..=q_max)
        .into_par_iter()
        .map(|q| evaluate(basis, train, validation, q, method))
        .collect();
    let mut curve = SweepCurve {
        points,
        q_range: (q_min, q_max),
        method,
        chosen_q: None,
    };
    curve.chosen_q = optimal_sensor_count(&curve).ok().map(|o| o.q);
    Ok(curve)
}

fn evaluate(
    basis: &OrthonormalBasis,
    train: &DMatrix<f64>,
    validation: &DMatrix<f64>,
    q: usize,
    method: SelectionMethod,
) -> SweepPoint {
    let invalid = |note: String, condition: f64, above_rank: bool| SweepPoint {
        q,
        train_rmse: f64::NAN,
        validation_rmse: f64::NAN,
        condition,
        valid: false,
        above_rank,
        note: Some(note),
    };
    if q > basis.rank() {
        return invalid(
            format!("exceeds numerical rank {}", basis.rank()),
            f64::NAN,
            true,
        );
    }
    let mut condition = f64::INFINITY;
    let mut run = || -> Result<SweepPoint> {
        let sensors = select_sensors(basis, q, method)?;
        condition = interpolation_condition(basis, &sensors)?;
        let fit = simulate_dense(basis, &sensors, train)?;
        let check = simulate_dense(basis, &sensors, validation)?;
        Ok(SweepPoint {
            q,
            train_rmse: overall_rmse(train, &fit.values)?,
            validation_rmse: overall_rmse(validation, &check.values)?,
            condition,
            valid: true,
            above_rank: false,
            note: None,
        })
    };
    match run() {
        Ok(p) => p,
        Err(e) => {
            log::warn!("sweep point q={q} invalid: {e}");
            invalid(e.to_string(), condition, false)
        }
    }
}

/// Argmin of the validation RMSE over valid points; ties go to the smaller count.
pub fn optimal_sensor_count(curve: &SweepCurve) -> Result<OptimalCount> {
    let best = curve
        .points
        .iter()
        .filter(|p| p.valid && p.validation_rmse.is_finite())
        .min_by(|a, b| {
            a.validation_rmse
                .total_cmp(&b.validation_rmse)
                .then(a.q.cmp(&b.q))
        })
        .ok_or(Error::EmptyCurve)?;
    let (lo, hi) = curve.q_range;
    let on_boundary = best.q == hi || (best.q == lo && lo > 1);
    Ok(OptimalCount {
        q: best.q,
        on_boundary,
    })
}
