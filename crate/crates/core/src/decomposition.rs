//! Dominant left singular vectors of the activity matrix.
//!
//! The matrix is not mean-centred: sensor rows must stay directly
//! observable counts.

use std::path::Path;

use nalgebra::{DMatrix, DMatrixView};
use serde::{Deserialize, Serialize};

use crate::container::{self, Dtype, Kind};
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::linalg;
use crate::matrix::ActivityMatrix;

/// Components with `sigma_i / sigma_1` below this are numerical noise.
pub const RELATIVE_RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalBasis {
    /// `x x r` matrix with orthonormal columns, dominant first.
    pub components: DMatrix<f64>,
    /// Non-increasing, length `r`.
    pub singular_values: Vec<f64>,
    /// `sigma_i^2 / ||A||_F^2` per retained component.
    pub variance_fraction: Vec<f64>,
    /// `||A||_F^2`, the denominator of every variance fraction.
    pub total_energy: f64,
    /// `(x, k)` of the decomposed matrix.
    pub source_dims: (usize, usize),
    pub grid: Option<GridSpec>,
}

impl OrthonormalBasis {
    /// Wraps externally computed components. Their orthonormality is not
    /// checked; singular values are unknown and recorded as one.
    pub fn from_components(components: DMatrix<f64>) -> Self {
        let (x, r) = components.shape();
        OrthonormalBasis {
            components,
            singular_values: vec![1.0; r],
            variance_fraction: vec![1.0 / r as f64; r],
            total_energy: r as f64,
            source_dims: (x, r),
            grid: None,
        }
    }

    /// Retained rank `r`.
    pub fn rank(&self) -> usize {
        self.components.ncols()
    }

    pub fn num_cells(&self) -> usize {
        self.components.nrows()
    }

    /// First `q` columns.
    pub fn leading(&self, q: usize) -> Result<DMatrixView<'_, f64>> {
        self.check_q(q)?;
        Ok(self.components.columns(0, q))
    }

    pub fn truncated(&self, q: usize) -> Result<OrthonormalBasis> {
        self.check_q(q)?;
        Ok(OrthonormalBasis {
            components: self.components.columns(0, q).into_owned(),
            singular_values: self.singular_values[..q].to_vec(),
            variance_fraction: self.variance_fraction[..q].to_vec(),
            total_energy: self.total_energy,
            source_dims: self.source_dims,
            grid: self.grid,
        })
    }

    /// Cumulative share of `||A||_F^2` captured by the first `q` components.
    pub fn explained_variance(&self, q: usize) -> Result<f64> {
        self.check_q(q)?;
        let captured: f64 = self.singular_values[..q].iter().map(|s| s * s).sum();
        Ok((captured / self.total_energy).min(1.0))
    }

    fn check_q(&self, q: usize) -> Result<()> {
        if q == 0 || q > self.rank() {
            return Err(Error::arg(format!(
                "component count {q} outside 1..={}",
                self.rank()
            )));
        }
        Ok(())
    }
}

pub fn compute_basis(a: &ActivityMatrix, max_rank: usize) -> Result<OrthonormalBasis> {
    let mut basis = compute_basis_dense(&a.to_dense(), max_rank)?;
    basis.grid = Some(a.grid);
    Ok(basis)
}

pub fn compute_basis_dense(a: &DMatrix<f64>, max_rank: usize) -> Result<OrthonormalBasis> {
    let (x, k) = a.shape();
    if x == 0 || k == 0 {
        return Err(Error::arg("cannot decompose an empty matrix"));
    }
    if max_rank == 0 || max_rank > x.min(k) {
        return Err(Error::arg(format!(
            "max rank {max_rank} outside 1..={}",
            x.min(k)
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("matrix has non-finite entries"));
    }
    let total_energy: f64 = a.iter().map(|v| v * v).sum();
    if total_energy == 0.0 {
        return Err(Error::Degenerate(
            "all-zero matrix has no components".into(),
        ));
    }

    let (left, sigma) = linalg::thin_left_svd(a)?;

    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]).then(i.cmp(&j)));
    let top = sigma[order[0]];
    let numerical_rank = order
        .iter()
        .take_while(|&&i| sigma[i] / top >= RELATIVE_RANK_TOL)
        .count();
    let r = max_rank.min(numerical_rank);

    let mut components = DMatrix::zeros(x, r);
    let mut singular_values = Vec::with_capacity(r);
    for (c, &src) in order.iter().take(r).enumerate() {
        let mut col = left.column(src).into_owned();
        // largest-magnitude entry positive, first such row on ties
        let mut pivot = 0;
        for i in 1..x {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
        components.set_column(c, &col);
        singular_values.push(sigma[src]);
    }
    let variance_fraction = singular_values
        .iter()
        .map(|s| s * s / total_energy)
        .collect();
    Ok(OrthonormalBasis {
        components,
        singular_values,
        variance_fraction,
        total_energy,
        source_dims: (x, k),
        grid: None,
    })
}

/// Rank-`q` orthogonal projection `U_q U_q^T A`.
pub fn project(basis: &OrthonormalBasis, q: usize, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let u = basis.leading(q)?;
    if a.nrows() != u.nrows() {
        return Err(Error::arg(format!(
            "matrix has {} rows, basis has {}",
            a.nrows(),
            u.nrows()
        )));
    }
    let coeffs = u.transpose() * a;
    Ok(u * coeffs)
}

#[derive(Debug, Serialize, Deserialize)]
struct BasisMeta {
    singular_values: Vec<f64>,
    variance_fraction: Vec<f64>,
    total_energy: f64,
    source_dims: (usize, usize),
    grid: Option<GridSpec>,
}

pub fn persist_basis(basis: &OrthonormalBasis, path: &Path) -> Result<()> {
    let meta = BasisMeta {
        singular_values: basis.singular_values.clone(),
        variance_fraction: basis.variance_fraction.clone(),
        total_energy: basis.total_energy,
        source_dims: basis.source_dims,
        grid: basis.grid,
    };
    container::write(
        path,
        Kind::Basis,
        Dtype::F64,
        basis.num_cells(),
        basis.rank(),
        &container::encode_f64(&basis.components),
        &meta,
    )
}

pub fn load_basis(path: &Path) -> Result<OrthonormalBasis> {
    let loaded = container::read::<BasisMeta>(path, Kind::Basis, Dtype::F64)?;
    let meta = loaded.meta;
    if meta.singular_values.len() != loaded.cols || meta.variance_fraction.len() != loaded.cols {
        return Err(Error::format(
            "singular value count does not match basis columns",
        ));
    }
    if meta.source_dims.0 != loaded.rows {
        return Err(Error::format("basis rows do not match source dimensions"));
    }
    if let Some(g) = meta.grid {
        if g.num_cells() != loaded.rows {
            return Err(Error::format("basis rows do not match grid"));
        }
    }
    Ok(OrthonormalBasis {
        components: container::decode_f64(&loaded.payload, loaded.rows, loaded.cols),
        singular_values: meta.singular_values,
        variance_fraction: meta.variance_fraction,
        total_energy: meta.total_energy,
        source_dims: meta.source_dims,
        grid: meta.grid,
    })
}

/// `max |U^T U - I|`.
pub fn orthonormality_error(u: &DMatrix<f64>) -> f64 {
    let gram = u.transpose() * u;
    let mut worst: f64 = 0.0;
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_int(x: usize, k: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(x, k, |_, _| rng.random_range(0..50) as f64)
    }

    #[test]
    fn low_rank_tall_matrices_are_spanned() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for rank in 1..=4 {
            for _ in 0..25 {
                let x = rng.random_range(rank + 1..=300);
                let k = rng.random_range(rank..=60).min(x);
                let left = DMatrix::from_fn(x, rank, |_, _| rng.random_range(0..=20) as f64);
                let right = DMatrix::from_fn(rank, k, |_, _| rng.random_range(1..=9) as f64);
                let a = left * right;
                let b = compute_basis_dense(&a, rank).unwrap();
                let residual = &a - project(&b, b.rank(), &a).unwrap();
                assert!(residual.norm() <= 1e-10 * a.norm(), "rank {rank}, {x}x{k}");
            }
        }
    }

    #[test]
    fn diagonal_matrix() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let b = compute_basis_dense(&a, 2).unwrap();
        assert_eq!(b.rank(), 2);
        assert!((b.singular_values[0] - 2.0).abs() < 1e-14);
        assert!((b.singular_values[1] - 1.0).abs() < 1e-14);
        assert!((b.components.clone() - DMatrix::identity(2, 2)).abs().max() < 1e-14);
        assert!((b.explained_variance(1).unwrap() - 0.8).abs() < 1e-14);
        assert!((b.explained_variance(2).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn repeated_column_is_rank_one() {
        let c = [3.0, -4.0, 0.0, 12.0];
        let a = DMatrix::from_fn(4, 5, |i, _| c[i]);
        let b = compute_basis_dense(&a, 4).unwrap();
        assert_eq!(b.rank(), 1);
        let norm = 13.0;
        for (i, v) in c.iter().enumerate() {
            assert!((b.components[(i, 0)] - v / norm).abs() < 1e-12);
        }
        // sign convention: the 12 entry dominates and is positive
        assert!(b.components[(3, 0)] > 0.0);
        assert!((b.explained_variance(1).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sign_convention_flips_negative_pivot() {
        let c = [1.0, -5.0, 2.0];
        let a = DMatrix::from_fn(3, 2, |i, j| c[i] * (j + 1) as f64);
        let b = compute_basis_dense(&a, 1).unwrap();
        assert!(b.components[(1, 0)] > 0.0);
        assert!(b.components[(0, 0)] < 0.0);
    }

    #[test]
    fn all_zero_is_degenerate() {
        let a = DMatrix::zeros(4, 3);
        assert!(matches!(
            compute_basis_dense(&a, 2),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn rank_bounds() {
        let a = random_int(5, 3, 1);
        assert!(compute_basis_dense(&a, 0).is_err());
        assert!(compute_basis_dense(&a, 4).is_err());
        let b = compute_basis_dense(&a, 3).unwrap();
        assert!(b.explained_variance(0).is_err());
        assert!(b.explained_variance(4).is_err());
    }

    #[test]
    fn wide_matrix_route() {
        let a = random_int(4, 9, 7);
        let b = compute_basis_dense(&a, 4).unwrap();
        assert!(orthonormality_error(&b.components) < 1e-12);
        let p = project(&b, 4, &a).unwrap();
        assert!((p - &a).abs().max() < 1e-9 * a.abs().max());
    }

    #[test]
    fn eckart_young_residual() {
        let a = random_int(30, 8, 3);
        let b = compute_basis_dense(&a, 8).unwrap();
        for q in 1..=8 {
            let p = project(&b, q, &a).unwrap();
            let resid = (&a - p).norm_squared();
            let tail: f64 = b.singular_values[q..].iter().map(|s| s * s).sum();
            assert!((resid - tail).abs() <= 1e-9 * b.total_energy, "q={q}");
        }
    }

    #[test]
    fn explained_variance_is_monotone() {
        let a = random_int(40, 10, 5);
        let b = compute_basis_dense(&a, 10).unwrap();
        let ev: Vec<f64> = (1..=10).map(|q| b.explained_variance(q).unwrap()).collect();
        assert!(ev.windows(2).all(|w| w[0] <= w[1]));
        assert!((ev[9] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projection_dimension_mismatch() {
        let b = compute_basis_dense(&random_int(6, 3, 2), 2).unwrap();
        assert!(project(&b, 1, &DMatrix::zeros(5, 3)).is_err());
    }

    #[test]
    fn deterministic_bits() {
        let a = random_int(60, 12, 11);
        let b1 = compute_basis_dense(&a, 6).unwrap();
        let b2 = compute_basis_dense(&a, 6).unwrap();
        assert_eq!(b1, b2);
    }

    #[test]
    fn basis_round_trip() {
        let a = random_int(12, 5, 9);
        let b = compute_basis_dense(&a, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("basis.bin");
        persist_basis(&b, &path).unwrap();
        assert_eq!(load_basis(&path).unwrap(), b);
    }
}
