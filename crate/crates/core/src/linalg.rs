//! Singular value decompositions through `faer`.
//!
//! nalgebra's bidiagonal SVD can return a wrong factorization for
//! rank-deficient inputs, which activity matrices often are. `faer` is
//! built without its rayon feature, so results do not depend on the
//! thread count.

use faer::Mat;
use nalgebra::DMatrix;

use crate::error::{Error, Result};

fn to_faer(m: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Left singular vectors and singular values, non-increasing.
pub(crate) fn thin_left_svd(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let svd = to_faer(m)
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("SVD did not converge: {e:?}")))?;
    let u = svd.U();
    let s = svd.S().column_vector();
    let left = DMatrix::from_fn(u.nrows(), u.ncols(), |i, j| u[(i, j)]);
    Ok((left, (0..s.nrows()).map(|i| s[i]).collect()))
}

pub(crate) fn singular_values(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    to_faer(m)
        .singular_values()
        .map_err(|e| Error::Numerical(format!("SVD did not converge: {e:?}")))
}
