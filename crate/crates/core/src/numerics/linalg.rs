//! Dense symmetric linear algebra for the small `d` used throughout
//! (the reproduction scenarios have `d = 2`).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type MatrixD = DMatrix<f64>;
pub type VectorD = DVector<f64>;

/// Relative asymmetry tolerated by [`is_symmetric`].
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Condition numbers above this are treated as singular by [`invert_spd`].
pub const MAX_CONDITION: f64 = 1e12;

/// Smallest and largest eigenvalue of a symmetric matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenBounds {
    /// `m̂`
    pub smallest: f64,
    /// `M̂`
    pub largest: f64,
}

impl EigenBounds {
    pub fn is_positive_definite(&self) -> bool {
        self.smallest > 0.0
    }

    /// `M̂ / m̂`; infinite when the matrix is not positive definite.
    pub fn condition(&self) -> f64 {
        if self.smallest > 0.0 {
            self.largest / self.smallest
        } else {
            f64::INFINITY
        }
    }
}

/// Kahan–Babuška (Neumaier) running sum.
#[derive(Debug, Default, Clone, Copy)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// `(1/n) Σ x xᵀ` with compensated accumulation. Only the upper triangle is
/// accumulated and then mirrored, so the result is exactly symmetric.
pub fn second_moment<I, V>(features: I) -> Result<MatrixD>
where
    I: IntoIterator<Item = V>,
    V: AsRef<[f64]>,
{
    let mut iter = features.into_iter();
    let first = iter
        .next()
        .ok_or_else(|| Error::invalid("second moment of an empty feature list"))?;
    let d = first.as_ref().len();
    if d == 0 {
        return Err(Error::invalid("zero-dimensional features"));
    }
    let mut acc = vec![CompensatedSum::default(); d * (d + 1) / 2];
    let mut n = 0usize;
    let mut accumulate = |x: &[f64]| -> Result<()> {
        if x.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: x.len(),
            });
        }
        let mut k = 0;
        for i in 0..d {
            for j in i..d {
                acc[k].add(x[i] * x[j]);
                k += 1;
            }
        }
        n += 1;
        Ok(())
    };
    accumulate(first.as_ref())?;
    for x in iter {
        accumulate(x.as_ref())?;
    }
    let inv_n = 1.0 / n as f64;
    let mut m = MatrixD::zeros(d, d);
    let mut k = 0;
    for i in 0..d {
        for j in i..d {
            let v = acc[k].value() * inv_n;
            m[(i, j)] = v;
            m[(j, i)] = v;
            k += 1;
        }
    }
    Ok(m)
}

/// Largest `|a_ij - a_ji|`.
pub fn asymmetry(m: &MatrixD) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn is_symmetric(m: &MatrixD) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.amax();
    asymmetry(m) <= SYMMETRY_TOL * scale
}

fn check_symmetric(m: &MatrixD) -> Result<()> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    if !is_symmetric(m) {
        return Err(Error::NonSymmetric(asymmetry(m)));
    }
    Ok(())
}

/// Average `m` with its transpose.
pub fn symmetrize(m: &MatrixD) -> MatrixD {
    (m + m.transpose()) * 0.5
}

/// Extreme eigenvalues of a symmetric matrix.
pub fn eigen_bounds(m: &MatrixD) -> Result<EigenBounds> {
    check_symmetric(m)?;
    let eig = SymmetricEigen::new(symmetrize(m));
    let smallest = eig.eigenvalues.min();
    let largest = eig.eigenvalues.max();
    Ok(EigenBounds { smallest, largest })
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
///
/// Fails with [`Error::SingularMatrix`] when a pivot is non-positive or the
/// condition number exceeds [`MAX_CONDITION`].
pub fn invert_spd(m: &MatrixD) -> Result<MatrixD> {
    check_symmetric(m)?;
    let bounds = eigen_bounds(m)?;
    if !bounds.is_positive_definite() {
        return Err(Error::SingularMatrix(format!(
            "smallest eigenvalue {:e} is not positive",
            bounds.smallest
        )));
    }
    if bounds.condition() > MAX_CONDITION {
        return Err(Error::SingularMatrix(format!(
            "condition number {:e} exceeds {MAX_CONDITION:e}",
            bounds.condition()
        )));
    }
    let chol = nalgebra::Cholesky::new(symmetrize(m))
        .ok_or_else(|| Error::SingularMatrix("non-positive Cholesky pivot".into()))?;
    Ok(symmetrize(&chol.inverse()))
}

/// `‖a - b‖_max`
pub fn max_abs_diff(a: &MatrixD, b: &MatrixD) -> f64 {
    (a - b).amax()
}

/// Row-major nested vectors, the layout used in every JSON document.
pub fn matrix_rows(m: &MatrixD) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<MatrixD> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != ncols) {
        return Err(Error::DimensionMismatch {
            expected: ncols,
            found: bad.len(),
        });
    }
    Ok(MatrixD::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// Serde adapters so matrices and vectors appear as plain nested arrays.
pub mod serde_matrix {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &MatrixD, s: S) -> Result<S::Ok, S::Error> {
        matrix_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<MatrixD, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        matrix_from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

pub mod serde_vector {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &VectorD, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<VectorD, D::Error> {
        Ok(VectorD::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

pub mod serde_vectors {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[VectorD], s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<&[f64]> = v.iter().map(|x| x.as_slice()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<VectorD>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        Ok(rows.into_iter().map(VectorD::from_vec).collect())
    }
}
