//! Gaussian moment containers and the small amount of symmetric linear
//! algebra the filter needs: symmetrization, a jittered SPD solve and a PSD
//! repair based on eigenvalue clipping.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{KbnnError, Result};
use crate::scalar::Scalar;

/// Lower bound applied to scalar variances and covariance diagonals.
pub const VARIANCE_FLOOR: f64 = 1e-9;

/// Jitter ladder for [`spd_solve`]: 0, then 1e-12 growing by x100 up to 1e-4.
pub const JITTER_LADDER: [f64; 6] = [0.0, 1e-12, 1e-10, 1e-8, 1e-6, 1e-4];

#[inline]
pub fn variance_floor<T: Scalar>() -> T {
    T::lit(VARIANCE_FLOOR)
}

/// Mean and variance of a univariate Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarGaussian<T> {
    pub mean: T,
    pub variance: T,
}

impl<T: Scalar> ScalarGaussian<T> {
    pub fn new(mean: T, variance: T) -> Self {
        Self { mean, variance }
    }

    /// Same Gaussian with the variance raised to at least [`VARIANCE_FLOOR`].
    pub fn floored(self) -> Self {
        Self {
            mean: self.mean,
            variance: self.variance.max(variance_floor()),
        }
    }

    pub fn std_dev(&self) -> T {
        self.variance.max(T::zero()).sqrt()
    }
}

/// Mean vector and covariance matrix of a multivariate Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianVector<T: Scalar> {
    pub mean: DVector<T>,
    pub covariance: DMatrix<T>,
}

impl<T: Scalar> GaussianVector<T> {
    /// Builds the pair, symmetrizing the covariance and flooring its diagonal.
    pub fn new(mean: DVector<T>, covariance: DMatrix<T>) -> Result<Self> {
        if covariance.nrows() != mean.len() {
            return Err(KbnnError::Dimension {
                context: "GaussianVector covariance",
                expected: mean.len(),
                actual: covariance.nrows(),
            });
        }
        let mut covariance = symmetrize(&covariance)?;
        floor_diagonal(&mut covariance);
        Ok(Self { mean, covariance })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Returns `(m + mᵀ) / 2`.
pub fn symmetrize<T: Scalar>(m: &DMatrix<T>) -> Result<DMatrix<T>> {
    if !m.is_square() {
        return Err(KbnnError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok((m + m.transpose()) * T::lit(0.5))
}

pub(crate) fn symmetrize_in_place<T: Scalar>(m: &mut DMatrix<T>) {
    let n = m.nrows();
    let half = T::lit(0.5);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (m[(i, j)] + m[(j, i)]) * half;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub(crate) fn floor_diagonal<T: Scalar>(m: &mut DMatrix<T>) {
    let floor = variance_floor::<T>();
    for i in 0..m.nrows() {
        if !(m[(i, i)] >= floor) {
            m[(i, i)] = floor;
        }
    }
}

/// Solves `(a + jitter·I)·x = b` through a Cholesky factorization, escalating
/// the jitter along [`JITTER_LADDER`] until the factorization succeeds.
pub fn spd_solve<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> Result<DMatrix<T>> {
    if !a.is_square() {
        return Err(KbnnError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    if b.nrows() != a.nrows() {
        return Err(KbnnError::Dimension {
            context: "spd_solve right-hand side",
            expected: a.nrows(),
            actual: b.nrows(),
        });
    }
    let k = a.nrows();
    for &jitter in JITTER_LADDER.iter() {
        let shifted = a + DMatrix::<T>::identity(k, k) * T::lit(jitter);
        if let Some(chol) = Cholesky::new(shifted) {
            let x = chol.solve(b);
            if x.iter().all(|v| v.is_finite()) {
                return Ok(x);
            }
        }
    }
    Err(KbnnError::Singular {
        jitter: *JITTER_LADDER.last().unwrap(),
    })
}

/// Cholesky-based positive semidefiniteness check with a small relative
/// tolerance so that singular PSD matrices (zero eigenvalues) pass.
pub fn is_psd<T: Scalar>(m: &DMatrix<T>) -> bool {
    if !m.is_square() {
        return false;
    }
    let n = m.nrows();
    if n == 0 {
        return true;
    }
    if m.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let scale = (0..n)
        .map(|i| m[(i, i)].abs())
        .fold(T::one(), |acc, v| acc.max(v));
    let tol = T::lit(64.0) * T::from_usize(n).unwrap() * <T as Scalar>::epsilon() * scale;
    let shifted = m + DMatrix::<T>::identity(n, n) * tol;
    Cholesky::new(shifted).is_some()
}

/// Projects a symmetric matrix onto the PSD cone (when needed) and floors its
/// diagonal.
pub fn clamp_psd<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    let floor = variance_floor::<T>();
    let diag_ok = (0..m.nrows()).all(|i| m[(i, i)] >= floor);
    if diag_ok && is_psd(m) {
        let mut out = m.clone();
        floor_diagonal(&mut out);
        return out;
    }
    let mut sym = m.clone();
    symmetrize_in_place(&mut sym);
    let eig = SymmetricEigen::new(sym);
    let clipped = eig.eigenvalues.map(|v| if v > T::zero() { v } else { T::zero() });
    let mut out = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    symmetrize_in_place(&mut out);
    floor_diagonal(&mut out);
    out
}
