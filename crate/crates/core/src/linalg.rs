//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative jitter added to the diagonal on the single retry after a failed
/// factorization: `JITTER_SCALE * trace / d`.
pub const JITTER_SCALE: f64 = 1e-10;

/// Tolerance used when checking that a matrix is symmetric.
pub const SYMMETRY_TOL: f64 = 1e-9;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// Largest absolute asymmetry `|A_ij - A_ji|`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn is_symmetric(m: &DMatrix<f64>) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = 1.0 + m.amax();
    asymmetry(m) <= SYMMETRY_TOL * scale
}

/// Cholesky factor of a symmetric positive definite matrix.
///
/// Factoring is attempted once as given and, on failure, once more with
/// `JITTER_SCALE * trace / d` added to the diagonal. A second failure is
/// reported as [`Error::Singular`].
#[derive(Clone, Debug)]
pub struct PdFactor {
    chol: Cholesky<f64, Dyn>,
    jittered: bool,
}

impl PdFactor {
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::domain("matrix must be square"));
        }
        if !is_symmetric(m) {
            return Err(Error::domain("matrix must be symmetric"));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("matrix has non-finite entries".into()));
        }
        if let Some(chol) = Cholesky::new(m.clone()) {
            return Ok(PdFactor {
                chol,
                jittered: false,
            });
        }
        let d = m.nrows().max(1) as f64;
        let jitter = JITTER_SCALE * m.trace().abs() / d;
        let mut shifted = m.clone();
        for i in 0..m.nrows() {
            shifted[(i, i)] += jitter;
        }
        Cholesky::new(shifted)
            .map(|chol| PdFactor {
                chol,
                jittered: true,
            })
            .ok_or(Error::Singular)
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    /// Whether the jitter retry was needed.
    pub fn jittered(&self) -> bool {
        self.jittered
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        if rhs.len() != self.dim() {
            return Err(Error::domain("right-hand side has wrong dimension"));
        }
        Ok(self.chol.solve(rhs))
    }

    /// `x^T A^{-1} x`, clamped at zero against round-off.
    pub fn inv_quadratic(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::domain("vector has wrong dimension"));
        }
        let v = DVector::from_column_slice(x);
        let w = self.chol.solve(&v);
        Ok(v.dot(&w).max(0.0))
    }
}

/// Operator (spectral) norm of a symmetric matrix: the largest absolute
/// eigenvalue.
pub fn sym_op_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let eig = SymmetricEigen::new(m.clone());
    eig.eigenvalues
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn sym_min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(m.clone());
    eig.eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// `‖x‖_A = sqrt(x^T A x)`.
pub fn weighted_norm(x: &DVector<f64>, a: &DMatrix<f64>) -> f64 {
    libm::sqrt((a * x).dot(x).max(0.0))
}
