//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen, SVD};
use thiserror::Error;

use crate::Real;

const MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("eigenvalue iteration did not converge")]
    EigenFailure,
    #[error("singular value decomposition did not converge")]
    SvdFailure,
    #[error("linear system is singular")]
    Singular,
}

pub fn all_finite<T: Real>(m: &DMatrix<T>) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// `(M + M') / 2`.
pub fn symmetrize<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::lit(0.5)
}

pub fn sym_eigenvalues<T: Real>(m: &DMatrix<T>) -> Option<DVector<T>> {
    SymmetricEigen::try_new(symmetrize(m), T::default_epsilon(), MAX_SWEEPS).map(|e| e.eigenvalues)
}

pub fn sym_min_eigenvalue<T: Real>(m: &DMatrix<T>) -> Option<T> {
    sym_eigenvalues(m).map(|e| e.min())
}

pub fn sym_max_eigenvalue<T: Real>(m: &DMatrix<T>) -> Option<T> {
    sym_eigenvalues(m).map(|e| e.max())
}

/// Largest eigenvalue modulus, from a real Schur decomposition.
pub fn spectral_radius<T: Real>(m: &DMatrix<T>) -> Result<T, LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::NotSquare { rows: m.nrows(), cols: m.ncols() });
    }
    if m.is_empty() {
        return Ok(T::zero());
    }
    let schur = Schur::try_new(m.clone(), T::default_epsilon(), MAX_SWEEPS).ok_or(LinalgError::EigenFailure)?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|z| (z.re * z.re + z.im * z.im).sqrt())
        .fold(T::zero(), |acc, r| acc.max(r)))
}

/// 2-norm condition number `σ_max / σ_min`; infinite for singular input.
pub fn condition_number<T: Real>(m: &DMatrix<T>) -> Result<T, LinalgError> {
    let svd = SVD::try_new(m.clone(), false, false, T::default_epsilon(), MAX_SWEEPS).ok_or(LinalgError::SvdFailure)?;
    let s = &svd.singular_values;
    let (lo, hi) = (s.min(), s.max());
    if lo <= T::zero() {
        return Ok(T::max_value().unwrap_or_else(|| T::lit(f64::MAX)));
    }
    Ok(hi / lo)
}

/// Solves `M X = B` by LU with partial pivoting.
pub fn solve<T: Real>(m: &DMatrix<T>, b: &DMatrix<T>) -> Result<DMatrix<T>, LinalgError> {
    m.clone().lu().solve(b).ok_or(LinalgError::Singular)
}

/// Solves `X = W + A' X A` through the `n² × n²` system
/// `(I - A' ⊗ A') vec(X) = vec(W)` (column-major `vec`).
///
/// No stability check here; callers decide what spectral radius they accept.
pub fn discrete_lyapunov<T: Real>(a: &DMatrix<T>, w: &DMatrix<T>) -> Result<DMatrix<T>, LinalgError> {
    let n = a.nrows();
    if !a.is_square() {
        return Err(LinalgError::NotSquare { rows: a.nrows(), cols: a.ncols() });
    }
    if w.shape() != (n, n) {
        return Err(LinalgError::NotSquare { rows: w.nrows(), cols: w.ncols() });
    }
    let at = a.transpose();
    let op = DMatrix::identity(n * n, n * n) - at.kronecker(&at);
    let rhs = DVector::from_column_slice(w.as_slice());
    let x = op.lu().solve(&rhs).ok_or(LinalgError::Singular)?;
    Ok(symmetrize(&DMatrix::from_column_slice(n, n, x.as_slice())))
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let pts: Vec<(f64, f64)> = xs.iter().zip(ys).map(|(x, y)| (x.ln(), y.ln())).collect();
    if pts.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}
