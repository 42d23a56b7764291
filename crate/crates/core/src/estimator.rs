//! Online ridge identification of `Theta = [A B1 B2]` and its confidence ellipsoid.
//!
//! With regressors `z_t = [x_t; u_t; v_t]` the running statistics are
//! `V = λI + Σ z z'` and `S = Σ x_{t+1} z'`, so the ridge estimate is
//! `Θ̂ = S V⁻¹`. Weighted norms of parameter errors are evaluated in matrix
//! form, `tr(Δ V Δ')`, which is what the vectorized block design induces.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

use crate::linalg;
use crate::model::{Dims, ThetaMatrix};
use crate::Real;

/// Updates between batch refactorizations of `V`.
pub const AUDIT_INTERVAL: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("regularization must be positive, got {0}")]
    BadLambda(f64),
    #[error("non-finite {what} passed to the estimator")]
    NonFinite { what: &'static str },
    #[error("{what} has length {found}, expected {expected}")]
    Length { what: &'static str, expected: usize, found: usize },
    #[error("log det(V) = {logdet} is below d·log λ = {floor}; design state is corrupted")]
    NegativeLogDetGap { logdet: f64, floor: f64 },
    #[error("failure probability must lie in (0, 1), got {0}")]
    BadDelta(f64),
    #[error("{what} must be non-negative, got {value}")]
    Negative { what: &'static str, value: f64 },
    #[error("{what} must be positive, got {value}")]
    NotPositive { what: &'static str, value: f64 },
    #[error("design matrix lost positive definiteness")]
    Factorization,
    #[error("no samples recorded yet")]
    Empty,
}

/// Running regularized design matrix and cross moments.
#[derive(Debug, Clone)]
pub struct DesignState<T: Real> {
    dims: Dims,
    lambda: T,
    v: DMatrix<T>,
    s: DMatrix<T>,
    t: usize,
    chol: Cholesky<T, Dyn>,
    logdet_v: T,
    since_audit: usize,
    last_audit_drift: T,
}

impl<T: Real> DesignState<T> {
    pub fn new(dims: Dims, lambda: T) -> Result<Self, EstimatorError> {
        if !(lambda > T::zero()) || !lambda.is_finite() {
            return Err(EstimatorError::BadLambda(lambda.as_f64()));
        }
        let d = dims.d();
        let v = DMatrix::identity(d, d) * lambda;
        let chol = Cholesky::new(v.clone()).ok_or(EstimatorError::Factorization)?;
        Ok(Self {
            dims,
            lambda,
            v,
            s: DMatrix::zeros(dims.n, d),
            t: 0,
            chol,
            logdet_v: T::lit(d as f64) * lambda.ln(),
            since_audit: 0,
            last_audit_drift: T::zero(),
        })
    }

    /// Records one transition `(z_t, x_{t+1})`.
    pub fn update(&mut self, z: &DVector<T>, x_next: &DVector<T>) -> Result<(), EstimatorError> {
        let d = self.dims.d();
        if z.len() != d {
            return Err(EstimatorError::Length { what: "regressor", expected: d, found: z.len() });
        }
        if x_next.len() != self.dims.n {
            return Err(EstimatorError::Length { what: "next state", expected: self.dims.n, found: x_next.len() });
        }
        if !z.iter().all(|v| v.is_finite()) {
            return Err(EstimatorError::NonFinite { what: "regressor" });
        }
        if !x_next.iter().all(|v| v.is_finite()) {
            return Err(EstimatorError::NonFinite { what: "next state" });
        }

        self.v.ger(T::one(), z, z, T::one());
        self.s.ger(T::one(), x_next, z, T::one());
        self.chol.rank_one_update(z, T::one());
        self.logdet_v = self.chol.ln_determinant();
        self.t += 1;
        self.since_audit += 1;
        if self.since_audit >= AUDIT_INTERVAL {
            self.refactor()?;
        }
        Ok(())
    }

    /// Rebuilds the factor from `V` and records how far the incremental
    /// log-determinant had drifted.
    pub fn refactor(&mut self) -> Result<T, EstimatorError> {
        let fresh = Cholesky::new(linalg::symmetrize(&self.v)).ok_or(EstimatorError::Factorization)?;
        let logdet = fresh.ln_determinant();
        let drift = (logdet - self.logdet_v).abs();
        if drift > T::tol_or_eps(1e-8) * logdet.abs().max(T::one()) {
            log::warn!("log det(V) drifted by {:e} over {} updates", drift.as_f64(), self.since_audit);
        }
        self.chol = fresh;
        self.logdet_v = logdet;
        self.since_audit = 0;
        self.last_audit_drift = drift;
        Ok(drift)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn v(&self) -> &DMatrix<T> {
        &self.v
    }

    pub fn s(&self) -> &DMatrix<T> {
        &self.s
    }

    /// Number of recorded transitions.
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn logdet_v(&self) -> T {
        self.logdet_v
    }

    /// `log det V - d log λ`, never negative for a healthy state.
    pub fn logdet_gap(&self) -> T {
        self.logdet_v - T::lit(self.dims.d() as f64) * self.lambda.ln()
    }

    pub fn last_audit_drift(&self) -> T {
        self.last_audit_drift
    }

    /// `Θ̂ = S V⁻¹`, via the Cholesky factor.
    pub fn ridge_estimate(&self) -> ThetaMatrix<T> {
        let theta_t = self.chol.solve(&self.s.transpose());
        ThetaMatrix::new(theta_t.transpose(), self.dims).expect("ridge estimate has Theta shape")
    }

    /// `λ_min(V) / t`, the empirical excitation level.
    pub fn min_eig_ratio(&self) -> Result<T, EstimatorError> {
        if self.t == 0 {
            return Err(EstimatorError::Empty);
        }
        let min = linalg::sym_min_eigenvalue(&self.v).ok_or(EstimatorError::Factorization)?;
        Ok(min / T::lit(self.t as f64))
    }

    /// Squared `V`-weighted distance `tr(Δ V Δ')` between two parameter matrices.
    pub fn weighted_sq_distance(&self, a: &ThetaMatrix<T>, b: &ThetaMatrix<T>) -> T {
        weighted_sq_norm(&(a.as_matrix() - b.as_matrix()), &self.v)
    }
}

fn weighted_sq_norm<T: Real>(delta: &DMatrix<T>, v: &DMatrix<T>) -> T {
    (delta * v).component_mul(delta).sum()
}

/// Radius of the confidence ellipsoid:
///
/// `β = σ_w sqrt(n (log det V - d log λ) + 2 log(1/δ)) + sqrt(λ) S_θ`.
pub fn confidence_radius<T: Real>(state: &DesignState<T>, sigma_w: T, delta: T, s_theta: T) -> Result<T, EstimatorError> {
    if !(delta > T::zero() && delta < T::one()) {
        return Err(EstimatorError::BadDelta(delta.as_f64()));
    }
    if !(s_theta >= T::zero()) {
        return Err(EstimatorError::Negative { what: "S_theta", value: s_theta.as_f64() });
    }
    if !(sigma_w >= T::zero()) {
        return Err(EstimatorError::Negative { what: "sigma_w", value: sigma_w.as_f64() });
    }
    let mut gap = state.logdet_gap();
    if gap < T::zero() {
        if gap < -T::tol_or_eps(1e-9) {
            let floor = T::lit(state.dims.d() as f64) * state.lambda.ln();
            return Err(EstimatorError::NegativeLogDetGap { logdet: state.logdet_v.as_f64(), floor: floor.as_f64() });
        }
        gap = T::zero();
    }
    let n = T::lit(state.dims.n as f64);
    let two = T::lit(2.0);
    let inner = n * gap + two * (T::one() / delta).ln();
    Ok(sigma_w * inner.sqrt() + state.lambda.sqrt() * s_theta)
}

/// `{Θ : tr((Θ - Θ̂) V (Θ - Θ̂)') ≤ β²}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceSet<T: Real> {
    pub center: ThetaMatrix<T>,
    pub v: DMatrix<T>,
    pub beta: T,
    pub delta: T,
    pub s_theta: T,
}

impl<T: Real> ConfidenceSet<T> {
    /// Snapshot at the current state: ridge center plus radius.
    pub fn from_state(state: &DesignState<T>, sigma_w: T, delta: T, s_theta: T) -> Result<Self, EstimatorError> {
        let beta = confidence_radius(state, sigma_w, delta, s_theta)?;
        Ok(Self {
            center: state.ridge_estimate(),
            v: state.v.clone(),
            beta,
            delta,
            s_theta,
        })
    }

    /// `‖candidate - center‖_V`.
    pub fn weighted_distance(&self, candidate: &ThetaMatrix<T>) -> T {
        weighted_sq_norm(&(candidate.as_matrix() - self.center.as_matrix()), &self.v).max(T::zero()).sqrt()
    }

    pub fn contains(&self, candidate: &ThetaMatrix<T>) -> bool {
        if candidate.shape() != self.center.shape() {
            return false;
        }
        let d2 = weighted_sq_norm(&(candidate.as_matrix() - self.center.as_matrix()), &self.v);
        d2 <= self.beta * self.beta
    }
}

/// `2β / sqrt(ν t_k)`: the ℓ₂ error bound implied by the ellipsoid under
/// excitation level `ν`.
pub fn l2_error_bound<T: Real>(beta: T, nu: T, t_k: usize) -> Result<T, EstimatorError> {
    if !(nu > T::zero()) {
        return Err(EstimatorError::NotPositive { what: "nu", value: nu.as_f64() });
    }
    if t_k == 0 {
        return Err(EstimatorError::NotPositive { what: "t_k", value: 0.0 });
    }
    Ok(T::lit(2.0) * beta / (nu * T::lit(t_k as f64)).sqrt())
}
