//! Game primitives: plant matrices, cost weights, disturbance description and
//! the stacked parameter matrix `[A B1 B2]` the estimator works with.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg;
use crate::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimensions must be positive (n={n}, m1={m1}, m2={m2})")]
    InvalidDims { n: usize, m1: usize, m2: usize },
    #[error("block {block}: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        block: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("{what} contains non-finite entries")]
    NonFinite { what: &'static str },
    #[error("{what} must be positive definite (smallest eigenvalue {min_eig})")]
    NotPositiveDefinite { what: &'static str, min_eig: f64 },
    #[error("{what} must be positive semidefinite (smallest eigenvalue {min_eig})")]
    NotPositiveSemidefinite { what: &'static str, min_eig: f64 },
    #[error("{what} must be non-negative, got {value}")]
    Negative { what: &'static str, value: f64 },
    #[error("eigenvalue routine failed on {what}")]
    Eigen { what: &'static str },
}

/// State and input dimensions of the game.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub n: usize,
    pub m1: usize,
    pub m2: usize,
}

impl Dims {
    pub fn new(n: usize, m1: usize, m2: usize) -> Result<Self, ModelError> {
        if n == 0 || m1 == 0 || m2 == 0 {
            return Err(ModelError::InvalidDims { n, m1, m2 });
        }
        Ok(Self { n, m1, m2 })
    }

    /// Regressor length `n + m1 + m2`.
    #[inline]
    pub fn d(&self) -> usize {
        self.n + self.m1 + self.m2
    }
}

fn check_shape<T: Real>(
    block: &'static str,
    m: &DMatrix<T>,
    rows: usize,
    cols: usize,
) -> Result<(), ModelError> {
    if m.shape() != (rows, cols) {
        return Err(ModelError::DimensionMismatch {
            block,
            expected: (rows, cols),
            found: m.shape(),
        });
    }
    if !linalg::all_finite(m) {
        return Err(ModelError::NonFinite { what: block });
    }
    Ok(())
}

/// Plant matrices of `x+ = A x + B1 u + B2 v + w`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel<T: Real> {
    a: DMatrix<T>,
    b1: DMatrix<T>,
    b2: DMatrix<T>,
    dims: Dims,
}

impl<T: Real> SystemModel<T> {
    pub fn new(a: DMatrix<T>, b1: DMatrix<T>, b2: DMatrix<T>) -> Result<Self, ModelError> {
        let n = a.nrows();
        let dims = Dims::new(n, b1.ncols(), b2.ncols())?;
        check_shape("A", &a, n, n)?;
        check_shape("B1", &b1, n, dims.m1)?;
        check_shape("B2", &b2, n, dims.m2)?;
        Ok(Self { a, b1, b2, dims })
    }

    pub fn a(&self) -> &DMatrix<T> {
        &self.a
    }

    pub fn b1(&self) -> &DMatrix<T> {
        &self.b1
    }

    pub fn b2(&self) -> &DMatrix<T> {
        &self.b2
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// `[B1 B2]`, the joint input matrix.
    pub fn b(&self) -> DMatrix<T> {
        let Dims { n, m1, m2 } = self.dims;
        let mut b = DMatrix::zeros(n, m1 + m2);
        b.columns_mut(0, m1).copy_from(&self.b1);
        b.columns_mut(m1, m2).copy_from(&self.b2);
        b
    }

    /// One step of the dynamics.
    pub fn step(&self, x: &DVector<T>, u: &DVector<T>, v: &DVector<T>, w: &DVector<T>) -> DVector<T> {
        &self.a * x + &self.b1 * u + &self.b2 * v + w
    }
}

/// The stacked parameter matrix `[A B1 B2]`, `n × d`.
///
/// Its flat form is the column-major vectorization, which is also nalgebra's
/// storage order, so `vec()` is a copy of the backing slice.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaMatrix<T: Real>(DMatrix<T>);

impl<T: Real> ThetaMatrix<T> {
    pub fn new(theta: DMatrix<T>, dims: Dims) -> Result<Self, ModelError> {
        check_shape("Theta", &theta, dims.n, dims.d())?;
        Ok(Self(theta))
    }

    pub fn zeros(dims: Dims) -> Self {
        Self(DMatrix::zeros(dims.n, dims.d()))
    }

    pub fn as_matrix(&self) -> &DMatrix<T> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.0
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn vec(&self) -> DVector<T> {
        DVector::from_column_slice(self.0.as_slice())
    }

    pub fn from_vec(v: &DVector<T>, dims: Dims) -> Result<Self, ModelError> {
        if v.len() != dims.n * dims.d() {
            return Err(ModelError::DimensionMismatch {
                block: "vec(Theta)",
                expected: (dims.n * dims.d(), 1),
                found: (v.len(), 1),
            });
        }
        Self::new(DMatrix::from_column_slice(dims.n, dims.d(), v.as_slice()), dims)
    }

    pub fn frobenius_norm(&self) -> T {
        self.0.norm()
    }

    /// `(1 - alpha) * self + alpha * other`.
    pub fn lerp(&self, other: &Self, alpha: T) -> Self {
        Self(&self.0 * (T::one() - alpha) + &other.0 * alpha)
    }
}

/// `Theta = [A B1 B2]`.
pub fn concat_model<T: Real>(m: &SystemModel<T>) -> ThetaMatrix<T> {
    let Dims { n, m1, m2 } = m.dims;
    let mut theta = DMatrix::zeros(n, n + m1 + m2);
    theta.columns_mut(0, n).copy_from(&m.a);
    theta.columns_mut(n, m1).copy_from(&m.b1);
    theta.columns_mut(n + m1, m2).copy_from(&m.b2);
    ThetaMatrix(theta)
}

/// Inverse of [`concat_model`].
pub fn split_theta<T: Real>(t: &ThetaMatrix<T>, dims: Dims) -> Result<SystemModel<T>, ModelError> {
    check_shape("Theta", &t.0, dims.n, dims.d())?;
    let Dims { n, m1, m2 } = dims;
    SystemModel::new(
        t.0.columns(0, n).into_owned(),
        t.0.columns(n, m1).into_owned(),
        t.0.columns(n + m1, m2).into_owned(),
    )
}

/// Frobenius distance, i.e. the Euclidean distance of the vectorized forms.
pub fn theta_distance<T: Real>(a: &ThetaMatrix<T>, b: &ThetaMatrix<T>) -> Result<T, ModelError> {
    if a.shape() != b.shape() {
        return Err(ModelError::DimensionMismatch {
            block: "Theta",
            expected: a.shape(),
            found: b.shape(),
        });
    }
    Ok((&a.0 - &b.0).norm())
}

const SYMMETRY_TOL: f64 = 1e-12;

fn symmetrized<T: Real>(what: &'static str, m: DMatrix<T>) -> DMatrix<T> {
    let asym = (&m - m.transpose()).norm();
    let scale = m.norm().max(T::one());
    if asym > T::tol_or_eps(SYMMETRY_TOL) * scale {
        log::warn!("{what} is not symmetric (|M - M^T|_F = {:e}); symmetrizing", asym.as_f64());
    }
    linalg::symmetrize(&m)
}

fn square<T: Real>(what: &'static str, m: &DMatrix<T>, size: usize) -> Result<(), ModelError> {
    check_shape(what, m, size, size)
}

/// Quadratic stage-cost weights `x'Qx + u'Ru u - v'Rv v`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec<T: Real> {
    q: DMatrix<T>,
    ru: DMatrix<T>,
    rv: DMatrix<T>,
}

impl<T: Real> CostSpec<T> {
    /// Symmetrizes the inputs, then requires `Q ⪰ 0`, `Ru ≻ 0`, `Rv ≻ 0`.
    pub fn new(q: DMatrix<T>, ru: DMatrix<T>, rv: DMatrix<T>) -> Result<Self, ModelError> {
        square("Q", &q, q.nrows())?;
        square("Ru", &ru, ru.nrows())?;
        square("Rv", &rv, rv.nrows())?;
        let q = symmetrized("Q", q);
        let ru = symmetrized("Ru", ru);
        let rv = symmetrized("Rv", rv);

        let eig = |what, m: &DMatrix<T>| {
            linalg::sym_min_eigenvalue(m).ok_or(ModelError::Eigen { what })
        };
        let q_min = eig("Q", &q)?;
        let psd_tol = T::tol_or_eps(SYMMETRY_TOL) * q.norm().max(T::one());
        if q_min < -psd_tol {
            return Err(ModelError::NotPositiveSemidefinite { what: "Q", min_eig: q_min.as_f64() });
        }
        for (what, r) in [("Ru", &ru), ("Rv", &rv)] {
            let min = eig(what, r)?;
            if min <= T::zero() {
                return Err(ModelError::NotPositiveDefinite { what, min_eig: min.as_f64() });
            }
        }
        Ok(Self { q, ru, rv })
    }

    pub fn q(&self) -> &DMatrix<T> {
        &self.q
    }

    pub fn ru(&self) -> &DMatrix<T> {
        &self.ru
    }

    pub fn rv(&self) -> &DMatrix<T> {
        &self.rv
    }

    pub fn check_dims(&self, dims: Dims) -> Result<(), ModelError> {
        square("Q", &self.q, dims.n)?;
        square("Ru", &self.ru, dims.m1)?;
        square("Rv", &self.rv, dims.m2)
    }
}

/// Disturbance description: sub-Gaussian scale and covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec<T: Real> {
    sigma_w: T,
    covariance: DMatrix<T>,
}

impl<T: Real> NoiseSpec<T> {
    /// `Σ_w = σ_w² I_n`.
    pub fn isotropic(n: usize, sigma_w: T) -> Result<Self, ModelError> {
        if !sigma_w.is_finite() {
            return Err(ModelError::NonFinite { what: "sigma_w" });
        }
        if sigma_w < T::zero() {
            return Err(ModelError::Negative { what: "sigma_w", value: sigma_w.as_f64() });
        }
        Ok(Self {
            sigma_w,
            covariance: DMatrix::identity(n, n) * (sigma_w * sigma_w),
        })
    }

    pub fn with_covariance(sigma_w: T, covariance: DMatrix<T>) -> Result<Self, ModelError> {
        if sigma_w < T::zero() {
            return Err(ModelError::Negative { what: "sigma_w", value: sigma_w.as_f64() });
        }
        square("Sigma_w", &covariance, covariance.nrows())?;
        let covariance = symmetrized("Sigma_w", covariance);
        let min = linalg::sym_min_eigenvalue(&covariance).ok_or(ModelError::Eigen { what: "Sigma_w" })?;
        if min < -T::tol_or_eps(SYMMETRY_TOL) * covariance.norm().max(T::one()) {
            return Err(ModelError::NotPositiveSemidefinite { what: "Sigma_w", min_eig: min.as_f64() });
        }
        Ok(Self { sigma_w, covariance })
    }

    pub fn sigma_w(&self) -> T {
        self.sigma_w
    }

    pub fn covariance(&self) -> &DMatrix<T> {
        &self.covariance
    }
}

/// How the initial state is produced.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialState<T: Real> {
    Fixed(DVector<T>),
    /// Independent `N(mean_i, std²)` per coordinate.
    Gaussian { mean: DVector<T>, std: T },
}

impl<T: Real> InitialState<T> {
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> DVector<T> {
        match self {
            InitialState::Fixed(x0) => x0.clone(),
            InitialState::Gaussian { mean, std } => {
                mean.map(|mu| mu + *std * T::sample_standard_normal(rng))
            }
        }
    }
}

/// Everything that defines one game instance.
#[derive(Debug, Clone, PartialEq)]
pub struct GameSpec<T: Real> {
    pub dims: Dims,
    pub truth: SystemModel<T>,
    pub cost: CostSpec<T>,
    pub noise: NoiseSpec<T>,
    pub x0: InitialState<T>,
}

impl<T: Real> GameSpec<T> {
    pub fn new(
        truth: SystemModel<T>,
        cost: CostSpec<T>,
        noise: NoiseSpec<T>,
        x0: InitialState<T>,
    ) -> Result<Self, ModelError> {
        let dims = truth.dims();
        cost.check_dims(dims)?;
        square("Sigma_w", noise.covariance(), dims.n)?;
        let (what, x) = match &x0 {
            InitialState::Fixed(x) => ("x0", x),
            InitialState::Gaussian { mean, .. } => ("x0 mean", mean),
        };
        if x.len() != dims.n {
            return Err(ModelError::DimensionMismatch { block: what, expected: (dims.n, 1), found: (x.len(), 1) });
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(ModelError::NonFinite { what });
        }
        Ok(Self { dims, truth, cost, noise, x0 })
    }

    pub fn theta_star(&self) -> ThetaMatrix<T> {
        concat_model(&self.truth)
    }
}
