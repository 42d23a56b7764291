//! Regularity certification and segment shrinkage.
//!
//! A parameter is *regular* for margins `(μ, γ)` when its GARE has a
//! stabilizing saddle solution with `λ_min(Rv - B2'PB2) ≥ μ` and closed-loop
//! spectral radius at most `1 - γ`. At each re-estimation the deployed model
//! moves from the previous surrogate toward the fresh ridge estimate as far
//! as it can while staying regular and inside the confidence ellipsoid.

use std::fmt;

use thiserror::Error;

use crate::estimator::ConfidenceSet;
use crate::model::{split_theta, CostSpec, Dims, ThetaMatrix};
use crate::riccati::{solve_gare, GareSolution, RiccatiError, SolverOptions};
use crate::Real;

/// Smallest step tried by the coarse backtracking, `2^-COARSE_HALVINGS`.
pub const COARSE_HALVINGS: i32 = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertifyError {
    #[error("solvability margin must be positive, got {0}")]
    BadMu(f64),
    #[error("spectral margin must lie in (0, 1), got {0}")]
    BadGamma(f64),
    #[error("shrinkage tolerance must lie in (0, 1], got {0}")]
    BadTolerance(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularityMargins<T: Real> {
    mu: T,
    gamma: T,
}

impl<T: Real> RegularityMargins<T> {
    pub fn new(mu: T, gamma: T) -> Result<Self, CertifyError> {
        if !(mu > T::zero()) {
            return Err(CertifyError::BadMu(mu.as_f64()));
        }
        if !(gamma > T::zero() && gamma < T::one()) {
            return Err(CertifyError::BadGamma(gamma.as_f64()));
        }
        Ok(Self { mu, gamma })
    }

    pub fn mu(&self) -> T {
        self.mu
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    /// Largest admissible closed-loop spectral radius, `1 - γ`.
    pub fn max_rho(&self) -> T {
        T::one() - self.gamma
    }
}

/// Why a parameter failed the regularity test.
#[derive(Debug, Clone, PartialEq)]
pub enum Irregularity {
    /// The parameter matrix does not describe a valid plant.
    Malformed(String),
    /// The GARE solve failed (diverged, lost margin during iteration, ...).
    Solver(RiccatiError),
    MarginTooSmall { margin: f64, mu: f64 },
    SpectralRadiusTooLarge { rho: f64, max: f64 },
}

impl fmt::Display for Irregularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Irregularity::Malformed(why) => write!(f, "malformed parameter: {why}"),
            Irregularity::Solver(e) => write!(f, "GARE solve failed: {e}"),
            Irregularity::MarginTooSmall { margin, mu } => write!(f, "margin {margin:e} < mu {mu:e}"),
            Irregularity::SpectralRadiusTooLarge { rho, max } => write!(f, "closed-loop radius {rho} > {max}"),
        }
    }
}

/// Full regularity test with the reason for failure.
pub fn check_regularity<T: Real>(
    theta: &ThetaMatrix<T>,
    dims: Dims,
    cost: &CostSpec<T>,
    margins: &RegularityMargins<T>,
    opts: &SolverOptions<T>,
) -> Result<GareSolution<T>, Irregularity> {
    let model = split_theta(theta, dims).map_err(|e| Irregularity::Malformed(e.to_string()))?;
    let opts = opts.with_mu_floor(margins.mu);
    let sol = solve_gare(&model, cost, &opts).map_err(Irregularity::Solver)?;
    if sol.margin() < margins.mu {
        return Err(Irregularity::MarginTooSmall { margin: sol.margin().as_f64(), mu: margins.mu.as_f64() });
    }
    if sol.rho_cl() > margins.max_rho() {
        return Err(Irregularity::SpectralRadiusTooLarge { rho: sol.rho_cl().as_f64(), max: margins.max_rho().as_f64() });
    }
    Ok(sol)
}

/// `Some(solution)` iff `theta` is regular.
pub fn is_regular<T: Real>(
    theta: &ThetaMatrix<T>,
    dims: Dims,
    cost: &CostSpec<T>,
    margins: &RegularityMargins<T>,
    opts: &SolverOptions<T>,
) -> Option<GareSolution<T>> {
    match check_regularity(theta, dims, cost, margins, opts) {
        Ok(sol) => Some(sol),
        Err(why) => {
            log::debug!("irregular parameter: {why}");
            None
        }
    }
}

/// The model deployed for one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct CertifiedModel<T: Real> {
    pub theta: ThetaMatrix<T>,
    /// Position along the segment from the previous surrogate (0) to the
    /// ridge estimate (1).
    pub alpha: T,
    pub solution: GareSolution<T>,
    /// Whether `theta` lies in the confidence set it was selected against.
    pub in_confidence: bool,
    pub episode: usize,
    /// No feasible point was found; `theta` is the previous surrogate.
    pub failure_flag: bool,
}

impl<T: Real> CertifiedModel<T> {
    /// The starting model, which must itself be regular.
    pub fn initial(
        theta: ThetaMatrix<T>,
        dims: Dims,
        cost: &CostSpec<T>,
        margins: &RegularityMargins<T>,
        opts: &SolverOptions<T>,
    ) -> Result<Self, Irregularity> {
        let solution = check_regularity(&theta, dims, cost, margins, opts)?;
        Ok(Self {
            theta,
            alpha: T::one(),
            solution,
            in_confidence: true,
            episode: 0,
            failure_flag: false,
        })
    }
}

/// Everything `shrink` needs besides the two endpoints.
#[derive(Debug, Clone, Copy)]
pub struct ShrinkContext<'a, T: Real> {
    pub dims: Dims,
    pub cost: &'a CostSpec<T>,
    pub margins: &'a RegularityMargins<T>,
    pub opts: &'a SolverOptions<T>,
    pub tol_alpha: T,
}

/// Regular point on the segment with its saddle solution.
type Hit<T> = Option<(ThetaMatrix<T>, GareSolution<T>)>;

struct SegmentProbe<'a, T: Real> {
    start: &'a ThetaMatrix<T>,
    end: &'a ThetaMatrix<T>,
    conf: &'a ConfidenceSet<T>,
    ctx: ShrinkContext<'a, T>,
    memo: Vec<(T, Hit<T>)>,
}

impl<T: Real> SegmentProbe<'_, T> {
    fn feasible(&mut self, alpha: T) -> bool {
        if let Some((_, hit)) = self.memo.iter().find(|(a, _)| *a == alpha) {
            return hit.is_some();
        }
        let theta = self.start.lerp(self.end, alpha);
        let hit = if self.conf.contains(&theta) {
            is_regular(&theta, self.ctx.dims, self.ctx.cost, self.ctx.margins, self.ctx.opts).map(|sol| (theta, sol))
        } else {
            None
        };
        let ok = hit.is_some();
        self.memo.push((alpha, hit));
        ok
    }

    fn take(&mut self, alpha: T) -> (ThetaMatrix<T>, GareSolution<T>) {
        let idx = self.memo.iter().position(|(a, hit)| *a == alpha && hit.is_some()).expect("alpha was probed feasible");
        self.memo.swap_remove(idx).1.expect("feasible probe carries a solution")
    }

    /// Largest feasible `alpha` found, if any.
    fn search(&mut self) -> Option<T> {
        if self.feasible(T::one()) {
            return Some(T::one());
        }
        let half = T::lit(0.5);
        let mut hi = T::one();
        let mut lo = None;
        for _ in 0..COARSE_HALVINGS {
            let a = hi * half;
            if self.feasible(a) {
                lo = Some(a);
                break;
            }
            hi = a;
        }
        let Some(mut lo) = lo else {
            return self.feasible(T::zero()).then(T::zero);
        };
        while hi - lo > self.ctx.tol_alpha {
            let mid = (lo + hi) * half;
            if self.feasible(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(lo)
    }
}

/// Moves from `previous.theta` toward `theta_hat` as far as feasibility
/// allows: full step if possible, otherwise halving down to `2^-20`, then
/// bisection to `tol_alpha` inside the first feasible bracket. When nothing
/// on the segment (including `alpha = 0`) is feasible, the previous model
/// is kept and flagged.
pub fn shrink<T: Real>(
    theta_hat: &ThetaMatrix<T>,
    previous: &CertifiedModel<T>,
    conf: &ConfidenceSet<T>,
    ctx: ShrinkContext<'_, T>,
    episode: usize,
) -> CertifiedModel<T> {
    let mut probe = SegmentProbe { start: &previous.theta, end: theta_hat, conf, ctx, memo: Vec::new() };
    match probe.search() {
        Some(alpha) => {
            let (theta, solution) = probe.take(alpha);
            CertifiedModel { theta, alpha, solution, in_confidence: true, episode, failure_flag: false }
        }
        None => {
            log::warn!("episode {episode}: no certified point on the shrinkage segment; keeping previous model");
            CertifiedModel {
                theta: previous.theta.clone(),
                alpha: T::zero(),
                solution: previous.solution.clone(),
                in_confidence: conf.contains(&previous.theta),
                episode,
                failure_flag: true,
            }
        }
    }
}

/// Feasibility of a single point, exposed for audits.
pub fn feasible_point<T: Real>(theta: &ThetaMatrix<T>, conf: &ConfidenceSet<T>, ctx: &ShrinkContext<'_, T>) -> bool {
    conf.contains(theta) && is_regular(theta, ctx.dims, ctx.cost, ctx.margins, ctx.opts).is_some()
}
