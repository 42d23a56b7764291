//! Zero-sum generalized algebraic Riccati equation (GARE).
//!
//! For plant `(A, B1, B2)` and weights `(Q, Ru, Rv)` the stabilizing saddle
//! solution `P` satisfies
//!
//! ```text
//! P = Q + A'PA - [A'PB1 A'PB2] H(P)^{-1} [B1'PA; B2'PA]
//! H(P) = [Ru + B1'PB1, B1'PB2; B2'PB1, -Rv + B2'PB2]
//! ```
//!
//! and the saddle gains are `[K; L] = H(P)^{-1} [B1'PA; B2'PA]`, applied as
//! `u = -Kx`, `v = -Lx`. The solver is plain value iteration started at `Q`;
//! every returned [`GareSolution`] has been checked for residual, margin and
//! closed-loop stability before it leaves this module.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::linalg::{self, LinalgError};
use crate::model::{CostSpec, ModelError, SystemModel};
use crate::Real;

pub use crate::linalg::spectral_radius;

/// Condition number above which `H(P)` is treated as singular.
pub const SINGULAR_H_COND: f64 = 1e12;

/// Closed loops with spectral radius above `1 - LYAPUNOV_STABILITY_GAP`
/// are rejected by [`solve_lyapunov`].
pub const LYAPUNOV_STABILITY_GAP: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiccatiError {
    #[error("solvability margin {margin:e} below floor {floor:e} at iteration {iteration}")]
    MarginViolation { iteration: usize, margin: f64, floor: f64 },
    #[error("no convergence after {iterations} iterations (last step {last_step:e})")]
    NonConvergence { iterations: usize, last_step: f64 },
    #[error("H(P) is numerically singular (condition number {cond:e})")]
    SingularH { cond: f64 },
    #[error("Schur block {block} is singular")]
    SingularSchurBlock { block: &'static str },
    #[error("closed loop is not Schur stable (spectral radius {rho})")]
    UnstableClosedLoop { rho: f64 },
    #[error("solution failed certification: {reason}")]
    Certification { reason: String },
    #[error("Lyapunov residual {residual:e} exceeds tolerance")]
    LyapunovResidual { residual: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions<T: Real> {
    /// Stop once successive iterates differ by less than this (Frobenius).
    pub tol: T,
    pub max_iter: usize,
    /// Every iterate must keep `λ_min(Rv - B2'PB2) ≥ mu_floor`.
    pub mu_floor: T,
}

impl<T: Real> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::tol_or_eps(1e-10),
            max_iter: 10_000,
            mu_floor: T::zero(),
        }
    }
}

impl<T: Real> SolverOptions<T> {
    pub fn with_mu_floor(mut self, mu_floor: T) -> Self {
        self.mu_floor = mu_floor;
        self
    }
}

/// Saddle gains together with the matrix `H(P)` they were computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct SaddleGains<T: Real> {
    pub k: DMatrix<T>,
    pub l: DMatrix<T>,
    pub h: DMatrix<T>,
}

/// A certified stabilizing saddle solution.
#[derive(Debug, Clone, PartialEq)]
pub struct GareSolution<T: Real> {
    p: DMatrix<T>,
    k: DMatrix<T>,
    l: DMatrix<T>,
    h: DMatrix<T>,
    margin: T,
    rho_cl: T,
    residual: T,
    iterations: usize,
}

impl<T: Real> GareSolution<T> {
    pub fn p(&self) -> &DMatrix<T> {
        &self.p
    }

    pub fn k(&self) -> &DMatrix<T> {
        &self.k
    }

    pub fn l(&self) -> &DMatrix<T> {
        &self.l
    }

    pub fn h(&self) -> &DMatrix<T> {
        &self.h
    }

    /// `λ_min(Rv - B2'PB2)`.
    pub fn margin(&self) -> T {
        self.margin
    }

    /// Spectral radius of `A - B1 K - B2 L`.
    pub fn rho_cl(&self) -> T {
        self.rho_cl
    }

    /// `‖F(P)‖_F`, see [`gare_residual`].
    pub fn residual(&self) -> T {
        self.residual
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Builds a solution from a candidate `P`, enforcing every invariant:
    /// residual within `tol`, symmetric PSD `P`, positive margin, stable loop.
    pub fn certify(
        p: DMatrix<T>,
        m: &SystemModel<T>,
        c: &CostSpec<T>,
        tol: T,
        iterations: usize,
    ) -> Result<Self, RiccatiError> {
        let fail = |reason: String| Err(RiccatiError::Certification { reason });
        let p_scale = p.norm().max(T::one());
        let sym_tol = T::tol_or_eps(1e-10) * p_scale;
        let asym = (&p - p.transpose()).norm();
        if asym > sym_tol {
            return fail(format!("P is not symmetric (|P - P'| = {:e})", asym.as_f64()));
        }
        let p = linalg::symmetrize(&p);
        let p_min = linalg::sym_min_eigenvalue(&p).ok_or(LinalgError::EigenFailure)?;
        if p_min < -sym_tol {
            return fail(format!("P is indefinite (min eigenvalue {:e})", p_min.as_f64()));
        }
        let margin = solvability_margin(&p, m, c)?;
        if margin <= T::zero() {
            return fail(format!("margin {:e} is not positive", margin.as_f64()));
        }
        let gains = gains_from_p(&p, m, c)?;
        let acl = closed_loop(m, &gains.k, &gains.l)?;
        let rho_cl = spectral_radius(&acl)?;
        if rho_cl >= T::one() {
            return Err(RiccatiError::UnstableClosedLoop { rho: rho_cl.as_f64() });
        }
        let residual = residual_at(&p, c, &gains, &acl).norm();
        if !(residual <= tol) {
            return fail(format!("residual {:e} above tolerance {:e}", residual.as_f64(), tol.as_f64()));
        }
        Ok(Self {
            p,
            k: gains.k,
            l: gains.l,
            h: gains.h,
            margin,
            rho_cl,
            residual,
            iterations,
        })
    }
}

/// `H(P)`.
pub fn h_matrix<T: Real>(p: &DMatrix<T>, m: &SystemModel<T>, c: &CostSpec<T>) -> DMatrix<T> {
    let (m1, m2) = (m.dims().m1, m.dims().m2);
    let b = m.b();
    let mut h = b.transpose() * p * &b;
    {
        let mut uu = h.view_mut((0, 0), (m1, m1));
        uu += c.ru();
    }
    {
        let mut vv = h.view_mut((m1, m1), (m2, m2));
        vv -= c.rv();
    }
    h
}

/// `λ_min(Rv - B2'PB2)`.
pub fn solvability_margin<T: Real>(p: &DMatrix<T>, m: &SystemModel<T>, c: &CostSpec<T>) -> Result<T, RiccatiError> {
    let inner = c.rv() - m.b2().transpose() * p * m.b2();
    Ok(linalg::sym_min_eigenvalue(&inner).ok_or(LinalgError::EigenFailure)?)
}

/// Saddle gains by a joint solve against `H(P)`.
pub fn gains_from_p<T: Real>(p: &DMatrix<T>, m: &SystemModel<T>, c: &CostSpec<T>) -> Result<SaddleGains<T>, RiccatiError> {
    let h = h_matrix(p, m, c);
    let cond = linalg::condition_number(&h)?;
    if !(cond <= T::lit(SINGULAR_H_COND)) {
        return Err(RiccatiError::SingularH { cond: cond.as_f64() });
    }
    let rhs = m.b().transpose() * p * m.a();
    let g = linalg::solve(&h, &rhs).map_err(|_| RiccatiError::SingularH { cond: cond.as_f64() })?;
    let m1 = m.dims().m1;
    let m2 = m.dims().m2;
    Ok(SaddleGains {
        k: g.rows(0, m1).into_owned(),
        l: g.rows(m1, m2).into_owned(),
        h,
    })
}

/// Saddle gains through the explicit Schur-complement expressions, each
/// player's gain eliminating the other's block first.
pub fn gains_explicit<T: Real>(
    p: &DMatrix<T>,
    m: &SystemModel<T>,
    c: &CostSpec<T>,
) -> Result<(DMatrix<T>, DMatrix<T>), RiccatiError> {
    let (a, b1, b2) = (m.a(), m.b1(), m.b2());
    let b1p = b1.transpose() * p;
    let b2p = b2.transpose() * p;
    let uu = c.ru() + &b1p * b1;
    let uv = &b1p * b2;
    let vu = &b2p * b1;
    let vv = -c.rv() + &b2p * b2;
    let ua = &b1p * a;
    let va = &b2p * a;

    let inv = |block: &'static str, mat: &DMatrix<T>| {
        let cond = linalg::condition_number(mat)?;
        if !(cond <= T::lit(SINGULAR_H_COND)) {
            return Err(RiccatiError::SingularSchurBlock { block });
        }
        mat.clone().try_inverse().ok_or(RiccatiError::SingularSchurBlock { block })
    };
    let vv_inv = inv("-Rv + B2'PB2", &vv)?;
    let uu_inv = inv("Ru + B1'PB1", &uu)?;

    let k_lhs = &uu - &uv * &vv_inv * &vu;
    let k_rhs = &ua - &uv * &vv_inv * &va;
    let k = linalg::solve(&k_lhs, &k_rhs).map_err(|_| RiccatiError::SingularSchurBlock { block: "K Schur complement" })?;

    let l_lhs = &vv - &vu * &uu_inv * &uv;
    let l_rhs = &va - &vu * &uu_inv * &ua;
    let l = linalg::solve(&l_lhs, &l_rhs).map_err(|_| RiccatiError::SingularSchurBlock { block: "L Schur complement" })?;
    Ok((k, l))
}

/// `A - B1 K - B2 L`.
pub fn closed_loop<T: Real>(m: &SystemModel<T>, k: &DMatrix<T>, l: &DMatrix<T>) -> Result<DMatrix<T>, RiccatiError> {
    let d = m.dims();
    let check = |block, g: &DMatrix<T>, rows| {
        if g.shape() != (rows, d.n) {
            return Err(ModelError::DimensionMismatch { block, expected: (rows, d.n), found: g.shape() });
        }
        Ok(())
    };
    check("K", k, d.m1)?;
    check("L", l, d.m2)?;
    Ok(m.a() - m.b1() * k - m.b2() * l)
}

/// Solves `X = W + Acl' X Acl` directly (Kronecker-form linear system).
pub fn solve_lyapunov<T: Real>(acl: &DMatrix<T>, w: &DMatrix<T>) -> Result<DMatrix<T>, RiccatiError> {
    let rho = spectral_radius(acl)?;
    if rho >= T::one() - T::lit(LYAPUNOV_STABILITY_GAP) {
        return Err(RiccatiError::UnstableClosedLoop { rho: rho.as_f64() });
    }
    let w = linalg::symmetrize(w);
    let x = linalg::discrete_lyapunov(acl, &w)?;
    let residual = (&x - &w - acl.transpose() * &x * acl).norm();
    if residual > T::tol_or_eps(1e-10) * x.norm().max(T::one()) {
        return Err(RiccatiError::LyapunovResidual { residual: residual.as_f64() });
    }
    Ok(x)
}

fn residual_at<T: Real>(
    p: &DMatrix<T>,
    c: &CostSpec<T>,
    g: &SaddleGains<T>,
    acl: &DMatrix<T>,
) -> DMatrix<T> {
    let phi = c.q() + acl.transpose() * p * acl + g.k.transpose() * c.ru() * &g.k - g.l.transpose() * c.rv() * &g.l;
    p - phi
}

/// `F(P) = P - Φ(P)` with `Φ(P) = Q + Acl'P Acl + K'Ru K - L'Rv L`, where
/// `(K, L)` are the stage saddle gains at `P`.
pub fn gare_residual<T: Real>(p: &DMatrix<T>, m: &SystemModel<T>, c: &CostSpec<T>) -> Result<DMatrix<T>, RiccatiError> {
    let g = gains_from_p(p, m, c)?;
    let acl = closed_loop(m, &g.k, &g.l)?;
    Ok(residual_at(p, c, &g, &acl))
}

/// One value-iteration step, returning the next iterate.
fn riccati_step<T: Real>(p: &DMatrix<T>, m: &SystemModel<T>, c: &CostSpec<T>) -> Result<DMatrix<T>, RiccatiError> {
    let g = gains_from_p(p, m, c)?;
    let a = m.a();
    let apb = a.transpose() * p * m.b();
    let mut stacked = DMatrix::zeros(g.k.nrows() + g.l.nrows(), g.k.ncols());
    stacked.rows_mut(0, g.k.nrows()).copy_from(&g.k);
    stacked.rows_mut(g.k.nrows(), g.l.nrows()).copy_from(&g.l);
    let next = c.q() + a.transpose() * p * a - apb * stacked;
    Ok(linalg::symmetrize(&next))
}

/// Value iteration from `P₀ = Q` until successive iterates are `tol`-close.
pub fn solve_gare<T: Real>(
    m: &SystemModel<T>,
    c: &CostSpec<T>,
    opts: &SolverOptions<T>,
) -> Result<GareSolution<T>, RiccatiError> {
    c.check_dims(m.dims())?;
    let mut p = c.q().clone();
    let mut last_step = T::zero();
    for iteration in 1..=opts.max_iter {
        let margin = solvability_margin(&p, m, c)?;
        if !(margin >= opts.mu_floor) {
            return Err(RiccatiError::MarginViolation {
                iteration,
                margin: margin.as_f64(),
                floor: opts.mu_floor.as_f64(),
            });
        }
        let next = riccati_step(&p, m, c)?;
        if !linalg::all_finite(&next) {
            return Err(RiccatiError::NonConvergence { iterations: iteration, last_step: f64::INFINITY });
        }
        last_step = (&next - &p).norm();
        p = next;
        if last_step < opts.tol {
            match GareSolution::certify(p.clone(), m, c, opts.tol, iteration) {
                Ok(sol) if sol.margin >= opts.mu_floor => return Ok(sol),
                Ok(sol) => {
                    return Err(RiccatiError::MarginViolation {
                        iteration,
                        margin: sol.margin.as_f64(),
                        floor: opts.mu_floor.as_f64(),
                    })
                }
                // Residual may still be a hair above tol; keep iterating.
                Err(RiccatiError::Certification { .. }) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Err(RiccatiError::NonConvergence { iterations: opts.max_iter, last_step: last_step.as_f64() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn reference() -> (SystemModel<f64>, CostSpec<f64>) {
        let g = scenarios::three_state_game();
        (g.truth, g.cost)
    }

    #[test]
    fn zero_dynamics_converge_in_one_step() {
        let (m, c) = reference();
        let m0 = SystemModel::new(DMatrix::zeros(3, 3), m.b1().clone(), m.b2().clone()).unwrap();
        let sol = solve_gare(&m0, &c, &SolverOptions::default()).unwrap();
        assert_eq!(sol.iterations(), 1);
        assert_eq!(sol.p(), c.q());
        assert!(sol.k().iter().all(|&v| v == 0.0));
        assert!(sol.l().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reference_solution_is_certified() {
        let (m, c) = reference();
        let sol = solve_gare(&m, &c, &SolverOptions::default()).unwrap();
        assert!(sol.residual() <= 1e-10);
        assert!(sol.margin() > 0.0);
        assert!(sol.rho_cl() < 1.0);
        let block = gains_from_p(sol.p(), &m, &c).unwrap();
        assert_eq!(&block.k, sol.k());
    }

    #[test]
    fn gains_at_zero_p() {
        let (m, c) = reference();
        let g = gains_from_p(&DMatrix::zeros(3, 3), &m, &c).unwrap();
        assert!(g.k.iter().chain(g.l.iter()).all(|&v| v == 0.0));
        assert_eq!(g.h[(0, 0)], 1.1);
        assert_eq!(g.h[(1, 1)], -2.5);
        assert_eq!(g.h[(0, 1)], 0.0);
    }

    #[test]
    fn gains_without_second_player_match_lqr() {
        let (m, c) = reference();
        let lqr = SystemModel::new(m.a().clone(), m.b1().clone(), DMatrix::zeros(3, 1)).unwrap();
        let p = DMatrix::from_row_slice(3, 3, &[2.0, 0.1, 0.0, 0.1, 1.5, 0.2, 0.0, 0.2, 1.0]);
        let g = gains_from_p(&p, &lqr, &c).unwrap();
        let b1 = lqr.b1();
        let expected = (c.ru() + b1.transpose() * &p * b1).try_inverse().unwrap() * b1.transpose() * &p * lqr.a();
        assert!((&g.k - expected).norm() < 1e-14);
        assert!(g.l.norm() < 1e-14);
    }

    #[test]
    fn block_and_explicit_gains_agree_on_reference() {
        let (m, c) = reference();
        let sol = solve_gare(&m, &c, &SolverOptions::default()).unwrap();
        let (k, l) = gains_explicit(sol.p(), &m, &c).unwrap();
        assert!((&k - sol.k()).norm() < 1e-9);
        assert!((&l - sol.l()).norm() < 1e-9);
    }

    #[test]
    fn explicit_gains_report_singular_schur_block() {
        // Rv = B2'PB2 makes the player-2 block vanish.
        let m = SystemModel::new(DMatrix::identity(1, 1) * 0.5, DMatrix::identity(1, 1), DMatrix::identity(1, 1)).unwrap();
        let c = CostSpec::new(DMatrix::identity(1, 1), DMatrix::identity(1, 1), DMatrix::identity(1, 1)).unwrap();
        let p = DMatrix::identity(1, 1);
        assert!(matches!(gains_explicit(&p, &m, &c), Err(RiccatiError::SingularSchurBlock { .. })));
        // H itself stays invertible, so the joint solve still works.
        assert!(gains_from_p(&p, &m, &c).is_ok());
    }

    #[test]
    fn singular_h_is_reported() {
        // H(P) = [[4, 2], [2, 1]] for this choice.
        let one = || DMatrix::identity(1, 1);
        let m = SystemModel::new(one() * 0.5, one(), one()).unwrap();
        let c = CostSpec::new(one(), one() * 2.0, one()).unwrap();
        let p = one() * 2.0;
        assert!(matches!(gains_from_p(&p, &m, &c), Err(RiccatiError::SingularH { .. })));
        assert!(matches!(gare_residual(&p, &m, &c), Err(RiccatiError::SingularH { .. })));
    }

    #[test]
    fn closed_loop_examples() {
        let (m, _) = reference();
        let z1 = DMatrix::zeros(1, 3);
        assert_eq!(&closed_loop(&m, &z1, &z1).unwrap(), m.a());
        let no_inputs = SystemModel::new(m.a().clone(), DMatrix::zeros(3, 1), DMatrix::zeros(3, 1)).unwrap();
        let k = DMatrix::from_element(1, 3, 7.0);
        assert_eq!(&closed_loop(&no_inputs, &k, &k).unwrap(), m.a());
        assert!(closed_loop(&m, &DMatrix::zeros(2, 3), &z1).is_err());
    }

    #[test]
    fn lyapunov_examples() {
        let w = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        assert!((solve_lyapunov(&DMatrix::zeros(2, 2), &w).unwrap() - &w).norm() < 1e-15);
        let x = solve_lyapunov(&(DMatrix::identity(3, 3) * 0.5), &DMatrix::identity(3, 3)).unwrap();
        assert!((x - DMatrix::identity(3, 3) * (4.0 / 3.0)).norm() < 1e-14);
        let unstable = DMatrix::identity(2, 2) * 1.0;
        assert!(matches!(solve_lyapunov(&unstable, &w), Err(RiccatiError::UnstableClosedLoop { .. })));
    }

    #[test]
    fn lyapunov_at_saddle_reproduces_p() {
        let (m, c) = reference();
        let sol = solve_gare(&m, &c, &SolverOptions::default()).unwrap();
        let acl = closed_loop(&m, sol.k(), sol.l()).unwrap();
        let w = c.q() + sol.k().transpose() * c.ru() * sol.k() - sol.l().transpose() * c.rv() * sol.l();
        let x = solve_lyapunov(&acl, &w).unwrap();
        assert!((x - sol.p()).norm() < 1e-8);
    }

    #[test]
    fn residual_examples() {
        let (m, c) = reference();
        let f0 = gare_residual(&DMatrix::zeros(3, 3), &m, &c).unwrap();
        assert!((f0 + c.q()).norm() < 1e-15);

        let sol = solve_gare(&m, &c, &SolverOptions::default()).unwrap();
        assert!(gare_residual(sol.p(), &m, &c).unwrap().norm() <= 1e-10);

        let eps = 1e-4;
        let bumped = sol.p() + DMatrix::identity(3, 3) * eps;
        let r = gare_residual(&bumped, &m, &c).unwrap().norm();
        // First-order: F(P + εI) ≈ ε (I - Acl'Acl).
        let acl = closed_loop(&m, sol.k(), sol.l()).unwrap();
        let lin = (DMatrix::identity(3, 3) - acl.transpose() * &acl).norm() * eps;
        assert!(r > 0.0);
        assert!((r - lin).abs() < 10.0 * eps * eps + 1e-10, "r={r} lin={lin}");
    }

    #[test]
    fn uncontrollable_unstable_plant_fails() {
        let (_, c) = reference();
        let m = SystemModel::new(DMatrix::identity(3, 3) * 3.0, DMatrix::zeros(3, 1), DMatrix::zeros(3, 1)).unwrap();
        assert!(solve_gare(&m, &c, &SolverOptions::default()).is_err());
    }

    #[test]
    fn margin_floor_aborts_iteration() {
        let (m, c) = reference();
        let opts = SolverOptions::default().with_mu_floor(10.0);
        assert!(matches!(solve_gare(&m, &c, &opts), Err(RiccatiError::MarginViolation { iteration: 1, .. })));
    }

    #[test]
    fn block_and_explicit_gains_agree_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        while checked < 100 {
            let (m, c) = scenarios::random_game(&mut rng, 4);
            let Ok(sol) = solve_gare(&m, &c, &SolverOptions::default()) else { continue };
            let (k, l) = gains_explicit(sol.p(), &m, &c).unwrap();
            assert!((&k - sol.k()).norm() < 1e-8);
            assert!((&l - sol.l()).norm() < 1e-8);
            checked += 1;
        }
    }

    #[test]
    fn spectral_radius_matches_power_iteration_oracle() {
        let (m, _) = reference();
        // A is nonnegative with a dominant real eigenvalue.
        let mut v = DVector::from_element(3, 1.0);
        let mut lambda = 0.0;
        for _ in 0..2000 {
            let w = m.a() * &v;
            lambda = w.norm() / v.norm();
            v = w.normalize();
        }
        let rho = spectral_radius(m.a()).unwrap();
        assert!((rho - lambda).abs() < 1e-6 * lambda, "{rho} vs {lambda}");
    }

    #[test]
    fn lyapunov_matches_truncated_series() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let mut a = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
            let rho = spectral_radius(&a).unwrap();
            a *= 0.8 / rho;
            let w = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
            let w = &w * w.transpose();
            let mut sum = DMatrix::zeros(4, 4);
            let mut term = w.clone();
            for _ in 0..400 {
                sum += &term;
                term = a.transpose() * term * &a;
            }
            let x = solve_lyapunov(&a, &w).unwrap();
            assert!((x - sum).norm() < 1e-9);
        }
    }

    #[test]
    fn single_precision_solve() {
        let g = scenarios::three_state_game_as::<f32>();
        let sol = solve_gare(&g.truth, &g.cost, &SolverOptions::default()).unwrap();
        let g64 = scenarios::three_state_game();
        let sol64 = solve_gare(&g64.truth, &g64.cost, &SolverOptions::default()).unwrap();
        let diff = sol.p().map(|v| v as f64) - sol64.p();
        assert!(diff.norm() < 1e-4);
    }
}
