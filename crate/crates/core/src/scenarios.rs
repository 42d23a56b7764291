//! Ready-made game instances: the three-state reference game used throughout
//! the examples and tests, and a generator of random well-posed games.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::linalg;
use crate::model::{CostSpec, GameSpec, InitialState, NoiseSpec, SystemModel};
use crate::Real;

pub const REFERENCE_A: [[f64; 3]; 3] = [[0.85, 0.10, 0.10], [0.10, 0.62, 0.08], [0.10, 0.06, 0.72]];
pub const REFERENCE_B1: [f64; 3] = [0.80, 0.25, 0.12];
pub const REFERENCE_B2: [f64; 3] = [0.10, 0.08, 0.15];
pub const REFERENCE_RU: f64 = 1.1;
pub const REFERENCE_RV: f64 = 2.5;
pub const REFERENCE_SIGMA_W: f64 = 0.01;
pub const REFERENCE_X0: [f64; 3] = [1.2, -0.90, 0.70];

/// Three states, one input per player, `Q = I`, `Ru = 1.1`, `Rv = 2.5`,
/// isotropic noise with `σ_w = 0.01`, fixed initial state.
pub fn three_state_game_as<T: Real>() -> GameSpec<T> {
    let a = DMatrix::from_fn(3, 3, |i, j| T::lit(REFERENCE_A[i][j]));
    let b1 = DMatrix::from_fn(3, 1, |i, _| T::lit(REFERENCE_B1[i]));
    let b2 = DMatrix::from_fn(3, 1, |i, _| T::lit(REFERENCE_B2[i]));
    let truth = SystemModel::new(a, b1, b2).expect("reference plant is well formed");
    let cost = CostSpec::new(
        DMatrix::identity(3, 3),
        DMatrix::from_element(1, 1, T::lit(REFERENCE_RU)),
        DMatrix::from_element(1, 1, T::lit(REFERENCE_RV)),
    )
    .expect("reference weights are valid");
    let noise = NoiseSpec::isotropic(3, T::lit(REFERENCE_SIGMA_W)).expect("valid noise");
    let x0 = InitialState::Fixed(DVector::from_fn(3, |i, _| T::lit(REFERENCE_X0[i])));
    GameSpec::new(truth, cost, noise, x0).expect("reference game is consistent")
}

pub fn three_state_game() -> GameSpec<f64> {
    three_state_game_as()
}

/// A random game with `n, m1, m2 ≤ max_dim`: `A` rescaled to spectral radius
/// in `[0.2, 1.05]`, a weak disturbing player (`B2` entries ~ 0.2) and
/// `Rv` large enough that the saddle problem is usually well posed. Callers
/// still need to check solvability.
pub fn random_game<R: Rng + ?Sized>(rng: &mut R, max_dim: usize) -> (SystemModel<f64>, CostSpec<f64>) {
    let n = rng.random_range(1..=max_dim);
    let m1 = rng.random_range(1..=max_dim);
    let m2 = rng.random_range(1..=max_dim);
    let mut gauss = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| f64::sample_standard_normal(rng));

    let mut a = gauss(n, n);
    let rho = linalg::spectral_radius(&a).unwrap_or(1.0).max(1e-3);
    let b1 = gauss(n, m1);
    let b2 = gauss(n, m2) * 0.2;
    let qf = gauss(n, n);
    let ruf = gauss(m1, m1);
    a *= rng.random_range(0.2..1.05) / rho;
    let q = &qf * qf.transpose() / n as f64 + DMatrix::identity(n, n) * 0.1;
    let ru = &ruf * ruf.transpose() / m1 as f64 + DMatrix::identity(m1, m1) * 0.5;
    let rv = DMatrix::identity(m2, m2) * rng.random_range(5.0..10.0);
    (
        SystemModel::new(a, b1, b2).expect("finite random plant"),
        CostSpec::new(q, ru, rv).expect("random weights are definite"),
    )
}
