//! Stage costs, average-cost benchmarks and regret bookkeeping.

use nalgebra::{DMatrix, DVector};

use crate::model::{CostSpec, NoiseSpec, SystemModel};
use crate::riccati::{closed_loop, solve_lyapunov, GareSolution, RiccatiError};
use crate::Real;

/// `x'Qx + u'Ru u - v'Rv v`.
pub fn stage_cost<T: Real>(cost: &CostSpec<T>, x: &DVector<T>, u: &DVector<T>, v: &DVector<T>) -> T {
    quad(cost.q(), x) + quad(cost.ru(), u) - quad(cost.rv(), v)
}

fn quad<T: Real>(m: &DMatrix<T>, x: &DVector<T>) -> T {
    x.dot(&(m * x))
}

/// Game value per step, `tr(P★ Σ_w)`.
pub fn benchmark_cost<T: Real>(solution: &GareSolution<T>, noise: &NoiseSpec<T>) -> T {
    (solution.p() * noise.covariance()).trace()
}

/// Average cost of the stationary policy pair `u = -Kx`, `v = -Lx` on the
/// true plant: `tr(P_{K,L} Σ_w)` with
/// `P_{K,L} = Q + K'Ru K - L'Rv L + Acl' P_{K,L} Acl`.
pub fn closed_loop_cost<T: Real>(
    truth: &SystemModel<T>,
    cost: &CostSpec<T>,
    noise: &NoiseSpec<T>,
    k: &DMatrix<T>,
    l: &DMatrix<T>,
) -> Result<T, RiccatiError> {
    let acl = closed_loop(truth, k, l)?;
    let w = cost.q() + k.transpose() * cost.ru() * k - l.transpose() * cost.rv() * l;
    let p = solve_lyapunov(&acl, &w)?;
    Ok((p * noise.covariance()).trace())
}

/// Running regret `Reg(t) = Σ c_s - t J★`, accumulated in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretSeries<T: Real> {
    j_star: T,
    cumulative_cost: f64,
    steps: usize,
}

impl<T: Real> RegretSeries<T> {
    pub fn new(j_star: T) -> Self {
        Self { j_star, cumulative_cost: 0.0, steps: 0 }
    }

    /// Adds one stage cost and returns the updated regret.
    pub fn accumulate(&mut self, cost: T) -> f64 {
        self.cumulative_cost += cost.as_f64();
        self.steps += 1;
        self.regret()
    }

    pub fn j_star(&self) -> T {
        self.j_star
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn cumulative_cost(&self) -> f64 {
        self.cumulative_cost
    }

    pub fn regret(&self) -> f64 {
        self.cumulative_cost - self.steps as f64 * self.j_star.as_f64()
    }

    /// `Reg(t) / sqrt(t)`; zero before the first step.
    pub fn normalized(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.regret() / (self.steps as f64).sqrt()
        }
    }
}

/// Pointwise mean of equally long series. Returns `None` for an empty
/// input or mismatched lengths.
pub fn seed_average(series: &[Vec<f64>]) -> Option<Vec<f64>> {
    let first = series.first()?;
    if series.iter().any(|s| s.len() != first.len()) {
        return None;
    }
    let k = series.len() as f64;
    Some((0..first.len()).map(|i| series.iter().map(|s| s[i]).sum::<f64>() / k).collect())
}
