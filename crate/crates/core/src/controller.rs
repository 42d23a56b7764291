//! The online learning loop.
//!
//! Both players run certainty-equivalent saddle feedback computed from the
//! current certified surrogate, plus Gaussian exploration. Data accumulate
//! in a ridge design; when `det V` has doubled since the start of the
//! episode, the surrogate is re-selected (estimate, confidence set, segment
//! shrinkage) and new gains are installed.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::certify::{self, CertifiedModel, Irregularity, RegularityMargins, ShrinkContext};
use crate::estimator::{ConfidenceSet, DesignState, EstimatorError};
use crate::linalg;
use crate::metrics::{benchmark_cost, stage_cost, RegretSeries};
use crate::model::{GameSpec, ModelError, ThetaMatrix};
use crate::riccati::{closed_loop, solve_gare, GareSolution, RiccatiError, SolverOptions};
use crate::Real;

/// Name of the generator recorded in run manifests.
pub const RNG_NAME: &str = "ChaCha8Rng (rand_chacha 0.9), streams: 0 disturbance, 1 exploration, 2 initial model, 3 initial state";

const STREAM_DISTURBANCE: u64 = 0;
const STREAM_EXPLORATION: u64 = 1;
const STREAM_INITIAL_MODEL: u64 = 2;
const STREAM_INITIAL_STATE: u64 = 3;

/// Slack allowed when checking the episode-count bound in floating point.
const EPISODE_BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error("invalid run settings: {0}")]
    Settings(String),
    #[error("state norm {norm:e} exceeded {threshold:e} at t = {t}")]
    StateBlowup { t: usize, norm: f64, threshold: f64 },
    #[error("no certified surrogate for {consecutive} consecutive episodes (limit {limit}) at t = {t}")]
    CertificationCollapse { t: usize, consecutive: usize, limit: usize },
    #[error("initial model is not regular: {0}")]
    InitialModel(Irregularity),
    #[error("no regular initial model after {attempts} perturbation draws")]
    InitialModelSearch { attempts: usize },
    #[error("true game has no certified saddle: {0}")]
    Truth(RiccatiError),
    #[error("episode count {episodes} exceeds log2(det V_T / lambda^d) + 1 = {bound}")]
    EpisodeBound { episodes: usize, bound: f64 },
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Riccati(#[from] RiccatiError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Exploration variances for the two players.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExplorationSpec<T: Real> {
    pub sigma_eta_sq: T,
    pub sigma_zeta_sq: T,
}

impl<T: Real> ExplorationSpec<T> {
    pub fn new(sigma_eta_sq: T, sigma_zeta_sq: T) -> Result<Self, ControllerError> {
        if !(sigma_eta_sq >= T::zero() && sigma_zeta_sq >= T::zero()) || !sigma_eta_sq.is_finite() || !sigma_zeta_sq.is_finite() {
            return Err(ControllerError::Settings(format!(
                "exploration variances must be finite and nonnegative, got {} and {}",
                sigma_eta_sq.as_f64(),
                sigma_zeta_sq.as_f64()
            )));
        }
        Ok(Self { sigma_eta_sq, sigma_zeta_sq })
    }

    /// `σ² = T^{-1/2}` for both players.
    pub fn for_horizon(horizon: usize) -> Self {
        let s = T::lit((horizon.max(1) as f64).powf(-0.5));
        Self { sigma_eta_sq: s, sigma_zeta_sq: s }
    }

    pub fn off() -> Self {
        Self { sigma_eta_sq: T::zero(), sigma_zeta_sq: T::zero() }
    }
}

/// The episode currently being played.
#[derive(Debug, Clone)]
pub struct EpisodeState<T: Real> {
    pub k: usize,
    pub t_k: usize,
    pub gain_k: DMatrix<T>,
    pub gain_l: DMatrix<T>,
    pub logdet_at_start: T,
    pub certified: CertifiedModel<T>,
}

impl<T: Real> EpisodeState<T> {
    pub fn new(k: usize, t_k: usize, logdet_at_start: T, certified: CertifiedModel<T>) -> Self {
        Self {
            k,
            t_k,
            gain_k: certified.solution.k().clone(),
            gain_l: certified.solution.l().clone(),
            logdet_at_start,
            certified,
        }
    }
}

/// One step's inputs together with the exploration draws inside them.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlAction<T: Real> {
    pub u: DVector<T>,
    pub v: DVector<T>,
    pub eta: DVector<T>,
    pub zeta: DVector<T>,
}

fn gaussian<T: Real, R: rand::Rng + ?Sized>(len: usize, var: T, rng: &mut R) -> DVector<T> {
    let sd = var.sqrt();
    DVector::from_fn(len, |_, _| sd * T::sample_standard_normal(rng))
}

/// `u = -K x + η`, `v = -L x + ζ` with `η ~ N(0, σ_η² I)`, `ζ ~ N(0, σ_ζ² I)`.
/// Both draws are always taken from `rng`, so the stream position does not
/// depend on the variances.
pub fn control<T: Real, R: rand::Rng + ?Sized>(
    x: &DVector<T>,
    ep: &EpisodeState<T>,
    expl: &ExplorationSpec<T>,
    rng: &mut R,
) -> ControlAction<T> {
    let eta = gaussian(ep.gain_k.nrows(), expl.sigma_eta_sq, rng);
    let zeta = gaussian(ep.gain_l.nrows(), expl.sigma_zeta_sq, rng);
    let u = -(&ep.gain_k * x) + &eta;
    let v = -(&ep.gain_l * x) + &zeta;
    ControlAction { u, v, eta, zeta }
}

/// Doubling trigger `det V_t ≥ 2 det V_{t_k}`, in log space.
pub fn should_update<T: Real>(logdet_now: T, logdet_at_start: T) -> bool {
    logdet_now >= logdet_at_start + T::lit(std::f64::consts::LN_2)
}

/// How the initial surrogate is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialModel<T: Real> {
    /// Truth plus a random perturbation of Frobenius norm
    /// `scale · ‖Θ★‖_F`, redrawn until regular.
    Perturbed { scale: T, max_attempts: usize },
    Given(ThetaMatrix<T>),
}

/// Everything the loop needs besides the game itself.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings<T: Real> {
    pub horizon: usize,
    pub lambda: T,
    pub delta: T,
    pub margins: RegularityMargins<T>,
    /// `None` selects `σ² = T^{-1/2}`.
    pub exploration: Option<ExplorationSpec<T>>,
    /// `None` selects `1.5 ‖Θ★‖_F`.
    pub s_theta: Option<T>,
    pub tol_alpha: T,
    pub solver: SolverOptions<T>,
    pub blowup_threshold: T,
    pub max_failed_episodes: usize,
    pub initial_model: InitialModel<T>,
}

impl<T: Real> RunSettings<T> {
    pub fn new(horizon: usize) -> Self {
        Self {
            horizon,
            lambda: T::one(),
            delta: T::lit(0.2),
            margins: RegularityMargins::new(T::lit(0.05), T::lit(0.02)).expect("default margins are valid"),
            exploration: None,
            s_theta: None,
            tol_alpha: T::lit(1e-3),
            solver: SolverOptions::default(),
            blowup_threshold: T::lit(1e6),
            max_failed_episodes: 10,
            initial_model: InitialModel::Perturbed { scale: T::lit(0.05), max_attempts: 100 },
        }
    }

    pub fn validate(&self) -> Result<(), ControllerError> {
        let bad = |msg: String| Err(ControllerError::Settings(msg));
        if !(self.lambda > T::zero()) {
            return bad(format!("lambda must be positive, got {}", self.lambda.as_f64()));
        }
        if !(self.delta > T::zero() && self.delta < T::one()) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta.as_f64()));
        }
        if !(self.tol_alpha > T::zero() && self.tol_alpha <= T::one()) {
            return bad(format!("tol_alpha must lie in (0, 1], got {}", self.tol_alpha.as_f64()));
        }
        if !(self.blowup_threshold > T::zero()) {
            return bad(format!("blowup_threshold must be positive, got {}", self.blowup_threshold.as_f64()));
        }
        if let Some(s) = self.s_theta {
            if !(s >= T::zero()) {
                return bad(format!("S_theta must be nonnegative, got {}", s.as_f64()));
            }
        }
        if let Some(e) = &self.exploration {
            ExplorationSpec::new(e.sigma_eta_sq, e.sigma_zeta_sq)?;
        }
        if let InitialModel::Perturbed { scale, max_attempts } = &self.initial_model {
            if !(*scale >= T::zero()) || *max_attempts == 0 {
                return bad("initial model perturbation needs scale >= 0 and at least one attempt".into());
            }
        }
        Ok(())
    }
}

/// One simulated step; `regret` and `normalized` include this step's cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRow {
    pub t: usize,
    pub cost: f64,
    pub regret: f64,
    /// `regret / sqrt(t + 1)`.
    pub normalized: f64,
    /// `‖x_t‖`.
    pub state_norm: f64,
}

/// One episode. Quantities that do not exist for the initial episode
/// (ridge estimate, shrinkage) are NaN there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRow {
    pub k: usize,
    pub t_k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub theta_hat_err: f64,
    pub theta_tilde_err: f64,
    pub k_err: f64,
    pub l_err: f64,
    pub margin: f64,
    pub rho_cl: f64,
    /// `λ_min(V_{t_k}) / t_k`.
    pub min_eig_ratio: f64,
    pub failure_flag: bool,
    /// Whether the truth lies in this episode's confidence set.
    pub truth_in_set: bool,
    /// Spectral radius of the true plant under the installed gains.
    pub rho_true: f64,
}

/// Output of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub seed: u64,
    pub steps: Vec<StepRow>,
    pub episodes: Vec<EpisodeRow>,
    pub j_star: f64,
    pub s_theta: f64,
    pub exploration: (f64, f64),
    /// `log det V_T - d log λ`.
    pub final_logdet_gap: f64,
    /// `log2(det V_T / λ^d) + 1`.
    pub episode_bound: f64,
    /// `Σ‖η_t‖²` and `Σ‖ζ_t‖²`.
    pub exploration_energy: (f64, f64),
    pub initial_theta: Vec<f64>,
}

impl RunTrace {
    pub fn normalized_regret(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.normalized).collect()
    }

    pub fn final_regret(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.regret)
    }
}

/// Square root `F` of the disturbance covariance (`F F' = Σ_w`).
fn covariance_factor<T: Real>(cov: &DMatrix<T>) -> DMatrix<T> {
    let n = cov.nrows();
    let off_diag = (0..n).any(|i| (0..n).any(|j| i != j && cov[(i, j)] != T::zero()));
    if !off_diag {
        return DMatrix::from_diagonal(&cov.diagonal().map(|v| v.max(T::zero()).sqrt()));
    }
    let eig = SymmetricEigen::new(cov.clone());
    let root = eig.eigenvalues.map(|v| v.max(T::zero()).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&root)
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn initial_surrogate<T: Real>(
    spec: &GameSpec<T>,
    settings: &RunSettings<T>,
    seed: u64,
) -> Result<CertifiedModel<T>, ControllerError> {
    let truth = spec.theta_star();
    let certify_at = |theta: ThetaMatrix<T>| {
        CertifiedModel::initial(theta, spec.dims, &spec.cost, &settings.margins, &settings.solver)
    };
    match &settings.initial_model {
        InitialModel::Given(theta) => certify_at(theta.clone()).map_err(ControllerError::InitialModel),
        InitialModel::Perturbed { scale, max_attempts } => {
            let mut rng = rng_for(seed, STREAM_INITIAL_MODEL);
            let size = *scale * truth.frobenius_norm();
            let (rows, cols) = truth.shape();
            for attempt in 1..=*max_attempts {
                let g = DMatrix::from_fn(rows, cols, |_, _| T::sample_standard_normal(&mut rng));
                let norm = g.norm();
                let step = if norm > T::zero() { g * (size / norm) } else { g };
                let theta = ThetaMatrix::new(truth.as_matrix() + step, spec.dims)?;
                match certify_at(theta) {
                    Ok(m) => {
                        log::debug!("initial model accepted after {attempt} draw(s)");
                        return Ok(m);
                    }
                    Err(why) => log::debug!("initial draw {attempt} rejected: {why}"),
                }
            }
            Err(ControllerError::InitialModelSearch { attempts: *max_attempts })
        }
    }
}

struct Reference<T: Real> {
    theta: ThetaMatrix<T>,
    solution: GareSolution<T>,
}

impl<T: Real> Reference<T> {
    fn row(
        &self,
        spec: &GameSpec<T>,
        ep: &EpisodeState<T>,
        conf: &ConfidenceSet<T>,
        theta_hat: Option<&ThetaMatrix<T>>,
        min_eig_ratio: f64,
    ) -> EpisodeRow {
        let err = |a: &ThetaMatrix<T>| (a.as_matrix() - self.theta.as_matrix()).norm().as_f64();
        let rho_true = closed_loop(&spec.truth, &ep.gain_k, &ep.gain_l)
            .ok()
            .and_then(|acl| linalg::spectral_radius(&acl).ok())
            .map_or(f64::NAN, |r| r.as_f64());
        let c = &ep.certified;
        EpisodeRow {
            k: ep.k,
            t_k: ep.t_k,
            alpha: if ep.k == 0 { f64::NAN } else { c.alpha.as_f64() },
            beta: conf.beta.as_f64(),
            theta_hat_err: theta_hat.map_or(f64::NAN, err),
            theta_tilde_err: err(&c.theta),
            k_err: (&ep.gain_k - self.solution.k()).norm().as_f64(),
            l_err: (&ep.gain_l - self.solution.l()).norm().as_f64(),
            margin: c.solution.margin().as_f64(),
            rho_cl: c.solution.rho_cl().as_f64(),
            min_eig_ratio,
            failure_flag: c.failure_flag,
            truth_in_set: conf.contains(&self.theta),
            rho_true,
        }
    }
}

/// Simulates `settings.horizon` steps of the learning loop on the true
/// plant. Deterministic in `(spec, settings, seed)`.
pub fn run<T: Real>(spec: &GameSpec<T>, settings: &RunSettings<T>, seed: u64) -> Result<RunTrace, ControllerError> {
    settings.validate()?;
    let dims = spec.dims;
    let truth = Reference {
        theta: spec.theta_star(),
        solution: solve_gare(&spec.truth, &spec.cost, &settings.solver).map_err(ControllerError::Truth)?,
    };
    let j_star = benchmark_cost(&truth.solution, &spec.noise);
    let s_theta = settings.s_theta.unwrap_or_else(|| T::lit(1.5) * truth.theta.frobenius_norm());
    let expl = settings.exploration.unwrap_or_else(|| ExplorationSpec::for_horizon(settings.horizon));
    let sigma_w = spec.noise.sigma_w();
    let ctx = ShrinkContext {
        dims,
        cost: &spec.cost,
        margins: &settings.margins,
        opts: &settings.solver,
        tol_alpha: settings.tol_alpha,
    };

    let mut design = DesignState::new(dims, settings.lambda)?;
    let initial = initial_surrogate(spec, settings, seed)?;
    let initial_theta = initial.theta.vec().iter().map(|v| v.as_f64()).collect();
    let mut ep = EpisodeState::new(0, 0, design.logdet_v(), initial);
    let conf0 = ConfidenceSet::from_state(&design, sigma_w, settings.delta, s_theta)?;
    let mut episodes = vec![truth.row(spec, &ep, &conf0, None, f64::NAN)];

    let mut w_rng = rng_for(seed, STREAM_DISTURBANCE);
    let mut e_rng = rng_for(seed, STREAM_EXPLORATION);
    let mut x = spec.x0.sample(&mut rng_for(seed, STREAM_INITIAL_STATE));
    let noise_factor = covariance_factor(spec.noise.covariance());

    let mut regret = RegretSeries::new(j_star);
    let mut steps = Vec::with_capacity(settings.horizon);
    let mut energy = (0.0f64, 0.0f64);
    let mut consecutive_failures = 0usize;
    let mut z = DVector::zeros(dims.d());

    for t in 0..settings.horizon {
        let state_norm = x.norm();
        if !(state_norm <= settings.blowup_threshold) {
            return Err(ControllerError::StateBlowup {
                t,
                norm: state_norm.as_f64(),
                threshold: settings.blowup_threshold.as_f64(),
            });
        }
        let act = control(&x, &ep, &expl, &mut e_rng);
        energy.0 += act.eta.norm_squared().as_f64();
        energy.1 += act.zeta.norm_squared().as_f64();
        let c = stage_cost(&spec.cost, &x, &act.u, &act.v);
        regret.accumulate(c);
        steps.push(StepRow {
            t,
            cost: c.as_f64(),
            regret: regret.regret(),
            normalized: regret.normalized(),
            state_norm: state_norm.as_f64(),
        });

        let g = DVector::from_fn(dims.n, |_, _| T::sample_standard_normal(&mut w_rng));
        let w = &noise_factor * g;
        let x_next = spec.truth.step(&x, &act.u, &act.v, &w);
        z.rows_mut(0, dims.n).copy_from(&x);
        z.rows_mut(dims.n, dims.m1).copy_from(&act.u);
        z.rows_mut(dims.n + dims.m1, dims.m2).copy_from(&act.v);
        design.update(&z, &x_next)?;
        x = x_next;

        if should_update(design.logdet_v(), ep.logdet_at_start) {
            let t_k = t + 1;
            let k = ep.k + 1;
            let conf = ConfidenceSet::from_state(&design, sigma_w, settings.delta, s_theta)?;
            let theta_hat = conf.center.clone();
            let next = certify::shrink(&theta_hat, &ep.certified, &conf, ctx, k);
            if next.failure_flag {
                consecutive_failures += 1;
                if consecutive_failures > settings.max_failed_episodes {
                    return Err(ControllerError::CertificationCollapse {
                        t: t_k,
                        consecutive: consecutive_failures,
                        limit: settings.max_failed_episodes,
                    });
                }
            } else {
                consecutive_failures = 0;
            }
            ep = EpisodeState::new(k, t_k, design.logdet_v(), next);
            let ratio = design.min_eig_ratio()?.as_f64();
            episodes.push(truth.row(spec, &ep, &conf, Some(&theta_hat), ratio));
            log::debug!(
                "episode {k} at t = {t_k}: alpha = {:.4}, beta = {:.4e}, flag = {}",
                ep.certified.alpha.as_f64(),
                conf.beta.as_f64(),
                ep.certified.failure_flag
            );
        }
    }

    let final_logdet_gap = design.logdet_gap().as_f64();
    let episode_bound = final_logdet_gap / std::f64::consts::LN_2 + 1.0;
    if episodes.len() as f64 > episode_bound + EPISODE_BOUND_SLACK {
        return Err(ControllerError::EpisodeBound { episodes: episodes.len(), bound: episode_bound });
    }

    Ok(RunTrace {
        seed,
        steps,
        episodes,
        j_star: j_star.as_f64(),
        s_theta: s_theta.as_f64(),
        exploration: (expl.sigma_eta_sq.as_f64(), expl.sigma_zeta_sq.as_f64()),
        final_logdet_gap,
        episode_bound,
        exploration_energy: energy,
        initial_theta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::InitialState;
    use crate::scenarios;

    fn reference_certified() -> CertifiedModel<f64> {
        let g = scenarios::three_state_game();
        let margins = RegularityMargins::new(0.05, 0.02).unwrap();
        CertifiedModel::initial(g.theta_star(), g.dims, &g.cost, &margins, &SolverOptions::default()).unwrap()
    }

    #[test]
    fn control_without_state_or_exploration_is_zero() {
        let ep = EpisodeState::new(0, 0, 0.0, reference_certified());
        let mut rng = rng_for(1, 1);
        let a = control(&DVector::zeros(3), &ep, &ExplorationSpec::off(), &mut rng);
        assert_eq!(a.u, DVector::zeros(1));
        assert_eq!(a.v, DVector::zeros(1));
    }

    #[test]
    fn zero_gains_give_pure_exploration() {
        let mut ep = EpisodeState::new(0, 0, 0.0, reference_certified());
        ep.gain_k.fill(0.0);
        ep.gain_l.fill(0.0);
        let expl = ExplorationSpec::new(0.3, 0.7).unwrap();
        let x = DVector::from_vec(vec![1.0, -2.0, 3.0]);
        let a = control(&x, &ep, &expl, &mut rng_for(5, 1));
        assert_eq!(a.u, a.eta);
        assert_eq!(a.v, a.zeta);
        let b = control(&x, &ep, &expl, &mut rng_for(5, 1));
        assert_eq!(a, b);
    }

    #[test]
    fn doubling_trigger() {
        assert!(!should_update(1.0f64, 1.0));
        assert!(should_update(1.0 + std::f64::consts::LN_2, 1.0));
        assert!(!should_update(1.0 + 0.69, 1.0));
    }

    #[test]
    fn scalar_doubling_fires_after_one_sample() {
        // With d = 1, λ = 1 and unit regressors V_t = 1 + t.
        let start = 1.0f64.ln();
        let fired = (0..5).find(|t| should_update((1.0 + *t as f64).ln(), start));
        assert_eq!(fired, Some(1));
    }

    #[test]
    fn empty_horizon() {
        let g = scenarios::three_state_game();
        let trace = run(&g, &RunSettings::new(0), 3).unwrap();
        assert!(trace.steps.is_empty());
        assert_eq!(trace.episodes.len(), 1);
    }

    #[test]
    fn equilibrium_at_origin_stays_there() {
        let mut g = scenarios::three_state_game();
        g.noise = crate::model::NoiseSpec::isotropic(3, 0.0).unwrap();
        g.x0 = InitialState::Fixed(DVector::zeros(3));
        let mut s = RunSettings::new(200);
        s.exploration = Some(ExplorationSpec::off());
        s.initial_model = InitialModel::Given(g.theta_star());
        let trace = run(&g, &s, 0).unwrap();
        assert!(trace.steps.iter().all(|r| r.state_norm == 0.0 && r.cost == 0.0 && r.regret == 0.0));
        assert_eq!(trace.j_star, 0.0);
        assert_eq!(trace.episodes.len(), 1);
    }

    #[test]
    fn short_run_is_deterministic_and_respects_episode_bound() {
        let g = scenarios::three_state_game();
        let s = RunSettings::new(500);
        let a = run(&g, &s, 11).unwrap();
        let b = run(&g, &s, 11).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
        assert_eq!(a.steps.len(), 500);
        assert!(a.episodes.len() >= 2);
        assert!(a.episodes.len() as f64 <= a.episode_bound);
        assert!(a.episodes.windows(2).all(|w| w[0].t_k < w[1].t_k));
        let c = run(&g, &s, 12).unwrap();
        assert_ne!(a.steps[10].cost, c.steps[10].cost);
    }

    #[test]
    fn initial_model_is_a_small_regular_perturbation() {
        let g = scenarios::three_state_game();
        let s = RunSettings::new(1);
        let m = initial_surrogate(&g, &s, 4).unwrap();
        let rel = (m.theta.as_matrix() - g.theta_star().as_matrix()).norm() / g.theta_star().frobenius_norm();
        assert!((rel - 0.05).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_settings() {
        let g = scenarios::three_state_game();
        let mut s = RunSettings::new(10);
        s.delta = 1.5;
        assert!(matches!(run(&g, &s, 0), Err(ControllerError::Settings(_))));
        let mut s = RunSettings::new(10);
        s.lambda = 0.0;
        assert!(matches!(run(&g, &s, 0), Err(ControllerError::Settings(_))));
    }

    #[test]
    fn exploration_second_moment() {
        let g = scenarios::three_state_game();
        let s = RunSettings::new(10_000);
        let trace = run(&g, &s, 21).unwrap();
        let target = trace.exploration.0;
        let mean = trace.exploration_energy.0 / 10_000.0;
        assert!(mean >= 0.9 * target && mean <= 1.1 * target, "{mean} vs {target}");
    }

    #[test]
    fn f32_run_completes() {
        let g = scenarios::three_state_game_as::<f32>();
        let trace = run(&g, &RunSettings::new(300), 2).unwrap();
        assert_eq!(trace.steps.len(), 300);
        assert!(trace.steps.iter().all(|r| r.cost.is_finite()));
    }
}
