//! Numerical checks of the perturbation theory behind the method.
//!
//! * first-order sensitivity of `P`, `K`, `L` to the plant parameters,
//! * the derivative of the residual map in `P` being the Lyapunov operator
//!   `X ↦ X - Acl' X Acl`,
//! * the stationarity identities `B1'P Acl = Ru K`, `B2'P Acl = -Rv L`,
//! * the quadratic cost gap around the saddle gains and its sign structure,
//! * the Neumann-series form of the inverse Lyapunov operator.
//!
//! Everything runs in `f64`. Finite-difference steps below about `1e-7` are
//! dominated by rounding and are not used by default.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::certify::{check_regularity, RegularityMargins};
use crate::linalg::{self, log_log_slope};
use crate::metrics::closed_loop_cost;
use crate::model::{split_theta, CostSpec, Dims, GameSpec, ModelError, NoiseSpec, SystemModel, ThetaMatrix};
use crate::riccati::{closed_loop, gare_residual, solve_gare, solve_lyapunov, GareSolution, RiccatiError, SolverOptions};
use crate::Real;

pub const DEFAULT_FD_SCALES: [f64; 3] = [1e-4, 1e-5, 1e-6];
pub const DEFAULT_GAP_SCALES: [f64; 5] = [1e-3, 3e-4, 1e-4, 3e-5, 1e-5];
pub const DEFAULT_ENVELOPE_SCALES: [f64; 4] = [1e-4, 1e-5, 1e-6, 1e-7];
pub const DEFAULT_DIRECTIONS: usize = 20;
/// Riccati tolerance used by every probe.
pub const PROBE_TOL: f64 = 1e-13;
/// Differences below this are treated as exactly zero (map constant along
/// the direction).
const ZERO_DIFF: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("direction must have unit Frobenius norm, got {0}")]
    NotUnit(f64),
    #[error("invalid scales: {0}")]
    BadScales(String),
    #[error("{discarded} of {total} probes left the stabilizing region")]
    TooManyDiscarded { discarded: usize, total: usize },
    #[error("truncation length must be positive")]
    EmptySeries,
    #[error(transparent)]
    Riccati(#[from] RiccatiError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub fn probe_options() -> SolverOptions<f64> {
    SolverOptions { tol: PROBE_TOL, ..SolverOptions::default() }
}

fn check_scales(scales: &[f64], min_len: usize) -> Result<(), AnalysisError> {
    if scales.len() < min_len {
        return Err(AnalysisError::BadScales(format!("need at least {min_len} scales")));
    }
    if scales.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(AnalysisError::BadScales("scales must be positive and finite".into()));
    }
    if scales.windows(2).any(|w| w[1] >= w[0]) {
        return Err(AnalysisError::BadScales("scales must be strictly decreasing".into()));
    }
    Ok(())
}

fn check_unit(m: &DMatrix<f64>) -> Result<(), AnalysisError> {
    let norm = m.norm();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(AnalysisError::NotUnit(norm));
    }
    Ok(())
}

fn unit_gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    loop {
        let g = DMatrix::from_fn(rows, cols, |_, _| f64::sample_standard_normal(rng));
        let norm = g.norm();
        if norm > 0.0 {
            return g / norm;
        }
    }
}

/// Seeded random unit-Frobenius parameter directions.
pub fn random_directions(dims: Dims, count: usize, seed: u64) -> Vec<ThetaMatrix<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| ThetaMatrix::new(unit_gaussian(dims.n, dims.d(), &mut rng), dims).expect("direction has Theta shape"))
        .collect()
}

/// Seeded random unit-Frobenius symmetric matrix.
pub fn random_symmetric_unit(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = linalg::symmetrize(&unit_gaussian(n, n, &mut rng));
    let norm = s.norm();
    s / norm
}

/// Sensitivity of the saddle solution along one parameter direction.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationReport {
    pub direction: ThetaMatrix<f64>,
    pub scales: Vec<f64>,
    /// `‖P(θ★ + εΔ) - P★‖_F` per scale; likewise for the gains.
    pub dp: Vec<f64>,
    pub dk: Vec<f64>,
    pub dl: Vec<f64>,
    /// Log-log slopes of the three maps; `None` when the map does not move
    /// along this direction.
    pub slope_p: Option<f64>,
    pub slope_k: Option<f64>,
    pub slope_l: Option<f64>,
}

fn slope_of(scales: &[f64], diffs: &[f64]) -> Option<f64> {
    if diffs.iter().all(|d| *d <= ZERO_DIFF) {
        return None;
    }
    log_log_slope(scales, diffs).or(Some(f64::NAN))
}

fn ratios(scales: &[f64], diffs: &[f64]) -> Vec<f64> {
    diffs.iter().zip(scales).map(|(d, s)| d / s).collect()
}

/// Relative gap between the difference quotients at the largest and the
/// smallest scale; zero for a map that does not move.
fn spread(scales: &[f64], diffs: &[f64]) -> f64 {
    let r = ratios(scales, diffs);
    let (first, last) = (r[0], r[r.len() - 1]);
    if first.max(last) <= ZERO_DIFF / scales[scales.len() - 1] {
        return 0.0;
    }
    (first - last).abs() / last.abs().max(f64::MIN_POSITIVE)
}

impl PerturbationReport {
    pub fn ratios_p(&self) -> Vec<f64> {
        ratios(&self.scales, &self.dp)
    }

    pub fn ratios_k(&self) -> Vec<f64> {
        ratios(&self.scales, &self.dk)
    }

    pub fn ratios_l(&self) -> Vec<f64> {
        ratios(&self.scales, &self.dl)
    }

    /// Largest relative spread of the difference quotients across scales,
    /// over the three maps.
    pub fn max_spread(&self) -> f64 {
        [&self.dp, &self.dk, &self.dl]
            .iter()
            .map(|d| spread(&self.scales, d))
            .fold(0.0, f64::max)
    }

    /// Slopes that exist, in the order P, K, L.
    pub fn slopes(&self) -> Vec<f64> {
        [self.slope_p, self.slope_k, self.slope_l].into_iter().flatten().collect()
    }
}

/// Solves the GARE along `θ★ + εΔ` for each scale.
pub fn probe_direction(
    theta_star: &ThetaMatrix<f64>,
    dims: Dims,
    cost: &CostSpec<f64>,
    reference: &GareSolution<f64>,
    direction: &ThetaMatrix<f64>,
    scales: &[f64],
) -> Result<PerturbationReport, AnalysisError> {
    check_unit(direction.as_matrix())?;
    check_scales(scales, 2)?;
    let opts = probe_options();
    let (mut dp, mut dk, mut dl) = (Vec::new(), Vec::new(), Vec::new());
    for &eps in scales {
        let theta = ThetaMatrix::new(theta_star.as_matrix() + direction.as_matrix() * eps, dims)?;
        let sol = solve_gare(&split_theta(&theta, dims)?, cost, &opts)?;
        dp.push((sol.p() - reference.p()).norm());
        dk.push((sol.k() - reference.k()).norm());
        dl.push((sol.l() - reference.l()).norm());
    }
    Ok(PerturbationReport {
        direction: direction.clone(),
        scales: scales.to_vec(),
        slope_p: slope_of(scales, &dp),
        slope_k: slope_of(scales, &dk),
        slope_l: slope_of(scales, &dl),
        dp,
        dk,
        dl,
    })
}

/// Outcome of probing many directions.
#[derive(Debug)]
pub struct LipschitzSummary {
    pub reports: Vec<Result<PerturbationReport, AnalysisError>>,
    /// Empirical sensitivity constants: the largest difference quotient seen.
    pub c_p: f64,
    pub c_k: f64,
    pub c_l: f64,
}

impl LipschitzSummary {
    pub fn successful(&self) -> impl Iterator<Item = &PerturbationReport> {
        self.reports.iter().filter_map(|r| r.as_ref().ok())
    }

    pub fn failures(&self) -> usize {
        self.reports.iter().filter(|r| r.is_err()).count()
    }

    /// Largest `|slope - 1|` over all directions and maps.
    pub fn worst_slope_deviation(&self) -> f64 {
        self.successful()
            .flat_map(|r| r.slopes())
            .map(|s| if s.is_finite() { (s - 1.0).abs() } else { f64::INFINITY })
            .fold(0.0, f64::max)
    }

    pub fn worst_spread(&self) -> f64 {
        self.successful().map(PerturbationReport::max_spread).fold(0.0, f64::max)
    }
}

/// Finite-difference sensitivity of the saddle solution at `theta_star`
/// along `directions` seeded random unit directions. Probes run in parallel;
/// a failed probe is recorded, not fatal.
pub fn lipschitz_probe(
    theta_star: &ThetaMatrix<f64>,
    dims: Dims,
    cost: &CostSpec<f64>,
    directions: usize,
    scales: &[f64],
    seed: u64,
) -> Result<LipschitzSummary, AnalysisError> {
    check_scales(scales, 2)?;
    let reference = solve_gare(&split_theta(theta_star, dims)?, cost, &probe_options())?;
    let dirs = random_directions(dims, directions, seed);
    let reports: Vec<_> = dirs
        .par_iter()
        .map(|d| probe_direction(theta_star, dims, cost, &reference, d, scales))
        .collect();
    let max_ratio = |f: fn(&PerturbationReport) -> Vec<f64>| {
        reports.iter().filter_map(|r| r.as_ref().ok()).flat_map(f).fold(0.0, f64::max)
    };
    Ok(LipschitzSummary {
        c_p: max_ratio(PerturbationReport::ratios_p),
        c_k: max_ratio(PerturbationReport::ratios_k),
        c_l: max_ratio(PerturbationReport::ratios_l),
        reports,
    })
}

/// `‖[F(P★ + εX) - F(P★)]/ε - (X - Acl' X Acl)‖_F` for a unit symmetric `X`.
pub fn envelope_check(
    sol: &GareSolution<f64>,
    m: &SystemModel<f64>,
    c: &CostSpec<f64>,
    x: &DMatrix<f64>,
    eps: f64,
) -> Result<f64, AnalysisError> {
    check_unit(x)?;
    check_scales(&[eps], 1)?;
    let acl = closed_loop(m, sol.k(), sol.l())?;
    let base = gare_residual(sol.p(), m, c)?;
    let moved = gare_residual(&(sol.p() + x * eps), m, c)?;
    let fd = (moved - base) / eps;
    let lyap = x - acl.transpose() * x * &acl;
    Ok((fd - lyap).norm())
}

/// Stationarity residuals `(‖B1'P Acl - Ru K‖_F, ‖B2'P Acl + Rv L‖_F)`.
pub fn stationarity_check<T: Real>(sol: &GareSolution<T>, m: &SystemModel<T>, c: &CostSpec<T>) -> Result<(T, T), AnalysisError> {
    let acl = closed_loop(m, sol.k(), sol.l())?;
    let pa = sol.p() * acl;
    let r1 = (m.b1().transpose() * &pa - c.ru() * sol.k()).norm();
    let r2 = (m.b2().transpose() * &pa + c.rv() * sol.l()).norm();
    Ok((r1, r2))
}

/// Cost gaps around the saddle gains.
#[derive(Debug, Clone, PartialEq)]
pub struct CostGapFit {
    pub scales: Vec<f64>,
    /// Mean `|J(K, L) - J★|` over the directions, per scale.
    pub mean_gaps: Vec<f64>,
    pub slope: f64,
    pub discarded: usize,
    pub total: usize,
    /// `J(K★, L★)` from the same Lyapunov solver used for the probes.
    pub j_ref: f64,
}

struct GainProbe<'a> {
    m: &'a SystemModel<f64>,
    c: &'a CostSpec<f64>,
    noise: &'a NoiseSpec<f64>,
    sol: GareSolution<f64>,
    j_ref: f64,
}

impl<'a> GainProbe<'a> {
    fn new(m: &'a SystemModel<f64>, c: &'a CostSpec<f64>, noise: &'a NoiseSpec<f64>) -> Result<Self, AnalysisError> {
        let sol = solve_gare(m, c, &probe_options())?;
        let j_ref = closed_loop_cost(m, c, noise, sol.k(), sol.l())?;
        Ok(Self { m, c, noise, sol, j_ref })
    }

    /// `J(K★ + s ΔK, L★ + s ΔL) - J(K★, L★)`, or `None` if unstable.
    fn gap(&self, dk: &DMatrix<f64>, dl: &DMatrix<f64>, s: f64) -> Option<f64> {
        let k = self.sol.k() + dk * s;
        let l = self.sol.l() + dl * s;
        match closed_loop_cost(self.m, self.c, self.noise, &k, &l) {
            Ok(j) => Some(j - self.j_ref),
            Err(RiccatiError::UnstableClosedLoop { .. }) => None,
            Err(e) => {
                log::warn!("cost probe failed: {e}");
                None
            }
        }
    }

    fn gain_directions(&self, count: usize, seed: u64) -> Vec<(DMatrix<f64>, DMatrix<f64>)> {
        let d = self.m.dims();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let joint = unit_gaussian(d.m1 + d.m2, d.n, &mut rng);
                (joint.rows(0, d.m1).into_owned(), joint.rows(d.m1, d.m2).into_owned())
            })
            .collect()
    }
}

/// Perturbs `(K★, L★)` jointly along seeded random unit directions and fits
/// the log-log slope of the mean absolute cost gap against the scale.
pub fn cost_gap_fit(
    m: &SystemModel<f64>,
    c: &CostSpec<f64>,
    noise: &NoiseSpec<f64>,
    scales: &[f64],
    directions: usize,
    seed: u64,
) -> Result<CostGapFit, AnalysisError> {
    check_scales(scales, 2)?;
    let probe = GainProbe::new(m, c, noise)?;
    let dirs = probe.gain_directions(directions, seed);
    let mut discarded = 0;
    let mut mean_gaps = Vec::with_capacity(scales.len());
    for &s in scales {
        let gaps: Vec<f64> = dirs.iter().filter_map(|(dk, dl)| probe.gap(dk, dl, s)).collect();
        discarded += dirs.len() - gaps.len();
        if gaps.is_empty() {
            return Err(AnalysisError::TooManyDiscarded { discarded, total: dirs.len() * scales.len() });
        }
        mean_gaps.push(gaps.iter().map(|g| g.abs()).sum::<f64>() / gaps.len() as f64);
    }
    let total = dirs.len() * scales.len();
    if 2 * discarded > total {
        return Err(AnalysisError::TooManyDiscarded { discarded, total });
    }
    let slope = log_log_slope(scales, &mean_gaps).unwrap_or(f64::NAN);
    Ok(CostGapFit { scales: scales.to_vec(), mean_gaps, slope, discarded, total, j_ref: probe.j_ref })
}

/// Largest violations of the saddle inequalities
/// `J(K★ + ΔK, L★) ≥ J★` and `J(K★, L★ + ΔL) ≤ J★`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaddleSignReport {
    pub max_k_violation: f64,
    pub max_l_violation: f64,
    pub probes: usize,
    pub discarded: usize,
}

pub fn saddle_sign_probe(
    m: &SystemModel<f64>,
    c: &CostSpec<f64>,
    noise: &NoiseSpec<f64>,
    scales: &[f64],
    directions: usize,
    seed: u64,
) -> Result<SaddleSignReport, AnalysisError> {
    check_scales(scales, 1)?;
    let probe = GainProbe::new(m, c, noise)?;
    let d = m.dims();
    let dirs = probe.gain_directions(directions, seed);
    let zero_k = DMatrix::zeros(d.m1, d.n);
    let zero_l = DMatrix::zeros(d.m2, d.n);
    let mut report = SaddleSignReport { max_k_violation: 0.0, max_l_violation: 0.0, probes: 0, discarded: 0 };
    for (dk, dl) in &dirs {
        let (dk, dl) = (dk / dk.norm().max(f64::MIN_POSITIVE), dl / dl.norm().max(f64::MIN_POSITIVE));
        for &s in scales {
            report.probes += 2;
            match probe.gap(&dk, &zero_l, s) {
                Some(g) => report.max_k_violation = report.max_k_violation.max(-g),
                None => report.discarded += 1,
            }
            match probe.gap(&zero_k, &dl, s) {
                Some(g) => report.max_l_violation = report.max_l_violation.max(g),
                None => report.discarded += 1,
            }
        }
    }
    Ok(report)
}

/// `‖ℒ⁻¹(X) - Σ_{t<N} (Acl')ᵗ X Aclᵗ‖_F`, with `ℒ⁻¹` the direct solve.
pub fn lyapunov_series_check(acl: &DMatrix<f64>, x: &DMatrix<f64>, terms: usize) -> Result<f64, AnalysisError> {
    if terms == 0 {
        return Err(AnalysisError::EmptySeries);
    }
    let direct = solve_lyapunov(acl, x)?;
    let x = linalg::symmetrize(x);
    let mut sum = DMatrix::zeros(x.nrows(), x.ncols());
    let mut term = x;
    for _ in 0..terms {
        sum += &term;
        term = acl.transpose() * term * acl;
    }
    Ok((direct - sum).norm())
}

/// Smallest `N` with `(ρ + 0.01)^N < target`.
pub fn series_length(rho: f64, target: f64) -> usize {
    let r = (rho + 0.01).min(1.0 - 1e-12);
    (target.ln() / r.ln()).ceil().max(1.0) as usize
}

/// One line of a verification report.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub name: String,
    pub measured: f64,
    pub threshold: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerificationReport {
    pub rows: Vec<CheckRow>,
}

impl VerificationReport {
    pub fn push(&mut self, name: &str, measured: f64, threshold: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.rows.push(CheckRow {
            name: name.into(),
            measured,
            threshold: threshold.into(),
            passed,
            detail: detail.into(),
        });
    }

    pub fn passed(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.passed)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("check,measured,threshold,passed,detail\n");
        for r in &self.rows {
            let detail = r.detail.replace([',', '\n'], ";");
            let _ = writeln!(out, "{},{:.16e},{},{},{}", r.name, r.measured, r.threshold, r.passed, detail);
        }
        out
    }
}

/// Knobs of the verification battery.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifySettings {
    pub directions: usize,
    pub fd_scales: Vec<f64>,
    pub gap_scales: Vec<f64>,
    pub envelope_scales: Vec<f64>,
    pub seed: u64,
}

impl Default for VerifySettings {
    fn default() -> Self {
        Self {
            directions: DEFAULT_DIRECTIONS,
            fd_scales: DEFAULT_FD_SCALES.to_vec(),
            gap_scales: DEFAULT_GAP_SCALES.to_vec(),
            envelope_scales: DEFAULT_ENVELOPE_SCALES.to_vec(),
            seed: 0,
        }
    }
}

/// Runs the full battery on the true game. A regularity failure of the
/// truth stops the battery after a single failing row.
pub fn verify_game(spec: &GameSpec<f64>, margins: &RegularityMargins<f64>, settings: &VerifySettings) -> VerificationReport {
    let mut report = VerificationReport::default();
    let theta_star = spec.theta_star();
    let opts = probe_options();
    let sol = match check_regularity(&theta_star, spec.dims, &spec.cost, margins, &opts) {
        Ok(sol) => {
            report.push(
                "regularity",
                sol.margin(),
                format!("margin>={};rho<={}", margins.mu(), margins.max_rho()),
                true,
                format!("rho_cl={:.6}", sol.rho_cl()),
            );
            sol
        }
        Err(why) => {
            report.push("regularity", f64::NAN, format!("margin>={};rho<={}", margins.mu(), margins.max_rho()), false, why.to_string());
            return report;
        }
    };
    let m = &spec.truth;
    let c = &spec.cost;
    let l_trivial = m.b2().iter().all(|v| *v == 0.0);
    let mut record = |name: &str, r: Result<(f64, String, bool, String), AnalysisError>| match r {
        Ok((measured, threshold, passed, detail)) => report.push(name, measured, threshold, passed, detail),
        Err(e) => report.push(name, f64::NAN, "-", false, e.to_string()),
    };

    record(
        "stationarity",
        stationarity_check(&sol, m, c).map(|(r1, r2)| {
            let worst = r1.max(r2);
            (worst, "<=1e-8".into(), worst <= 1e-8, format!("player1={r1:.3e};player2={r2:.3e}"))
        }),
    );

    let x = random_symmetric_unit(spec.dims.n, settings.seed);
    record(
        "envelope",
        envelope_check(&sol, m, c, &x, 1e-6).map(|d| (d, "<=1e-4".into(), d <= 1e-4, "eps=1e-6".into())),
    );
    record(
        "envelope_order",
        settings
            .envelope_scales
            .iter()
            .map(|&e| envelope_check(&sol, m, c, &x, e))
            .collect::<Result<Vec<_>, _>>()
            .map(|ds| {
                let slope = log_log_slope(&settings.envelope_scales, &ds).unwrap_or(f64::NAN);
                let detail = ds.iter().map(|d| format!("{d:.3e}")).collect::<Vec<_>>().join(";");
                (slope, "1+-0.2".into(), (slope - 1.0).abs() <= 0.2, detail)
            }),
    );

    record(
        "sensitivity_slopes",
        lipschitz_probe(&theta_star, spec.dims, c, settings.directions, &settings.fd_scales, settings.seed).map(|s| {
            let dev = s.worst_slope_deviation();
            let ok = s.failures() == 0 && dev <= 0.1;
            let detail = format!(
                "C_P={:.4};C_K={:.4};C_L={:.4};failed_probes={};max_spread={:.3e}{}",
                s.c_p,
                s.c_k,
                s.c_l,
                s.failures(),
                s.worst_spread(),
                if l_trivial { ";L_trivial" } else { "" }
            );
            (1.0 + dev, "1+-0.1".into(), ok, detail)
        }),
    );

    record(
        "cost_gap_slope",
        cost_gap_fit(m, c, &spec.noise, &settings.gap_scales, settings.directions, settings.seed).map(|f| {
            let ok = (1.9..=2.1).contains(&f.slope);
            (f.slope, "[1.9,2.1]".into(), ok, format!("discarded={}/{}", f.discarded, f.total))
        }),
    );

    record(
        "saddle_sign",
        saddle_sign_probe(m, c, &spec.noise, &settings.gap_scales, settings.directions, settings.seed).map(|r| {
            let worst = r.max_k_violation.max(r.max_l_violation);
            let detail = format!("k_violation={:.3e};l_violation={:.3e};discarded={}", r.max_k_violation, r.max_l_violation, r.discarded);
            (worst, "<=1e-12".into(), worst <= 1e-12, detail)
        }),
    );

    let terms = series_length(sol.rho_cl(), 1e-12);
    record(
        "lyapunov_series",
        closed_loop(m, sol.k(), sol.l())
            .map_err(AnalysisError::from)
            .and_then(|acl| lyapunov_series_check(&acl, &DMatrix::identity(spec.dims.n, spec.dims.n), terms))
            .map(|d| (d, "<=1e-9".into(), d <= 1e-9, format!("terms={terms}"))),
    );
    report
}
