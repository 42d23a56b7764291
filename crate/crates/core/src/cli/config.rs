//! TOML run configuration.
//!
//! ```toml
//! [system]
//! a  = [[0.85, 0.10, 0.10], [0.10, 0.62, 0.08], [0.10, 0.06, 0.72]]
//! b1 = [[0.80], [0.25], [0.12]]
//! b2 = [[0.10], [0.08], [0.15]]
//!
//! [cost]
//! q  = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
//! ru = [[1.1]]
//! rv = [[2.5]]
//!
//! [noise]
//! sigma_w = 0.01            # optional: covariance = [[...]]
//!
//! [initial_state]
//! x0 = [1.2, -0.90, 0.70]   # or: mean = [...], std = 0.1
//!
//! [learning]
//! horizon = 50000
//! lambda = 1.0
//! delta = 0.2
//!
//! [run]
//! seeds = [0, 1, 2]
//! ```
//!
//! Every other key is optional; unknown keys are rejected.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::certify::RegularityMargins;
use crate::controller::{ExplorationSpec, InitialModel, RunSettings};
use crate::model::{CostSpec, GameSpec, InitialState, NoiseSpec, SystemModel};
use crate::riccati::SolverOptions;

pub const DEFAULT_OUTPUT_DIR: &str = "out";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub system: SystemSection,
    pub cost: CostSection,
    pub noise: NoiseSection,
    pub initial_state: InitialStateSection,
    pub learning: LearningSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub a: Vec<Vec<f64>>,
    pub b1: Vec<Vec<f64>>,
    pub b2: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    pub q: Vec<Vec<f64>>,
    pub ru: Vec<Vec<f64>>,
    pub rv: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub sigma_w: f64,
    pub covariance: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialStateSection {
    pub x0: Option<Vec<f64>>,
    pub mean: Option<Vec<f64>>,
    pub std: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearningSection {
    pub horizon: usize,
    pub lambda: f64,
    pub delta: f64,
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    pub s_theta: Option<f64>,
    pub sigma_eta_sq: Option<f64>,
    pub sigma_zeta_sq: Option<f64>,
    #[serde(default = "default_tol_alpha")]
    pub tol_alpha: f64,
    #[serde(default = "default_theta0_perturbation")]
    pub theta0_perturbation: f64,
    #[serde(default = "default_theta0_attempts")]
    pub theta0_max_attempts: usize,
    #[serde(default = "default_blowup")]
    pub blowup_threshold: f64,
    #[serde(default = "default_max_failed")]
    pub max_failed_episodes: usize,
}

fn default_mu() -> f64 {
    0.05
}
fn default_gamma() -> f64 {
    0.02
}
fn default_tol_alpha() -> f64 {
    1e-3
}
fn default_theta0_perturbation() -> f64 {
    0.05
}
fn default_theta0_attempts() -> usize {
    100
}
fn default_blowup() -> f64 {
    1e6
}
fn default_max_failed() -> usize {
    10
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_solver_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_solver_tol() -> f64 {
    1e-10
}
fn default_max_iter() -> usize {
    10_000
}

impl Default for SolverSection {
    fn default() -> Self {
        Self { tol: default_solver_tol(), max_iter: default_max_iter() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub output_dir: Option<PathBuf>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl Default for RunSection {
    fn default() -> Self {
        Self { seeds: default_seeds(), output_dir: None }
    }
}

/// A validated configuration ready to run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub spec: GameSpec<f64>,
    pub settings: RunSettings<f64>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// SHA-256 of the configuration text.
    pub config_hash: String,
    pub source: Option<PathBuf>,
}

fn matrix(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, ConfigError> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 {
        return Err(invalid(format!("{name} must be a nonempty matrix")));
    }
    if let Some(bad) = rows.iter().position(|row| row.len() != c) {
        return Err(invalid(format!("{name}: row {bad} has {} entries, expected {c}", rows[bad].len())));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn model_err(e: impl std::fmt::Display) -> ConfigError {
    invalid(e.to_string())
}

impl FileConfig {
    pub fn into_run_config(self, text_hash: String, source: Option<PathBuf>) -> Result<RunConfig, ConfigError> {
        let truth = SystemModel::new(matrix("system.a", &self.system.a)?, matrix("system.b1", &self.system.b1)?, matrix("system.b2", &self.system.b2)?)
            .map_err(model_err)?;
        let cost = CostSpec::new(matrix("cost.q", &self.cost.q)?, matrix("cost.ru", &self.cost.ru)?, matrix("cost.rv", &self.cost.rv)?)
            .map_err(model_err)?;
        let n = truth.dims().n;
        let noise = match &self.noise.covariance {
            None => NoiseSpec::isotropic(n, self.noise.sigma_w),
            Some(cov) => NoiseSpec::with_covariance(self.noise.sigma_w, matrix("noise.covariance", cov)?),
        }
        .map_err(model_err)?;
        let s = &self.initial_state;
        let x0 = match (&s.x0, &s.mean, s.std) {
            (Some(x0), None, None) => InitialState::Fixed(DVector::from_column_slice(x0)),
            (None, Some(mean), Some(std)) if std >= 0.0 => InitialState::Gaussian { mean: DVector::from_column_slice(mean), std },
            _ => return Err(invalid("initial_state needs either x0, or mean together with a nonnegative std")),
        };
        let spec = GameSpec::new(truth, cost, noise, x0).map_err(model_err)?;

        let l = &self.learning;
        if l.horizon < 1 {
            return Err(invalid("learning.horizon must be at least 1"));
        }
        let margins = RegularityMargins::new(l.mu, l.gamma).map_err(model_err)?;
        let exploration = match (l.sigma_eta_sq, l.sigma_zeta_sq) {
            (None, None) => None,
            (Some(a), Some(b)) => Some(ExplorationSpec::new(a, b).map_err(model_err)?),
            _ => return Err(invalid("set both learning.sigma_eta_sq and learning.sigma_zeta_sq, or neither")),
        };
        if !(self.solver.tol > 0.0) || self.solver.max_iter == 0 {
            return Err(invalid("solver.tol must be positive and solver.max_iter at least 1"));
        }
        let settings = RunSettings {
            horizon: l.horizon,
            lambda: l.lambda,
            delta: l.delta,
            margins,
            exploration,
            s_theta: l.s_theta,
            tol_alpha: l.tol_alpha,
            solver: SolverOptions { tol: self.solver.tol, max_iter: self.solver.max_iter, mu_floor: 0.0 },
            blowup_threshold: l.blowup_threshold,
            max_failed_episodes: l.max_failed_episodes,
            initial_model: InitialModel::Perturbed { scale: l.theta0_perturbation, max_attempts: l.theta0_max_attempts },
        };
        settings.validate().map_err(model_err)?;

        if self.run.seeds.is_empty() {
            return Err(invalid("run.seeds must not be empty"));
        }
        Ok(RunConfig {
            spec,
            settings,
            seeds: self.run.seeds,
            output_dir: self.run.output_dir.unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
            config_hash: text_hash,
            source,
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn parse_config(text: &str, source: Option<PathBuf>) -> Result<RunConfig, ConfigError> {
    let file: FileConfig = toml::from_str(text)?;
    file.into_run_config(sha256_hex(text.as_bytes()), source)
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_config(&text, Some(path.to_path_buf()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;

    const SHIPPED: &str = include_str!("../../../../configs/reference_game.toml");

    #[test]
    fn shipped_config_is_the_reference_scenario() {
        let cfg = parse_config(SHIPPED, None).unwrap();
        let reference = scenarios::three_state_game();
        assert_eq!(cfg.spec, reference);
        assert_eq!(cfg.settings.horizon, 50_000);
        assert_eq!(cfg.settings.lambda, 1.0);
        assert_eq!(cfg.settings.delta, 0.2);
        assert_eq!(cfg.spec.noise.sigma_w(), 0.01);
    }

    #[test]
    fn delta_out_of_range() {
        let text = SHIPPED.replace("delta = 0.2", "delta = 1.5");
        let err = parse_config(&text, None).unwrap_err();
        assert!(matches!(err, ConfigError::Invalid(ref m) if m.contains("delta")), "{err}");
    }

    #[test]
    fn missing_block_is_a_parse_error() {
        let text: String = SHIPPED.lines().filter(|l| !l.trim_start().starts_with("b2")).collect::<Vec<_>>().join("\n");
        let err = parse_config(&text, None).unwrap_err();
        assert!(matches!(err, ConfigError::Parse(_)));
        assert!(err.to_string().contains("b2"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = SHIPPED.replace("[learning]", "[learning]\nlamda = 3.0");
        let err = parse_config(&text, None).unwrap_err();
        assert!(err.to_string().contains("lamda"), "{err}");
    }

    #[test]
    fn empty_seeds_rejected() {
        let text = format!("{SHIPPED}\n").replace("seeds = [", "seeds = [] #");
        assert!(matches!(parse_config(&text, None), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn hash_tracks_text() {
        let a = parse_config(SHIPPED, None).unwrap();
        let b = parse_config(&format!("{SHIPPED}\n# comment\n"), None).unwrap();
        assert_ne!(a.config_hash, b.config_hash);
        assert_eq!(a.config_hash.len(), 64);
    }
}
