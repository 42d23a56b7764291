//! Trace files: one CSV of steps and one of episodes per seed, plus a TOML
//! manifest for the whole run. Floats are written with 17 significant
//! digits so that files round-trip exactly.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::controller::{EpisodeRow, RunTrace, StepRow, RNG_NAME};

pub const SCHEMA: &str = "trace-v1";
pub const STEP_COLUMNS: [&str; 5] = ["t", "cost", "regret", "normalized_regret", "state_norm"];
pub const EPISODE_COLUMNS: [&str; 14] = [
    "k",
    "t_k",
    "alpha",
    "beta",
    "theta_hat_err",
    "theta_tilde_err",
    "k_err",
    "l_err",
    "margin",
    "rho_cl",
    "min_eig_ratio",
    "failure_flag",
    "truth_in_set",
    "rho_true",
];

/// `{:.16e}`: 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

pub fn steps_csv(rows: &[StepRow]) -> String {
    let mut out = STEP_COLUMNS.join(",");
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{}", r.t, num(r.cost), num(r.regret), num(r.normalized), num(r.state_norm));
    }
    out
}

pub fn episodes_csv(rows: &[EpisodeRow]) -> String {
    let mut out = EPISODE_COLUMNS.join(",");
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.k,
            r.t_k,
            num(r.alpha),
            num(r.beta),
            num(r.theta_hat_err),
            num(r.theta_tilde_err),
            num(r.k_err),
            num(r.l_err),
            num(r.margin),
            num(r.rho_cl),
            num(r.min_eig_ratio),
            flag(r.failure_flag),
            flag(r.truth_in_set),
            num(r.rho_true),
        );
    }
    out
}

pub fn steps_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("steps_{seed}.csv"))
}

pub fn episodes_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("episodes_{seed}.csv"))
}

pub fn write_trace(dir: &Path, trace: &RunTrace) -> io::Result<()> {
    fs::write(steps_path(dir, trace.seed), steps_csv(&trace.steps))?;
    fs::write(episodes_path(dir, trace.seed), episodes_csv(&trace.episodes))
}

/// Per-seed entry of the manifest.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SeedEntry {
    pub seed: u64,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<TraceSummary>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct TraceSummary {
    pub steps: usize,
    pub episodes: usize,
    pub episode_bound: String,
    pub j_star: String,
    pub final_regret: String,
    pub final_normalized_regret: String,
    pub final_theta_tilde_err: String,
    pub s_theta: String,
    pub sigma_eta_sq: String,
    pub sigma_zeta_sq: String,
    pub failed_episodes: usize,
    pub truth_in_all_sets: bool,
    pub steps_file: String,
    pub episodes_file: String,
}

impl TraceSummary {
    pub fn of(trace: &RunTrace) -> Self {
        let last = trace.episodes.last();
        Self {
            steps: trace.steps.len(),
            episodes: trace.episodes.len(),
            episode_bound: num(trace.episode_bound),
            j_star: num(trace.j_star),
            final_regret: num(trace.final_regret()),
            final_normalized_regret: num(trace.steps.last().map_or(0.0, |s| s.normalized)),
            final_theta_tilde_err: num(last.map_or(f64::NAN, |e| e.theta_tilde_err)),
            s_theta: num(trace.s_theta),
            sigma_eta_sq: num(trace.exploration.0),
            sigma_zeta_sq: num(trace.exploration.1),
            failed_episodes: trace.episodes.iter().filter(|e| e.failure_flag).count(),
            truth_in_all_sets: trace.episodes.iter().all(|e| e.truth_in_set),
            steps_file: format!("steps_{}.csv", trace.seed),
            episodes_file: format!("episodes_{}.csv", trace.seed),
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Manifest {
    pub schema: String,
    pub version: String,
    pub rng: String,
    pub config_sha256: String,
    pub config_path: String,
    pub horizon: usize,
    pub step_columns: Vec<String>,
    pub episode_columns: Vec<String>,
    pub seeds: Vec<SeedEntry>,
}

impl Manifest {
    pub fn new(config_sha256: &str, config_path: Option<&Path>, horizon: usize, seeds: Vec<SeedEntry>) -> Self {
        Self {
            schema: SCHEMA.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            rng: RNG_NAME.into(),
            config_sha256: config_sha256.into(),
            config_path: config_path.map_or_else(|| "-".into(), |p| p.display().to_string()),
            horizon,
            step_columns: STEP_COLUMNS.iter().map(|s| s.to_string()).collect(),
            episode_columns: EPISODE_COLUMNS.iter().map(|s| s.to_string()).collect(),
            seeds,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn all_ok(&self) -> bool {
        self.seeds.iter().all(|s| s.status == "ok")
    }
}
