//! Command-line front end: `run`, `verify`, `golden`.

pub mod config;
pub mod trace;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{self, VerifySettings};
use crate::controller::{self, RunTrace};
use crate::linalg;
use crate::metrics::benchmark_cost;
use crate::riccati::{closed_loop, solve_gare};

pub use config::{load_config, parse_config, ConfigError, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_RUN: i32 = 4;
pub const EXIT_VERIFY: i32 = 5;

pub const OUTPUT_DIR_ENV: &str = "ZSLQ_OUTPUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "zslq", version, about = "Certified online learning for zero-sum LQ games")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the learning loop for every seed and write trace files.
    Run(CommonArgs),
    /// Run the numerical verification battery on the true game.
    Verify(CommonArgs),
    /// Recompute the reference saddle solution and write it out.
    Golden(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Comma-separated seeds, replacing the configured list.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Output directory (falls back to $ZSLQ_OUTPUT_DIR, then the config).
    #[arg(long, env = OUTPUT_DIR_ENV)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub horizon_override: Option<usize>,
}

impl CommonArgs {
    fn load(&self) -> Result<RunConfig, ConfigError> {
        let mut cfg = load_config(&self.config)?;
        if let Some(seeds) = &self.seeds {
            if seeds.is_empty() {
                return Err(ConfigError::Invalid("--seeds must not be empty".into()));
            }
            cfg.seeds = seeds.clone();
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(h) = self.horizon_override {
            if h == 0 {
                return Err(ConfigError::Invalid("--horizon-override must be at least 1".into()));
            }
            cfg.settings.horizon = h;
        }
        Ok(cfg)
    }
}

/// Runs every seed in parallel. Each seed writes its own trace files; a
/// failing seed is recorded in the manifest and does not stop the others.
pub fn run_experiment(cfg: &RunConfig) -> std::io::Result<(trace::Manifest, Vec<Option<RunTrace>>)> {
    fs::create_dir_all(&cfg.output_dir)?;
    let results: Vec<(trace::SeedEntry, Option<RunTrace>)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| match controller::run(&cfg.spec, &cfg.settings, seed) {
            Ok(tr) => match trace::write_trace(&cfg.output_dir, &tr) {
                Ok(()) => {
                    let entry = trace::SeedEntry {
                        seed,
                        status: "ok".into(),
                        error: None,
                        summary: Some(trace::TraceSummary::of(&tr)),
                    };
                    (entry, Some(tr))
                }
                Err(e) => (failed(seed, format!("writing traces: {e}")), None),
            },
            Err(e) => {
                log::error!("seed {seed}: {e}");
                (failed(seed, e.to_string()), None)
            }
        })
        .collect();
    let (entries, traces): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let manifest = trace::Manifest::new(&cfg.config_hash, cfg.source.as_deref(), cfg.settings.horizon, entries);
    fs::write(cfg.output_dir.join("manifest.txt"), manifest.to_toml())?;
    Ok((manifest, traces))
}

fn failed(seed: u64, error: String) -> trace::SeedEntry {
    trace::SeedEntry { seed, status: "failed".into(), error: Some(error), summary: None }
}

pub fn verify(cfg: &RunConfig) -> std::io::Result<analysis::VerificationReport> {
    let settings = VerifySettings { seed: cfg.seeds[0], ..VerifySettings::default() };
    let report = analysis::verify_game(&cfg.spec, &cfg.settings.margins, &settings);
    fs::create_dir_all(&cfg.output_dir)?;
    fs::write(cfg.output_dir.join("verification.csv"), report.to_csv())?;
    Ok(report)
}

/// Reference saddle solution of the configured game.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Golden {
    pub note: String,
    pub config_sha256: String,
    pub solver_tol: f64,
    pub iterations: usize,
    pub p_star: Vec<Vec<f64>>,
    pub k_star: Vec<Vec<f64>>,
    pub l_star: Vec<Vec<f64>>,
    pub margin: f64,
    pub rho_cl: f64,
    pub j_star: f64,
    pub open_loop_rho: f64,
    pub theta_star_frobenius: f64,
    pub theta_star_spectral: f64,
}

fn rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn golden(cfg: &RunConfig) -> Result<Golden, String> {
    let opts = analysis::probe_options();
    let sol = solve_gare(&cfg.spec.truth, &cfg.spec.cost, &opts).map_err(|e| e.to_string())?;
    let acl = closed_loop(&cfg.spec.truth, sol.k(), sol.l()).map_err(|e| e.to_string())?;
    let theta = cfg.spec.theta_star();
    let svd = theta.as_matrix().clone().svd(false, false);
    Ok(Golden {
        note: format!(
            "value iteration from P0 = Q to step < {:e}; gains from the joint H(P) solve; rho_cl recomputed from A - B1 K - B2 L = {:.12}",
            opts.tol,
            linalg::spectral_radius(&acl).map_err(|e| e.to_string())?
        ),
        config_sha256: cfg.config_hash.clone(),
        solver_tol: opts.tol,
        iterations: sol.iterations(),
        p_star: rows(sol.p()),
        k_star: rows(sol.k()),
        l_star: rows(sol.l()),
        margin: sol.margin(),
        rho_cl: sol.rho_cl(),
        j_star: benchmark_cost(&sol, &cfg.spec.noise),
        open_loop_rho: linalg::spectral_radius(cfg.spec.truth.a()).map_err(|e| e.to_string())?,
        theta_star_frobenius: theta.frobenius_norm(),
        theta_star_spectral: svd.singular_values.max(),
    })
}

fn print_manifest_summary(dir: &Path, manifest: &trace::Manifest) {
    for s in &manifest.seeds {
        match &s.summary {
            Some(sum) => println!(
                "seed {}: ok, {} steps, {} episodes (bound {}), final regret {}",
                s.seed, sum.steps, sum.episodes, sum.episode_bound, sum.final_regret
            ),
            None => println!("seed {}: FAILED: {}", s.seed, s.error.as_deref().unwrap_or("?")),
        }
    }
    println!("wrote {}", dir.display());
}

/// Entry point shared by the binary and the tests; returns the exit code.
pub fn execute(cli: Cli) -> i32 {
    let args = match &cli.command {
        Command::Run(a) | Command::Verify(a) | Command::Golden(a) => a,
    };
    let cfg = match args.load() {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    match cli.command {
        Command::Run(_) => match run_experiment(&cfg) {
            Ok((manifest, _)) => {
                print_manifest_summary(&cfg.output_dir, &manifest);
                if manifest.all_ok() {
                    EXIT_OK
                } else {
                    EXIT_RUN
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_RUN
            }
        },
        Command::Verify(_) => match verify(&cfg) {
            Ok(report) => {
                for r in &report.rows {
                    println!("{:<20} {:<5} measured={:.6e} threshold={} {}", r.name, if r.passed { "PASS" } else { "FAIL" }, r.measured, r.threshold, r.detail);
                }
                if report.passed() {
                    EXIT_OK
                } else {
                    EXIT_VERIFY
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_VERIFY
            }
        },
        Command::Golden(_) => match golden(&cfg) {
            Ok(g) => {
                let text = toml::to_string(&g).expect("golden values serialize");
                let path = cfg.output_dir.join("golden.toml");
                if let Err(e) = fs::create_dir_all(&cfg.output_dir).and_then(|_| fs::write(&path, &text)) {
                    eprintln!("error: {e}");
                    return EXIT_RUN;
                }
                print!("{text}");
                EXIT_OK
            }
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_RUN
            }
        },
    }
}
