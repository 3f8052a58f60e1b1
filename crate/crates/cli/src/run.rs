use std::fs;
use std::path::{Path, PathBuf};

use exchange_core::doeblin::doeblin_report;
use exchange_core::stats::{convergence_report_with, ReportOptions};
use exchange_core::{run_ensemble, run_ensemble_with_threads, simulate_trajectory, EnsembleStats, SimulationPlan};
use thiserror::Error;

use crate::config::{read_config, ConfigError, RunConfig};
use crate::manifest::{Command, RunManifest};
use crate::output::{self, Stamped, TrajectoryRecord};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Model(#[from] exchange_core::Error),
    #[error("cannot write {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl RunError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        RunError::Io { path: path.to_path_buf(), source }
    }

    pub(crate) fn csv(path: &Path, err: csv::Error) -> Self {
        RunError::io(path, err.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Usage(_) => EXIT_VALIDATION,
            RunError::Model(e) if e.is_validation() => EXIT_VALIDATION,
            RunError::Model(_) | RunError::Io { .. } => EXIT_RUNTIME,
        }
    }
}

/// Runs the manifest, reporting failures on standard error. Returns the exit code.
pub fn run(manifest: &RunManifest) -> i32 {
    match execute(manifest) {
        Ok(_) => EXIT_OK,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}

/// Runs the manifest and returns the files written.
pub fn execute(manifest: &RunManifest) -> Result<Vec<PathBuf>, RunError> {
    if manifest.threads == Some(0) {
        return Err(RunError::Usage("--threads must be at least 1".into()));
    }
    let out = &manifest.output_dir;
    fs::create_dir_all(out).map_err(|e| RunError::io(out, e))?;

    if let Command::PresetKac { agents } = manifest.command {
        if agents < 2 {
            return Err(RunError::Usage(format!("the Kac preset needs at least 2 agents, got {agents}")));
        }
        let mut config = RunConfig::kac(agents, 0);
        manifest.overrides.apply(&mut config);
        let plan = config.validate()?;
        let path = out.join("kac.toml");
        let text = format!("# plan_digest={} seed={}\n{}", plan.digest(), plan.seed(), config.to_toml()?);
        fs::write(&path, text).map_err(|e| RunError::io(&path, e))?;
        return Ok(vec![path]);
    }

    let config_path = manifest
        .config_path
        .as_deref()
        .ok_or_else(|| RunError::Usage("this command needs --config".into()))?;
    let mut config = read_config(config_path)?;
    manifest.overrides.apply(&mut config);
    let plan = config.validate()?;
    let format = manifest.format();
    let digest = plan.digest();
    let mut written = Vec::new();

    match manifest.command {
        Command::Simulate => {
            let stats = ensemble(&plan, manifest.threads)?;
            let first = simulate_trajectory(&plan, 0)?;
            if format.csv() {
                written.push(output::ensemble_csv(&out.join("ensemble.csv"), &stats)?);
                written.push(output::trajectory_csv(&out.join("trajectory.csv"), &digest, &first)?);
            }
            if format.json() {
                written.push(output::write_json(&out.join("ensemble.json"), &stats)?);
                let record = TrajectoryRecord::new(&digest, &first);
                written.push(output::write_json(&out.join("trajectory.json"), &record)?);
            }
        }
        Command::Verify => {
            let plan = plan.with_samples(true);
            let stats = ensemble(&plan, manifest.threads)?;
            let options = ReportOptions { tv_mode: config.verify.tv_mode, bins: config.verify.bins };
            let report = convergence_report_with(&stats, plan.economy(), options)?;
            if format.csv() {
                written.push(output::convergence_csv(&out.join("convergence.csv"), &report)?);
            }
            if format.json() {
                written.push(output::write_json(&out.join("convergence.json"), &report)?);
            }
        }
        Command::Bound => {
            let report = doeblin_report(plan.economy(), config.bound.grid)?;
            if format.csv() {
                written.push(output::doeblin_csv(&out.join("doeblin.csv"), &digest, plan.seed(), &report)?);
            }
            if format.json() {
                let stamped = Stamped { plan_digest: &digest, seed: plan.seed(), body: &report };
                written.push(output::write_json(&out.join("doeblin.json"), &stamped)?);
            }
        }
        Command::PresetKac { .. } => unreachable!("handled above"),
    }
    Ok(written)
}

fn ensemble(plan: &SimulationPlan, threads: Option<usize>) -> Result<EnsembleStats, RunError> {
    Ok(match threads {
        Some(t) => run_ensemble_with_threads(plan, t)?,
        None => run_ensemble(plan)?,
    })
}
