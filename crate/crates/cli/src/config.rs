//! Run configuration files.
//!
//! A file holds one `[economy]` table, one `[simulation]` table and optional
//! `[verify]` and `[bound]` tables. Unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use exchange_core::doeblin::MIN_GRID;
use exchange_core::{validate_config, EconomyConfig, InitialState, SimulationPlan, SimulationSettings, TvMode};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub economy: EconomyConfig,
    pub simulation: SimulationSettings,
    #[serde(default)]
    pub verify: VerifyOptions,
    #[serde(default)]
    pub bound: BoundOptions,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyOptions {
    /// Defaults to joint binning for at most three agents, marginal otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tv_mode: Option<TvMode>,
    /// Bins per coordinate; defaults to the cube root of the sample count, capped at 64.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundOptions {
    /// Initial grid resolution of the `L_n` search.
    #[serde(default = "default_grid")]
    pub grid: usize,
}

fn default_grid() -> usize {
    MIN_GRID
}

impl Default for BoundOptions {
    fn default() -> Self {
        BoundOptions { grid: default_grid() }
    }
}

impl RunConfig {
    /// The single-good, equal-exponent model of Kac's collision process:
    /// `n` agents, all exponents 1/2, unit rates, equal endowments summing to 1.
    pub fn kac(n_agents: usize, seed: u64) -> Self {
        RunConfig {
            economy: EconomyConfig::kac(n_agents, seed),
            simulation: SimulationSettings {
                t_end: 8.0,
                sample_times: vec![0.0, 0.5, 1.0, 2.0, 4.0, 8.0],
                n_trajectories: 10_000,
                initial_state: InitialState::Endowments,
            },
            verify: VerifyOptions::default(),
            bound: BoundOptions::default(),
        }
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        toml::to_string(self).map_err(|e| ConfigError::Validation { field: None, message: e.to_string() })
    }

    /// Validates the economy and the simulation settings.
    pub fn validate(&self) -> Result<SimulationPlan, ConfigError> {
        let economy = validate_config(self.economy.clone()).map_err(ConfigError::from_core)?;
        SimulationPlan::new(economy, self.simulation.clone()).map_err(ConfigError::from_core)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("{}{message}", field.as_ref().map(|f| format!("invalid `{f}`: ")).unwrap_or_default())]
    Validation { field: Option<String>, message: String },
}

impl ConfigError {
    fn from_core(err: exchange_core::Error) -> Self {
        ConfigError::Validation { field: err.field_path(), message: err.to_string() }
    }
}

/// Parses configuration text without validating the model.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    toml::from_str(text).map_err(|e| {
        let (line, column) = match e.span() {
            Some(span) => line_column(text, span.start),
            None => (1, 1),
        };
        ConfigError::Parse { line, column, message: e.message().trim().to_string() }
    })
}

/// 1-based line and column of a byte offset.
fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.chars().count(), |p| before[p + 1..].chars().count()) + 1;
    (line, column)
}

pub fn read_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_config(&text)
}

/// A validated configuration file.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub plan: SimulationPlan,
}

pub fn load_config(path: &Path) -> Result<LoadedConfig, ConfigError> {
    let config = read_config(path)?;
    let plan = config.validate()?;
    Ok(LoadedConfig { config, plan })
}
