use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Verify,
    Bound,
    PresetKac { agents: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Both,
}

impl Format {
    pub fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }

    pub fn json(self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }
}

/// Command-line values that replace the corresponding configuration entries.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub t_end: Option<f64>,
    pub n_trajectories: Option<usize>,
}

impl Overrides {
    /// Applies the overrides. A new horizon drops the sample times beyond it
    /// and adds the horizon itself as the last sample time.
    pub fn apply(&self, config: &mut RunConfig) {
        if let Some(seed) = self.seed {
            config.economy.seed = seed;
        }
        if let Some(t_end) = self.t_end {
            let sim = &mut config.simulation;
            sim.t_end = t_end;
            sim.sample_times.retain(|&t| t <= t_end);
            if sim.sample_times.last() != Some(&t_end) {
                sim.sample_times.push(t_end);
            }
        }
        if let Some(n) = self.n_trajectories {
            config.simulation.n_trajectories = n;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// Required by every command except `preset-kac`.
    pub config_path: Option<PathBuf>,
    pub command: Command,
    pub output_dir: PathBuf,
    pub overrides: Overrides,
    /// Defaults to CSV for `simulate`, both for `verify` and JSON for `bound`.
    pub format: Option<Format>,
    /// Worker threads for ensembles; the global pool when unset.
    pub threads: Option<usize>,
}

impl RunManifest {
    pub fn new(command: Command, config_path: Option<PathBuf>, output_dir: PathBuf) -> Self {
        RunManifest { config_path, command, output_dir, overrides: Overrides::default(), format: None, threads: None }
    }

    pub fn format(&self) -> Format {
        self.format.unwrap_or(match self.command {
            Command::Simulate => Format::Csv,
            Command::Verify => Format::Both,
            Command::Bound | Command::PresetKac { .. } => Format::Json,
        })
    }
}
