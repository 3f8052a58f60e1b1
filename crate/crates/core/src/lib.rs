// `!(x > 0.0)` is used on purpose to reject NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod doeblin;
pub mod economy;
pub mod error;
pub mod matrix;
pub mod rng;
pub mod sampling;

pub use economy::{apply_encounter, validate_config, Economy, EconomyConfig, State};
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use sampling::{beta_sample, dirichlet_log_density, sample_dirichlet, DirichletSpec};
pub mod simulator;
pub mod stats;

pub use simulator::{
    embedded_chain_step, run_ensemble, run_ensemble_with_threads, simulate_trajectory, EnsembleStats,
    InitialState, SimulationPlan, SimulationSettings, Trajectory,
};
pub use stats::{
    binned_tv, convergence_report, dirichlet_moments, marginal_ks, Binning, ConvergenceReport, SampleSet, TvMode,
};
pub use doeblin::{
    compute_c_sequence, compute_j, compute_l, compute_rho, doeblin_report, epsilon_of_tau, minorization_check,
    optimize_rate, DoeblinReport, MinorizationReport,
};
