//! Continuous-time simulation of the exchange process.
//!
//! Encounters arrive as a Poisson process of total rate `K`; each one picks a
//! pair with probability `k_ij / K` and applies the redistribution kernel.
//! Trajectory `k` of an ensemble always runs on `rng::stream(seed, k)`, and
//! ensemble statistics are reduced sequentially in trajectory order, so the
//! output does not depend on the number of worker threads.

use rand::distr::Open01;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::economy::{encounter_unchecked, Economy, EconomyConfig, State};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{stream, Stream};

/// Largest bin count used by the default binning rule.
pub const MAX_BINS: usize = 64;

/// `ceil(n^(1/3))`, capped at [`MAX_BINS`].
pub fn default_bin_count(n_samples: usize) -> usize {
    let mut b = (n_samples as f64).cbrt().ceil() as usize;
    // guard against cbrt rounding just above an exact cube
    while b > 1 && (b - 1).pow(3) >= n_samples {
        b -= 1;
    }
    b.clamp(1, MAX_BINS)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InitialState {
    /// The configured endowments.
    #[default]
    Endowments,
    /// A fresh draw from the product Dirichlet equilibrium per trajectory.
    Equilibrium,
    /// An explicit holdings matrix with the same per-good totals as the endowments.
    Explicit(Matrix),
}

/// Time grid and ensemble size of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSettings {
    pub t_end: f64,
    pub sample_times: Vec<f64>,
    pub n_trajectories: usize,
    #[serde(default)]
    pub initial_state: InitialState,
}

#[derive(Debug, Clone)]
pub struct SimulationPlan {
    economy: Economy,
    settings: SimulationSettings,
    retain_samples: bool,
    histogram_bins: usize,
}

impl SimulationPlan {
    pub fn new(economy: Economy, settings: SimulationSettings) -> Result<Self> {
        let s = &settings;
        if !(s.t_end >= 0.0 && s.t_end.is_finite()) {
            return Err(Error::InvalidPlan(format!("t_end must be finite and non-negative, got {}", s.t_end)));
        }
        if s.n_trajectories == 0 {
            return Err(Error::InvalidPlan("n_trajectories must be at least 1".into()));
        }
        if s.sample_times.is_empty() {
            return Err(Error::InvalidPlan("sample_times must not be empty".into()));
        }
        if s.sample_times.iter().any(|t| !(*t >= 0.0 && *t <= s.t_end)) {
            return Err(Error::InvalidPlan("sample_times must lie in [0, t_end]".into()));
        }
        if s.sample_times.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidPlan("sample_times must be sorted".into()));
        }
        if let InitialState::Explicit(h) = &s.initial_state {
            economy.check_state(&State::new(h.clone()))?;
        }
        let histogram_bins = default_bin_count(s.n_trajectories);
        Ok(SimulationPlan { economy, settings, retain_samples: false, histogram_bins })
    }

    /// Keep every trajectory's holdings at every sample time in the ensemble
    /// statistics (needed for goodness-of-fit and TV estimates).
    pub fn with_samples(mut self, retain: bool) -> Self {
        self.retain_samples = retain;
        self
    }

    pub fn with_histogram_bins(mut self, bins: usize) -> Self {
        self.histogram_bins = bins.max(1);
        self
    }

    pub fn economy(&self) -> &Economy {
        &self.economy
    }

    pub fn settings(&self) -> &SimulationSettings {
        &self.settings
    }

    pub fn seed(&self) -> u64 {
        self.economy.seed()
    }

    /// SHA-256 of the canonical JSON encoding of configuration and settings.
    pub fn digest(&self) -> String {
        plan_digest(self.economy.config(), &self.settings)
    }

    pub fn initial_state(&self, rng: &mut Stream) -> State {
        match &self.settings.initial_state {
            InitialState::Endowments => self.economy.endowment_state(),
            InitialState::Equilibrium => self.economy.equilibrium_state(rng),
            InitialState::Explicit(h) => State::new(h.clone()),
        }
    }
}

pub fn plan_digest(config: &EconomyConfig, settings: &SimulationSettings) -> String {
    #[derive(Serialize)]
    struct Canonical<'a> {
        config: &'a EconomyConfig,
        settings: &'a SimulationSettings,
    }
    let bytes = serde_json::to_vec(&Canonical { config, settings }).expect("plain data serializes");
    hex::encode(Sha256::digest(&bytes))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `(sample time, state)` for every requested sample time.
    pub snapshots: Vec<(f64, State)>,
    /// Encounters executed in `[0, t_end]`.
    pub n_events: u64,
    pub seed_used: u64,
    pub index: u64,
}

/// Runs one trajectory on stream `(seed, trajectory_index)`.
///
/// The snapshot at sample time `s` is the state just before the first
/// encounter after `s`.
pub fn simulate_trajectory(plan: &SimulationPlan, trajectory_index: u64) -> Result<Trajectory> {
    let economy = &plan.economy;
    let settings = &plan.settings;
    let mut rng = stream(plan.seed(), trajectory_index);
    let mut state = plan.initial_state(&mut rng);
    let rate = economy.total_rate();
    let selector = economy.pair_selector();

    let mut snapshots = Vec::with_capacity(settings.sample_times.len());
    let mut pending = settings.sample_times.iter().copied().peekable();
    let mut clock = 0.0;
    let mut n_events = 0u64;
    loop {
        let u: f64 = rng.sample(Open01);
        let next = clock - u.ln() / rate;
        while let Some(s) = pending.next_if(|&s| s < next) {
            snapshots.push((s, state.clone()));
        }
        if next > settings.t_end {
            break;
        }
        let (i, j) = selector.sample(&mut rng);
        encounter_unchecked(&mut state, i, j, economy, &mut rng);
        n_events += 1;
        clock = next;
    }
    debug_assert_eq!(snapshots.len(), settings.sample_times.len());
    Ok(Trajectory { snapshots, n_events, seed_used: plan.seed(), index: trajectory_index })
}

/// Applies `steps` iterations of the embedded jump chain: pair selection and
/// redistribution without a clock.
pub fn embedded_chain_step(state: &mut State, economy: &Economy, steps: usize, rng: &mut Stream) -> Result<()> {
    economy.check_state(state)?;
    let selector = economy.pair_selector();
    for _ in 0..steps {
        let (i, j) = selector.sample(rng);
        encounter_unchecked(state, i, j, economy, rng);
    }
    Ok(())
}

/// Ensemble summary at one sample time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotStats {
    pub time: f64,
    /// Mean holdings, agents by goods.
    pub mean: Matrix,
    /// Per good, the agent-by-agent sample covariance (`n - 1` denominator;
    /// zero for a single trajectory).
    pub covariance: Vec<Matrix>,
    /// Per agent (outer, agent-major) and good, counts over equal bins on `[0, G_m]`.
    pub histograms: Vec<Vec<u64>>,
    /// Per good, trajectories by agents. Present only when retention is on.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub samples: Option<Vec<Matrix>>,
}

impl SnapshotStats {
    pub fn histogram(&self, agent: usize, good: usize) -> &[u64] {
        let n_goods = self.mean.cols();
        &self.histograms[agent * n_goods + good]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub plan_digest: String,
    pub seed: u64,
    pub n_trajectories: usize,
    pub n_agents: usize,
    pub n_goods: usize,
    pub totals: Vec<f64>,
    pub histogram_bins: usize,
    pub event_counts: Vec<u64>,
    pub snapshots: Vec<SnapshotStats>,
}

impl EnsembleStats {
    pub fn mean_events(&self) -> f64 {
        self.event_counts.iter().map(|&c| c as f64).sum::<f64>() / self.n_trajectories as f64
    }
}

/// Runs every trajectory of the plan on the global rayon pool and aggregates.
pub fn run_ensemble(plan: &SimulationPlan) -> Result<EnsembleStats> {
    let trajectories: Vec<Trajectory> = (0..plan.settings.n_trajectories as u64)
        .into_par_iter()
        .map(|k| simulate_trajectory(plan, k))
        .collect::<Result<_>>()?;
    Ok(aggregate(plan, &trajectories))
}

/// [`run_ensemble`] on a dedicated pool with `threads` workers.
pub fn run_ensemble_with_threads(plan: &SimulationPlan, threads: usize) -> Result<EnsembleStats> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidPlan(format!("cannot build worker pool: {e}")))?;
    pool.install(|| run_ensemble(plan))
}

fn aggregate(plan: &SimulationPlan, trajectories: &[Trajectory]) -> EnsembleStats {
    let economy = &plan.economy;
    let (n, m) = (economy.n_agents(), economy.n_goods());
    let count = trajectories.len();
    let bins = plan.histogram_bins;
    let totals = economy.totals().to_vec();

    let snapshots = plan
        .settings
        .sample_times
        .iter()
        .enumerate()
        .map(|(slot, &time)| {
            let states = || trajectories.iter().map(move |t| &t.snapshots[slot].1);
            let mut mean = Matrix::zeros(n, m);
            for s in states() {
                for i in 0..n {
                    for g in 0..m {
                        mean.set(i, g, mean.get(i, g) + s.get(i, g));
                    }
                }
            }
            for i in 0..n {
                for g in 0..m {
                    mean.set(i, g, mean.get(i, g) / count as f64);
                }
            }

            let covariance = (0..m)
                .map(|g| {
                    let mut cov = Matrix::zeros(n, n);
                    if count > 1 {
                        for s in states() {
                            for i in 0..n {
                                let di = s.get(i, g) - mean.get(i, g);
                                for j in i..n {
                                    let dj = s.get(j, g) - mean.get(j, g);
                                    cov.set(i, j, cov.get(i, j) + di * dj);
                                }
                            }
                        }
                        for i in 0..n {
                            for j in i..n {
                                let v = cov.get(i, j) / (count - 1) as f64;
                                cov.set(i, j, v);
                                cov.set(j, i, v);
                            }
                        }
                    }
                    cov
                })
                .collect();

            let mut histograms = vec![vec![0u64; bins]; n * m];
            for s in states() {
                for i in 0..n {
                    for g in 0..m {
                        let b = bin_index(s.get(i, g) / totals[g], bins);
                        histograms[i * m + g][b] += 1;
                    }
                }
            }

            let samples = plan.retain_samples.then(|| {
                (0..m)
                    .map(|g| {
                        let mut mat = Matrix::zeros(count, n);
                        for (k, s) in states().enumerate() {
                            for i in 0..n {
                                mat.set(k, i, s.get(i, g));
                            }
                        }
                        mat
                    })
                    .collect()
            });

            SnapshotStats { time, mean, covariance, histograms, samples }
        })
        .collect();

    EnsembleStats {
        plan_digest: plan.digest(),
        seed: plan.seed(),
        n_trajectories: count,
        n_agents: n,
        n_goods: m,
        totals,
        histogram_bins: bins,
        event_counts: trajectories.iter().map(|t| t.n_events).collect(),
        snapshots,
    }
}

/// Equal-width bin of a value scaled to `[0, 1]`; the right edge belongs to
/// the last bin.
#[inline]
pub(crate) fn bin_index(unit_value: f64, bins: usize) -> usize {
    let b = (unit_value * bins as f64).floor();
    if b <= 0.0 {
        0
    } else {
        (b as usize).min(bins - 1)
    }
}
