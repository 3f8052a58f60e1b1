//! Model definition: configuration, validation, state and the encounter kernel.

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::Stream;
use crate::sampling::{sample_dirichlet_with, split_shares, DirichletSpec, LogGamma};

/// Relative tolerance on per-good totals.
pub const CONSERVATION_TOLERANCE: f64 = 1e-9;

/// Raw model instance as written in a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EconomyConfig {
    pub n_agents: usize,
    pub n_goods: usize,
    /// Symmetric encounter rates with zero diagonal.
    pub rates: Matrix,
    /// Cobb-Douglas exponents, one row per agent, one column per good.
    pub exponents: Matrix,
    /// Initial holdings, one row per agent, one column per good.
    pub endowments: Matrix,
    pub seed: u64,
}

impl EconomyConfig {
    /// Uniform rates, identical exponents and equal endowments.
    pub fn uniform(n_agents: usize, n_goods: usize, rate: f64, exponent: f64, total: f64, seed: u64) -> Self {
        EconomyConfig {
            n_agents,
            n_goods,
            rates: Matrix::from_fn(n_agents, n_agents, |i, j| if i == j { 0.0 } else { rate }),
            exponents: Matrix::filled(n_agents, n_goods, exponent),
            endowments: Matrix::filled(n_agents, n_goods, total / n_agents as f64),
            seed,
        }
    }

    /// Single good with exponent 1/2 for every agent, unit rates and equal
    /// shares of a unit total: the Kac kinetic-gas model in energy variables.
    pub fn kac(n_agents: usize, seed: u64) -> Self {
        Self::uniform(n_agents, 1, 1.0, 0.5, 1.0, seed)
    }
}

/// Picks an unordered pair `(i, j)`, `i < j`, with probability `k_ij / K`.
#[derive(Debug, Clone)]
pub struct PairSelector {
    pairs: Vec<(usize, usize)>,
    alias: WeightedAliasIndex<f64>,
}

impl PairSelector {
    fn new(rates: &Matrix) -> Result<Self> {
        let n = rates.rows();
        let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
        let mut weights = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                pairs.push((i, j));
                weights.push(rates.get(i, j));
            }
        }
        let alias = WeightedAliasIndex::new(weights)
            .map_err(|e| Error::BadDimensions(format!("pair weights rejected: {e}")))?;
        Ok(PairSelector { pairs, alias })
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        self.pairs[self.alias.sample(rng)]
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }
}

/// A validated configuration with cached derived quantities.
#[derive(Debug, Clone)]
pub struct Economy {
    config: EconomyConfig,
    total_rate: f64,
    min_rate: f64,
    max_rate: f64,
    totals: Vec<f64>,
    shares: Vec<LogGamma>,
    selector: PairSelector,
}

/// Checks the standing assumptions of the model and caches `K`, `G_m`, `kappa`
/// and the largest off-diagonal rate.
pub fn validate_config(cfg: EconomyConfig) -> Result<Economy> {
    let (n, m) = (cfg.n_agents, cfg.n_goods);
    if n < 2 {
        return Err(Error::BadDimensions(format!("need at least 2 agents, got {n}")));
    }
    if m < 1 {
        return Err(Error::BadDimensions("need at least 1 good".into()));
    }
    let dims = |name: &str, mat: &Matrix, rows: usize, cols: usize| {
        if mat.rows() != rows || mat.cols() != cols {
            Err(Error::BadDimensions(format!(
                "{name} is {}x{}, expected {rows}x{cols}",
                mat.rows(),
                mat.cols()
            )))
        } else {
            Ok(())
        }
    };
    dims("rates", &cfg.rates, n, n)?;
    dims("exponents", &cfg.exponents, n, m)?;
    dims("endowments", &cfg.endowments, n, m)?;

    let mut total_rate = 0.0;
    let mut min_rate = f64::INFINITY;
    let mut max_rate = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            let k = cfg.rates.get(i, j);
            if i == j {
                if k != 0.0 {
                    return Err(Error::NonZeroDiagonalRate { i });
                }
                continue;
            }
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::NonPositiveOffDiagonalRate { i, j });
            }
            if k != cfg.rates.get(j, i) {
                return Err(Error::NonSymmetricRates { i, j });
            }
            if i < j {
                total_rate += k;
                min_rate = min_rate.min(k);
                max_rate = max_rate.max(k);
            }
        }
    }

    let mut shares = Vec::with_capacity(n * m);
    for agent in 0..n {
        for good in 0..m {
            let a = cfg.exponents.get(agent, good);
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::NonPositiveExponent { agent, good });
            }
            shares.push(LogGamma::new(a)?);
        }
    }
    for agent in 0..n {
        for good in 0..m {
            let g = cfg.endowments.get(agent, good);
            if !(g >= 0.0 && g.is_finite()) {
                return Err(Error::NegativeEndowment { agent, good });
            }
        }
    }
    let totals: Vec<f64> = (0..m).map(|good| cfg.endowments.column_sum(good)).collect();
    if let Some(good) = totals.iter().position(|&t| !(t > 0.0)) {
        return Err(Error::ZeroTotalGood { good });
    }

    let selector = PairSelector::new(&cfg.rates)?;
    Ok(Economy { config: cfg, total_rate, min_rate, max_rate, totals, shares, selector })
}

impl Economy {
    pub fn config(&self) -> &EconomyConfig {
        &self.config
    }

    pub fn n_agents(&self) -> usize {
        self.config.n_agents
    }

    pub fn n_goods(&self) -> usize {
        self.config.n_goods
    }

    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    /// Total encounter rate `K = sum_{i<j} k_ij`.
    pub fn total_rate(&self) -> f64 {
        self.total_rate
    }

    /// Smallest off-diagonal rate (kappa).
    pub fn min_rate(&self) -> f64 {
        self.min_rate
    }

    /// Largest off-diagonal rate.
    pub fn max_rate(&self) -> f64 {
        self.max_rate
    }

    /// Per-good totals `G_m`.
    pub fn totals(&self) -> &[f64] {
        &self.totals
    }

    pub fn exponent(&self, agent: usize, good: usize) -> f64 {
        self.config.exponents.get(agent, good)
    }

    /// Exponents of every agent for one good.
    pub fn exponents_for(&self, good: usize) -> Vec<f64> {
        self.config.exponents.column(good)
    }

    /// Equilibrium law of one good.
    pub fn dirichlet(&self, good: usize) -> DirichletSpec {
        DirichletSpec::new(self.exponents_for(good), self.totals[good]).expect("validated economy")
    }

    pub fn pair_selector(&self) -> &PairSelector {
        &self.selector
    }

    #[inline]
    fn share_sampler(&self, agent: usize, good: usize) -> &LogGamma {
        &self.shares[agent * self.config.n_goods + good]
    }

    /// Initial state taken from the configured endowments.
    pub fn endowment_state(&self) -> State {
        State { holdings: self.config.endowments.clone() }
    }

    /// One draw from the product of per-good Dirichlet laws.
    pub fn equilibrium_state(&self, rng: &mut Stream) -> State {
        let (n, m) = (self.n_agents(), self.n_goods());
        let mut holdings = Matrix::zeros(n, m);
        for good in 0..m {
            let samplers: Vec<LogGamma> = (0..n).map(|i| *self.share_sampler(i, good)).collect();
            let column = sample_dirichlet_with(&samplers, self.totals[good], rng);
            holdings.set_column(good, &column);
        }
        State { holdings }
    }

    /// Checks shape, non-negativity and conservation of a state.
    pub fn check_state(&self, state: &State) -> Result<()> {
        let h = &state.holdings;
        if h.rows() != self.n_agents() || h.cols() != self.n_goods() {
            return Err(Error::InvalidState(format!(
                "holdings are {}x{}, expected {}x{}",
                h.rows(),
                h.cols(),
                self.n_agents(),
                self.n_goods()
            )));
        }
        if let Some(v) = h.as_slice().iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidState(format!("holding {v} is not a finite non-negative amount")));
        }
        for (good, &total) in self.totals.iter().enumerate() {
            let sum = h.column_sum(good);
            if (sum - total).abs() > CONSERVATION_TOLERANCE * total {
                return Err(Error::InvalidState(format!(
                    "good {good} sums to {sum}, expected {total}"
                )));
            }
        }
        Ok(())
    }
}

/// Holdings of every agent, one row per agent and one column per good.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub holdings: Matrix,
}

impl State {
    pub fn new(holdings: Matrix) -> Self {
        State { holdings }
    }

    pub fn get(&self, agent: usize, good: usize) -> f64 {
        self.holdings.get(agent, good)
    }

    pub fn good(&self, good: usize) -> Vec<f64> {
        self.holdings.column(good)
    }
}

/// Agents `i` and `j` pool their holdings and split each good independently,
/// agent `i` receiving a `Beta(alpha_i, alpha_j)` fraction of the pool.
pub fn apply_encounter(state: &mut State, i: usize, j: usize, economy: &Economy, rng: &mut Stream) -> Result<()> {
    let n = economy.n_agents();
    for index in [i, j] {
        if index >= n {
            return Err(Error::IndexOutOfRange { index, n_agents: n });
        }
    }
    if i == j {
        return Err(Error::SameAgent(i));
    }
    encounter_unchecked(state, i, j, economy, rng);
    Ok(())
}

#[inline]
pub(crate) fn encounter_unchecked(state: &mut State, i: usize, j: usize, economy: &Economy, rng: &mut Stream) {
    for good in 0..economy.n_goods() {
        let pool = state.holdings.get(i, good) + state.holdings.get(j, good);
        // the shares are drawn even for an empty pool so that stream consumption
        // does not depend on the state
        let (i_larger, larger) =
            split_shares(economy.share_sampler(i, good), economy.share_sampler(j, good), rng);
        let big = pool * larger;
        let small = pool - big;
        let (gi, gj) = if i_larger { (big, small) } else { (small, big) };
        state.holdings.set(i, good, gi);
        state.holdings.set(j, good, gj);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn two_agent() -> EconomyConfig {
        EconomyConfig {
            n_agents: 2,
            n_goods: 2,
            rates: Matrix::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap(),
            exponents: Matrix::filled(2, 2, 1.0),
            endowments: Matrix::from_rows(vec![vec![1.0, 0.5], vec![0.0, 0.5]]).unwrap(),
            seed: 0,
        }
    }

    #[test]
    fn smallest_legal_instance() {
        let econ = validate_config(two_agent()).unwrap();
        assert_eq!(econ.total_rate(), 1.0);
        assert_eq!(econ.totals(), &[1.0, 1.0]);
        assert_eq!((econ.min_rate(), econ.max_rate()), (1.0, 1.0));
    }

    #[test]
    fn zero_off_diagonal_rejected() {
        let mut cfg = EconomyConfig::uniform(3, 1, 1.0, 1.0, 1.0, 0);
        cfg.rates.set(0, 1, 0.0);
        cfg.rates.set(1, 0, 0.0);
        assert_eq!(validate_config(cfg).unwrap_err(), Error::NonPositiveOffDiagonalRate { i: 0, j: 1 });
    }

    #[test]
    fn zero_exponent_rejected() {
        let mut cfg = EconomyConfig::uniform(3, 1, 1.0, 1.0, 1.0, 0);
        cfg.exponents.set(0, 0, 0.0);
        assert_eq!(validate_config(cfg).unwrap_err(), Error::NonPositiveExponent { agent: 0, good: 0 });
    }

    #[test]
    fn asymmetric_rates_rejected() {
        let mut cfg = EconomyConfig::uniform(3, 1, 1.0, 1.0, 1.0, 0);
        cfg.rates.set(1, 2, 2.0);
        assert_eq!(validate_config(cfg).unwrap_err(), Error::NonSymmetricRates { i: 1, j: 2 });
    }

    #[test]
    fn zero_total_and_bad_shapes_rejected() {
        let mut cfg = EconomyConfig::uniform(3, 2, 1.0, 1.0, 1.0, 0);
        cfg.endowments.set_column(1, &[0.0, 0.0, 0.0]);
        assert_eq!(validate_config(cfg).unwrap_err(), Error::ZeroTotalGood { good: 1 });

        let mut cfg = EconomyConfig::uniform(3, 2, 1.0, 1.0, 1.0, 0);
        cfg.exponents = Matrix::filled(2, 2, 1.0);
        assert!(matches!(validate_config(cfg), Err(Error::BadDimensions(_))));

        let cfg = EconomyConfig::uniform(1, 1, 1.0, 1.0, 1.0, 0);
        assert!(matches!(validate_config(cfg), Err(Error::BadDimensions(_))));
    }

    #[test]
    fn encounter_index_errors() {
        let econ = validate_config(two_agent()).unwrap();
        let mut state = econ.endowment_state();
        let mut rng = stream(0, 0);
        assert_eq!(apply_encounter(&mut state, 1, 1, &econ, &mut rng), Err(Error::SameAgent(1)));
        assert_eq!(
            apply_encounter(&mut state, 0, 2, &econ, &mut rng),
            Err(Error::IndexOutOfRange { index: 2, n_agents: 2 })
        );
    }

    #[test]
    fn empty_pool_stays_empty() {
        let mut cfg = EconomyConfig::uniform(3, 1, 1.0, 0.5, 1.0, 0);
        cfg.endowments.set_column(0, &[1.0, 0.0, 0.0]);
        let econ = validate_config(cfg).unwrap();
        let mut state = econ.endowment_state();
        let mut rng = stream(3, 0);
        apply_encounter(&mut state, 1, 2, &econ, &mut rng).unwrap();
        assert_eq!(state.good(0), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn pair_sum_is_bit_exact() {
        let cfg = EconomyConfig::uniform(4, 3, 1.0, 0.7, 0.3, 0);
        let econ = validate_config(cfg).unwrap();
        let mut state = econ.endowment_state();
        let mut rng = stream(4, 0);
        for step in 0..10_000 {
            let (i, j) = (step % 4, (step * 7 + 1) % 4);
            if i == j {
                continue;
            }
            let before: Vec<f64> = (0..3).map(|m| state.get(i, m) + state.get(j, m)).collect();
            apply_encounter(&mut state, i, j, &econ, &mut rng).unwrap();
            for (m, &pair_total) in before.iter().enumerate() {
                assert_eq!(state.get(i, m) + state.get(j, m), pair_total);
                assert!(state.get(i, m) >= 0.0 && state.get(j, m) >= 0.0);
            }
        }
        econ.check_state(&state).unwrap();
    }

    #[test]
    fn kac_preset_shape() {
        let econ = validate_config(EconomyConfig::kac(5, 1)).unwrap();
        assert_eq!(econ.n_goods(), 1);
        assert!((econ.totals()[0] - 1.0).abs() < 1e-15);
        assert!(econ.exponents_for(0).iter().all(|&a| a == 0.5));
        assert_eq!(econ.min_rate(), econ.max_rate());
    }
}
