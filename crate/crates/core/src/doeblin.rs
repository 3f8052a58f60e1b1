//! Doeblin minorization constants and certified convergence rates.
//!
//! For one good the embedded chain satisfies `P^{N-1}_x >= c_N D(alpha, G)`
//! for every start `x`, with `c_2 = 1` and
//!
//! ```text
//! c_{n+1} = (1 + 2/((n-1) rho))^{1-n} * 2 rho / (n (n+1)) * J_n * L_n * c_n
//! ```
//!
//! where `rho` is the ratio of the smallest to the largest off-diagonal rate,
//! `L_n` lower-bounds
//!
//! ```text
//! h(x, y) = (x - y)^{a - 1} x^{1 - a - b}      (total scaled to 1)
//! ```
//!
//! over `0 <= y <= 1/(n+1)`, `y + 1/(n(n+1)) <= x <= 1`, and `J_n`
//! lower-bounds `Gamma(a + b)/Gamma(a) * Gamma(s_n)/Gamma(s_n + b)`. Here `a`
//! is the exponent of the richest agent among the first `n`, `b` that of the
//! agent added at level `n + 1`, and `s_n` the exponent sum of the `n`-agent
//! sub-economy. Both bounds are taken over every choice of agents drawn from
//! the whole economy, so each level's constant holds for every sub-economy
//! that the induction visits.
//!
//! In continuous time, `P^tau >= eps(tau) D(alpha, G)` with
//! `eps(tau) = c_N P(Poisson(K tau) >= N - 1)`, which certifies the TV decay
//! rate `log(1 / (1 - eps)) / tau`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::economy::{Economy, State};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::Stream;
use crate::simulator::{default_bin_count, embedded_chain_step};
use crate::stats::{tv_between, tv_std_error, TvMode};

pub const DOEBLIN_SCHEMA_VERSION: &str = "doeblin-report/1";

/// Smallest admissible initial grid resolution for [`compute_l`].
pub const MIN_GRID: usize = 64;

/// Relative gap between certified lower bound and best observed value at
/// which the search for `L_n` stops.
const L_RELATIVE_GAP: f64 = 1e-10;
const L_MAX_CELLS: usize = 2_000_000;
/// Absorbs rounding in `powf` so the reported bound stays below every
/// exactly evaluated value.
const ROUNDING_MARGIN: f64 = 8.0 * f64::EPSILON;
/// Slack per unit magnitude of the log-Gamma terms in [`compute_j`]; the
/// log-Gamma approximation is accurate to a few parts in 1e15 of its value.
const LN_GAMMA_SLACK: f64 = 1e-13;

/// `kappa / K_max`, the ratio of smallest to largest off-diagonal rate.
pub fn compute_rho(economy: &Economy) -> f64 {
    economy.min_rate() / economy.max_rate()
}

/// `h(x, y)` at unit total for exponents `a` (richest agent) and `b` (added agent).
pub fn h_value(a: f64, b: f64, x: f64, y: f64) -> f64 {
    (x - y).powf(a - 1.0) * x.powf(1.0 - a - b)
}

/// Exponent pairs `(a, b)` over ordered pairs of distinct agents, deduplicated.
fn exponent_pairs(alphas: &[f64]) -> Vec<(f64, f64)> {
    let mut pairs = Vec::new();
    for (i, &a) in alphas.iter().enumerate() {
        for (j, &b) in alphas.iter().enumerate() {
            if i != j {
                pairs.push((a, b));
            }
        }
    }
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.total_cmp(&q.1)));
    pairs.dedup();
    pairs
}

fn check_context(n: usize, alphas: &[f64]) -> Result<()> {
    if n < 2 || alphas.len() < n + 1 || alphas.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
        return Err(Error::NonPositiveExponentContext(n));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    lower: f64,
}

impl PartialEq for Cell {
    fn eq(&self, other: &Self) -> bool {
        self.lower == other.lower
    }
}
impl Eq for Cell {}
impl PartialOrd for Cell {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Cell {
    // min-heap on the lower bound
    fn cmp(&self, other: &Self) -> Ordering {
        other.lower.total_cmp(&self.lower)
    }
}

/// Certified lower bound of `h` on one exponent pair by branch and bound.
///
/// `h` factors as `f(x - y) g(x)` with power functions `f`, `g`, so on a cell
/// its infimum is bounded below by the product of the endpoint minima of `f`
/// over the cell's range of `x - y` and of `g` over its range of `x`.
fn certified_min_h(n: usize, a: f64, b: f64, grid: usize) -> f64 {
    let gap = 1.0 / (n * (n + 1)) as f64;
    let y_max = 1.0 / (n + 1) as f64;
    let (ea, eb) = (a - 1.0, 1.0 - a - b);
    let pow_min = |lo: f64, hi: f64, e: f64| lo.powf(e).min(hi.powf(e));

    let bound = |x0: f64, x1: f64, y0: f64, y1: f64| -> Option<f64> {
        if x1 - y0 < gap {
            return None;
        }
        let u_lo = gap.max(x0 - y1);
        let u_hi = x1 - y0;
        let x_lo = x0.max(y0 + gap);
        Some(pow_min(u_lo, u_hi, ea) * pow_min(x_lo, x1, eb))
    };

    let mut heap = BinaryHeap::new();
    let mut best = f64::INFINITY;
    let observe = |x: f64, y: f64, best: &mut f64| {
        if x - y >= gap && x <= 1.0 && (0.0..=y_max).contains(&y) {
            *best = best.min(h_value(a, b, x, y));
        }
    };
    let (dx, dy) = ((1.0 - gap) / grid as f64, y_max / grid as f64);
    for ix in 0..grid {
        let x0 = gap + ix as f64 * dx;
        let x1 = if ix + 1 == grid { 1.0 } else { gap + (ix + 1) as f64 * dx };
        for iy in 0..grid {
            let y0 = iy as f64 * dy;
            let y1 = if iy + 1 == grid { y_max } else { (iy + 1) as f64 * dy };
            if let Some(lower) = bound(x0, x1, y0, y1) {
                heap.push(Cell { x0, x1, y0, y1, lower });
                observe(x1, y0, &mut best);
                observe(x1, y1.min(x1 - gap), &mut best);
            }
        }
    }

    let mut processed = 0;
    while let Some(cell) = heap.pop() {
        processed += 1;
        if best - cell.lower <= L_RELATIVE_GAP * best || processed >= L_MAX_CELLS {
            return cell.lower;
        }
        let (xm, ym) = (0.5 * (cell.x0 + cell.x1), 0.5 * (cell.y0 + cell.y1));
        for (x0, x1) in [(cell.x0, xm), (xm, cell.x1)] {
            for (y0, y1) in [(cell.y0, ym), (ym, cell.y1)] {
                if let Some(lower) = bound(x0, x1, y0, y1) {
                    // children never bound below their parent
                    heap.push(Cell { x0, x1, y0, y1, lower: lower.max(cell.lower) });
                    observe(x1, y0, &mut best);
                    observe(x0.max(y0 + gap), y0, &mut best);
                    observe(x1, y1.min(x1 - gap), &mut best);
                }
            }
        }
    }
    unreachable!("the region always contains a feasible cell")
}

/// Certified positive lower bound `L_n` of `h` over the admissible region
/// and every ordered pair of distinct agents' exponents.
///
/// `grid` is the initial resolution per axis; cells are then refined where
/// the bound is weakest.
pub fn compute_l(n: usize, alphas: &[f64], grid: usize) -> Result<f64> {
    check_context(n, alphas)?;
    let grid = grid.max(MIN_GRID);
    let lower = exponent_pairs(alphas)
        .into_iter()
        .map(|(a, b)| certified_min_h(n, a, b, grid))
        .fold(f64::INFINITY, f64::min);
    Ok(lower * (1.0 - ROUNDING_MARGIN))
}

/// Lower bound `J_n` of the Gamma ratio over every choice of richest agent
/// `i`, added agent `j` and `n`-agent sub-economy containing `i` but not `j`.
///
/// The ratio decreases in `s_n`, so for each ordered pair the worst case is
/// `alpha_i` plus the `n - 1` largest remaining exponents.
pub fn compute_j(n: usize, alphas: &[f64]) -> Result<f64> {
    check_context(n, alphas)?;
    let mut worst = f64::INFINITY;
    for (i, &a) in alphas.iter().enumerate() {
        for (j, &b) in alphas.iter().enumerate() {
            if i == j {
                continue;
            }
            let mut rest: Vec<f64> = alphas
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != i && k != j)
                .map(|(_, &v)| v)
                .collect();
            rest.sort_by(|p, q| q.total_cmp(p));
            let s_n = a + rest[..n - 1].iter().sum::<f64>();
            let terms = [ln_gamma(a + b), ln_gamma(a), ln_gamma(s_n), ln_gamma(s_n + b)];
            let ln_ratio = terms[0] - terms[1] + terms[2] - terms[3];
            let slack = LN_GAMMA_SLACK * (1.0 + terms.iter().map(|t| t.abs()).sum::<f64>());
            worst = worst.min(ln_ratio - slack);
        }
    }
    Ok(worst.exp())
}

/// Constants of one induction level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub n: usize,
    pub c: f64,
    pub ln_c: f64,
    /// `L_n` used to pass from `n` to `n + 1` agents; absent at the top level.
    pub l: Option<f64>,
    /// `J_n` used to pass from `n` to `n + 1` agents; absent at the top level.
    pub j: Option<f64>,
}

/// `c_2, ..., c_N` for one good, with the `L_n`, `J_n` feeding each step.
pub fn compute_c_sequence(economy: &Economy, good: usize, grid: usize) -> Result<Vec<Level>> {
    if good >= economy.n_goods() {
        return Err(Error::IndexOutOfRange { index: good, n_agents: economy.n_goods() });
    }
    let alphas = economy.exponents_for(good);
    let rho = compute_rho(economy);
    let top = economy.n_agents();
    let mut levels = Vec::with_capacity(top - 1);
    let mut ln_c = 0.0_f64;
    for n in 2..=top {
        if n == top {
            levels.push(Level { n, c: ln_c.exp(), ln_c, l: None, j: None });
            break;
        }
        let l = compute_l(n, &alphas, grid)?;
        let j = compute_j(n, &alphas)?;
        levels.push(Level { n, c: ln_c.exp(), ln_c, l: Some(l), j: Some(j) });
        let nf = n as f64;
        ln_c += (1.0 - nf) * (1.0 + 2.0 / ((nf - 1.0) * rho)).ln()
            + (2.0 * rho / (nf * (nf + 1.0))).ln()
            + j.ln()
            + l.ln();
    }
    Ok(levels)
}

fn poisson_sum(lambda: f64, from: u64, to: Option<u64>) -> f64 {
    let first = from as f64;
    let mut term = (-lambda + first * lambda.ln() - ln_gamma(first + 1.0)).exp();
    let mut sum = 0.0;
    let mut m = first;
    loop {
        if to.is_some_and(|t| m >= t as f64) {
            break;
        }
        sum += term;
        m += 1.0;
        term *= lambda / m;
        if to.is_none() && m > lambda && term <= 1e-17 * sum {
            break;
        }
    }
    sum
}

/// `P(Poisson(lambda) >= k)`.
///
/// Below `lambda = 30` the smaller of head and tail is summed directly and the
/// other obtained by complement; above, the regularized lower incomplete Gamma
/// function is used.
pub fn poisson_tail(k: u64, lambda: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if lambda <= 0.0 {
        return 0.0;
    }
    if lambda >= 30.0 {
        gamma_lr(k as f64, lambda)
    } else if lambda <= k as f64 {
        poisson_sum(lambda, k, None).min(1.0)
    } else {
        (1.0 - poisson_sum(lambda, 0, Some(k))).max(0.0)
    }
}

/// `P(Poisson(lambda) < k)`, the complement of [`poisson_tail`].
pub fn poisson_head(k: u64, lambda: f64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda >= 30.0 {
        gamma_ur(k as f64, lambda)
    } else if lambda <= k as f64 {
        (1.0 - poisson_sum(lambda, k, None)).max(0.0)
    } else {
        poisson_sum(lambda, 0, Some(k)).min(1.0)
    }
}

/// Minorization mass of `P^tau`: `c_N P(Poisson(K tau) >= N - 1)`.
pub fn epsilon_of_tau(c_n: f64, total_rate: f64, n_agents: usize, tau: f64) -> f64 {
    c_n * poisson_tail(n_agents as u64 - 1, total_rate * tau)
}

/// `log(1 / (1 - eps(tau))) / tau`.
pub fn rate_of_tau(c_n: f64, total_rate: f64, n_agents: usize, tau: f64) -> f64 {
    let eps = epsilon_of_tau(c_n, total_rate, n_agents, tau);
    let ln_complement = if eps <= 0.5 {
        (-eps).ln_1p()
    } else {
        // 1 - eps = (1 - c) + c P(Poisson < N - 1) without cancellation
        ((1.0 - c_n) + c_n * poisson_head(n_agents as u64 - 1, total_rate * tau)).ln()
    };
    -ln_complement / tau
}

/// Maximizes the certified rate over `tau`.
///
/// The rate depends on `tau` only through `lambda = K tau`, so the search runs
/// over `lambda` and rescales. For `N = 2` and `c_2 = 1` the rate equals `K`
/// for every `tau`; `tau* = 1/K` is returned.
pub fn optimize_rate(c_n: f64, total_rate: f64, n_agents: usize) -> Result<(f64, f64)> {
    if !(c_n > 0.0 && c_n <= 1.0) || !(total_rate > 0.0 && total_rate.is_finite()) || n_agents < 2 {
        return Err(Error::DegenerateParameters(format!(
            "need 0 < c_N <= 1, K > 0 and N >= 2; got c_N = {c_n}, K = {total_rate}, N = {n_agents}"
        )));
    }
    if n_agents == 2 {
        if c_n == 1.0 {
            return Ok((1.0 / total_rate, total_rate));
        }
        return Err(Error::NumericalNonConvergence(
            "with two agents the rate increases towards K c_2 as tau -> 0; no maximizer".into(),
        ));
    }
    let unit = |lambda: f64| rate_of_tau(c_n, 1.0, n_agents, lambda);

    let (lo_exp, hi_exp, points) = (-4.0, 6.0, 401);
    let grid: Vec<f64> = (0..points)
        .map(|k| 10f64.powf(lo_exp + (hi_exp - lo_exp) * k as f64 / (points - 1) as f64))
        .collect();
    let values: Vec<f64> = grid.iter().map(|&l| unit(l)).collect();
    let (best, &best_value) = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty grid");
    if !(best_value > 0.0) || best == 0 || best == points - 1 {
        return Err(Error::NumericalNonConvergence(format!(
            "could not bracket the rate maximum (c_N = {c_n}, N = {n_agents})"
        )));
    }

    // golden-section search on [grid[best - 1], grid[best + 1]]
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (grid[best - 1], grid[best + 1]);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (unit(c), unit(d));
    for _ in 0..200 {
        if b - a <= 1e-15 * (a + b) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = unit(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = unit(d);
        }
    }
    let lambda_star = if fc >= fd { c } else { d };
    let tau_star = lambda_star / total_rate;
    Ok((tau_star, rate_of_tau(c_n, total_rate, n_agents, tau_star)))
}

/// Bound for one good.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodBound {
    pub good: usize,
    pub levels: Vec<Level>,
    pub c_n: f64,
    pub tau_star: f64,
    pub epsilon: f64,
    pub certified_rate: f64,
}

/// All intermediate constants of the certified rate.
///
/// The top-level `tau_star`, `epsilon` and `certified_rate` come from the
/// slowest good: goods evolve as independent chains, and the TV distance of a
/// product coupling is at most the sum of the per-good distances, so the
/// joint law converges at least at the smallest per-good rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoeblinReport {
    pub schema_version: String,
    pub n_agents: usize,
    pub n_goods: usize,
    pub total_rate: f64,
    pub kappa: f64,
    pub max_rate: f64,
    pub rho: f64,
    pub grid: usize,
    pub goods: Vec<GoodBound>,
    pub slowest_good: usize,
    pub levels: Vec<Level>,
    pub tau_star: f64,
    pub epsilon: f64,
    pub certified_rate: f64,
}

pub fn doeblin_report(economy: &Economy, grid: usize) -> Result<DoeblinReport> {
    let grid = grid.max(MIN_GRID);
    let k = economy.total_rate();
    let n = economy.n_agents();
    let mut goods = Vec::with_capacity(economy.n_goods());
    for good in 0..economy.n_goods() {
        let levels = compute_c_sequence(economy, good, grid)?;
        let c_n = levels.last().expect("at least one level").c;
        if !(c_n > 0.0) {
            return Err(Error::NumericalNonConvergence(format!(
                "c_N underflows for good {good} (ln c_N = {})",
                levels.last().unwrap().ln_c
            )));
        }
        let (tau_star, certified_rate) = optimize_rate(c_n, k, n)?;
        let epsilon = epsilon_of_tau(c_n, k, n, tau_star);
        goods.push(GoodBound { good, levels, c_n, tau_star, epsilon, certified_rate });
    }
    let slowest = goods
        .iter()
        .min_by(|a, b| a.certified_rate.total_cmp(&b.certified_rate))
        .expect("at least one good")
        .clone();
    Ok(DoeblinReport {
        schema_version: DOEBLIN_SCHEMA_VERSION.to_string(),
        n_agents: n,
        n_goods: economy.n_goods(),
        total_rate: k,
        kappa: economy.min_rate(),
        max_rate: economy.max_rate(),
        rho: compute_rho(economy),
        grid,
        slowest_good: slowest.good,
        levels: slowest.levels,
        tau_star: slowest.tau_star,
        epsilon: slowest.epsilon,
        certified_rate: slowest.certified_rate,
        goods,
    })
}

/// Upper bound on the expected binned TV between two independent samples of
/// one law occupying `cells` bins: `0.5 * sqrt(cells * (1/n_a + 1/n_b))`.
pub fn tv_noise_floor(cells: usize, n_a: usize, n_b: usize) -> f64 {
    (0.5 * (cells as f64 * (1.0 / n_a as f64 + 1.0 / n_b as f64)).sqrt()).min(1.0)
}

/// One pair of starting states pushed through `N - 1` embedded steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingTrial {
    pub label: String,
    pub good: usize,
    pub tv: f64,
    /// `1 - c_N`: the largest TV compatible with the minorization.
    pub bound: f64,
    /// Three Efron-Stein standard errors.
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinorizationReport {
    pub n_samples: usize,
    pub steps: usize,
    pub tv_mode: TvMode,
    pub bins: usize,
    pub trials: Vec<CouplingTrial>,
    /// TV between two sample sets started from the same state.
    pub control_tv: f64,
    /// [`tv_noise_floor`] for the control, over the cells it occupies.
    pub control_floor: f64,
    pub passed: bool,
}

fn concentrated(economy: &Economy, agent: usize) -> State {
    let (n, m) = (economy.n_agents(), economy.n_goods());
    let totals = economy.totals();
    State::new(Matrix::from_fn(n, m, |i, g| if i == agent { totals[g] } else { 0.0 }))
}

fn equal_split(economy: &Economy) -> State {
    let (n, m) = (economy.n_agents(), economy.n_goods());
    let totals = economy.totals();
    State::new(Matrix::from_fn(n, m, |_, g| totals[g] / n as f64))
}

/// Per good, `count` end states after `steps` embedded steps from `start`.
fn push_forward(economy: &Economy, start: &State, steps: usize, count: usize, rng: &mut Stream) -> Result<Vec<Matrix>> {
    let (n, m) = (economy.n_agents(), economy.n_goods());
    let mut out = vec![Matrix::zeros(count, n); m];
    for k in 0..count {
        let mut state = start.clone();
        embedded_chain_step(&mut state, economy, steps, rng)?;
        for (g, mat) in out.iter_mut().enumerate() {
            for i in 0..n {
                mat.set(k, i, state.get(i, g));
            }
        }
    }
    Ok(out)
}

fn occupied_cells(samples: &[&Matrix], total: f64, mode: TvMode, bins: usize) -> usize {
    let n = samples[0].cols();
    let cell_of = |row: &[f64]| -> Vec<usize> {
        let coords: &[f64] = match mode {
            TvMode::Joint => &row[..n - 1],
            TvMode::Marginal => &row[..1],
        };
        coords.iter().map(|x| crate::simulator::bin_index(x / total, bins)).collect()
    };
    let mut cells: Vec<Vec<usize>> = samples.iter().flat_map(|m| (0..m.rows()).map(|k| cell_of(m.row(k)))).collect();
    cells.sort_unstable();
    cells.dedup();
    cells.len()
}

/// Empirical check of the coupling implied by the minorization: after `N - 1`
/// embedded steps from any two starts, the laws are within TV `1 - c_N`.
pub fn minorization_check(economy: &Economy, n_samples: usize, grid: usize, rng: &mut Stream) -> Result<MinorizationReport> {
    if n_samples == 0 {
        return Err(Error::EmptySample);
    }
    let n = economy.n_agents();
    let steps = n - 1;
    let mode = TvMode::auto(n);
    let bins = default_bin_count(n_samples);
    let tolerance = 3.0 * tv_std_error(n_samples, n_samples);
    let totals = economy.totals().to_vec();

    let rich_first = concentrated(economy, 0);
    let rich_last = concentrated(economy, n - 1);
    let equal = equal_split(economy);
    let pairs = [
        ("concentrated-vs-equal", &rich_first, &equal),
        ("concentrated-first-vs-last", &rich_first, &rich_last),
    ];

    let mut trials = Vec::new();
    for (label, a, b) in pairs {
        let sa = push_forward(economy, a, steps, n_samples, rng)?;
        let sb = push_forward(economy, b, steps, n_samples, rng)?;
        for good in 0..economy.n_goods() {
            let c_n = compute_c_sequence(economy, good, grid)?.last().unwrap().c;
            let tv = tv_between(&sa[good..=good], &sb[good..=good], &totals[good..=good], mode, bins)?;
            let bound = 1.0 - c_n;
            trials.push(CouplingTrial {
                label: label.to_string(),
                good,
                tv,
                bound,
                tolerance,
                pass: tv <= bound + tolerance,
            });
        }
    }

    let ca = push_forward(economy, &equal, steps, n_samples, rng)?;
    let cb = push_forward(economy, &equal, steps, n_samples, rng)?;
    let control_tv = tv_between(&ca, &cb, &totals, mode, bins)?;
    let control_floor = (0..economy.n_goods())
        .map(|g| {
            let cells = occupied_cells(&[&ca[g], &cb[g]], totals[g], mode, bins);
            tv_noise_floor(cells, n_samples, n_samples)
        })
        .fold(0.0, f64::max);

    let passed = trials.iter().all(|t| t.pass) && control_tv <= control_floor + tolerance;
    Ok(MinorizationReport { n_samples, steps, tv_mode: mode, bins, trials, control_tv, control_floor, passed })
}
