//! Statistics used to measure convergence to the product Dirichlet law.
//!
//! The total-variation estimator bins samples on a fixed equal-width grid and
//! returns half the L1 distance between the two empirical histograms. That is
//! the TV distance restricted to the sigma-algebra generated by the bins, so
//! it is a consistent estimate of a lower bound on the true TV distance.
//! Changing one sample moves the estimate by at most `1/n`, so by the
//! Efron-Stein inequality its standard deviation is at most
//! `sqrt((1/n_a + 1/n_b) / 2)`; [`tv_std_error`] returns that bound.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::economy::Economy;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, stream, tag};
use crate::sampling::DirichletSpec;
use crate::simulator::{default_bin_count, EnsembleStats};

/// Smallest sample size for which asymptotic KS p-values are reported.
pub const MIN_KS_SAMPLES: usize = 35;

/// Version tag written into serialized convergence reports.
pub const CONVERGENCE_SCHEMA_VERSION: &str = "convergence-report/1";

/// Mean vector and covariance matrix of `D(alpha, G)`.
pub fn dirichlet_moments(spec: &DirichletSpec) -> (Vec<f64>, Matrix) {
    let alphas = spec.alphas();
    let (s, g) = (spec.alpha_sum(), spec.total());
    let n = alphas.len();
    let mean = alphas.iter().map(|a| g * a / s).collect();
    let denom = s * s * (s + 1.0);
    let cov = Matrix::from_fn(n, n, |i, j| {
        let diag = if i == j { alphas[i] * s } else { 0.0 };
        g * g * (diag - alphas[i] * alphas[j]) / denom
    });
    (mean, cov)
}

/// `E[prod_i g_i^{k_i}]` under `D(alpha, G)` for small integer powers,
/// via rising factorials.
pub fn dirichlet_raw_moment(spec: &DirichletSpec, powers: &[(usize, u32)]) -> f64 {
    let alphas = spec.alphas();
    let mut value = 1.0;
    let mut order = 0u32;
    for &(i, k) in powers {
        for r in 0..k {
            value *= alphas[i] + r as f64;
        }
        order += k;
    }
    let s = spec.alpha_sum();
    for r in 0..order {
        value /= s + r as f64;
    }
    value * spec.total().powi(order as i32)
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, r| acc * (n - r) as f64 / (r + 1) as f64)
}

/// `E[(g_i - mu_i)^p (g_j - mu_j)^q]`.
fn central_product_moment(spec: &DirichletSpec, mean: &[f64], i: usize, p: u32, j: usize, q: u32) -> f64 {
    if i == j {
        let k = p + q;
        return (0..=k)
            .map(|r| binomial(k, r) * (-mean[i]).powi((k - r) as i32) * dirichlet_raw_moment(spec, &[(i, r)]))
            .sum();
    }
    let mut acc = 0.0;
    for r in 0..=p {
        for t in 0..=q {
            acc += binomial(p, r)
                * binomial(q, t)
                * (-mean[i]).powi((p - r) as i32)
                * (-mean[j]).powi((q - t) as i32)
                * dirichlet_raw_moment(spec, &[(i, r), (j, t)]);
        }
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Sample size entering the asymptotic law (`n_a n_b / (n_a + n_b)` for two samples).
    pub n_effective: f64,
}

/// Survival function of the Kolmogorov distribution, `P(K > lambda)`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // theta-function form converges fast for small arguments
        let c = std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let cdf: f64 = (1..=6)
            .map(|k| {
                let m = (2 * k - 1) as f64;
                (-m * m * c).exp()
            })
            .sum::<f64>()
            * (2.0 * std::f64::consts::PI).sqrt()
            / lambda;
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let mut acc = 0.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * lambda * lambda).exp();
            acc += if k % 2 == 1 { term } else { -term };
            if term < 1e-18 {
                break;
            }
        }
        (2.0 * acc).clamp(0.0, 1.0)
    }
}

/// Asymptotic p-value with Stephens' finite-sample scaling of the statistic.
fn ks_p_value(statistic: f64, n_effective: f64) -> f64 {
    let root = n_effective.sqrt();
    kolmogorov_survival((root + 0.12 + 0.11 / root) * statistic)
}

/// One-sample KS test against a continuous CDF.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    if samples.len() < MIN_KS_SAMPLES {
        return Err(Error::TooFewSamples { got: samples.len(), required: MIN_KS_SAMPLES });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d = 0.0_f64;
    for (k, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max((k + 1) as f64 / n - f).max(f - k as f64 / n);
    }
    Ok(KsResult { statistic: d, p_value: ks_p_value(d, n), n_effective: n })
}

/// Two-sample KS test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let small = a.len().min(b.len());
    if small < MIN_KS_SAMPLES {
        return Err(Error::TooFewSamples { got: small, required: MIN_KS_SAMPLES });
    }
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0_f64;
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let n_eff = na * nb / (na + nb);
    Ok(KsResult { statistic: d, p_value: ks_p_value(d, n_eff), n_effective: n_eff })
}

pub fn beta_cdf(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        beta_reg(a, b, x)
    }
}

/// KS test of holdings `samples` (in `[0, G]`) against the Dirichlet marginal
/// `G * Beta(alpha_i, s_N - alpha_i)`.
pub fn marginal_ks(samples: &[f64], alpha_i: f64, s_n: f64, total: f64) -> Result<KsResult> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    if !(alpha_i > 0.0 && s_n > alpha_i && total > 0.0) {
        return Err(Error::DegenerateParameters(format!(
            "need 0 < alpha_i < s_N and G > 0, got alpha_i = {alpha_i}, s_N = {s_n}, G = {total}"
        )));
    }
    let rest = s_n - alpha_i;
    let scaled: Vec<f64> = samples.iter().map(|x| x / total).collect();
    ks_one_sample(&scaled, |x| beta_cdf(alpha_i, rest, x))
}

/// Points of equal dimension stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    dim: usize,
    values: Vec<f64>,
}

impl SampleSet {
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || !values.len().is_multiple_of(dim) {
            return Err(Error::BadDimensions(format!("{} values do not form points of dimension {dim}", values.len())));
        }
        Ok(SampleSet { dim, values })
    }

    pub fn from_scalars(values: Vec<f64>) -> Self {
        SampleSet { dim: 1, values }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }
}

/// Equal-width grid of `bins` cells per coordinate on `[lower, upper]^dim`.
/// Values outside the range are clamped to the edge cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    pub dim: usize,
    pub bins: usize,
    pub lower: f64,
    pub upper: f64,
}

impl Binning {
    pub fn unit(dim: usize, bins: usize) -> Self {
        Binning { dim, bins, lower: 0.0, upper: 1.0 }
    }

    fn cell(&self, point: &[f64]) -> u64 {
        let width = self.upper - self.lower;
        point.iter().fold(0u64, |id, &x| {
            let b = ((x - self.lower) / width * self.bins as f64).floor();
            let b = if b <= 0.0 { 0 } else { (b as usize).min(self.bins - 1) };
            id * self.bins as u64 + b as u64
        })
    }
}

/// Half the L1 distance between the binned empirical laws of two sample sets.
pub fn binned_tv(a: &SampleSet, b: &SampleSet, binning: &Binning) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    if a.dim() != binning.dim || b.dim() != binning.dim {
        return Err(Error::BinningMismatch(format!(
            "sample dimensions {} and {} against a {}-dimensional binning",
            a.dim(),
            b.dim(),
            binning.dim
        )));
    }
    if binning.bins == 0 || !(binning.upper > binning.lower) {
        return Err(Error::BinningMismatch("binning needs at least one cell of positive width".into()));
    }
    if (binning.bins as u64).checked_pow(binning.dim as u32).is_none() {
        return Err(Error::BinningMismatch(format!("{}^{} cells overflow the cell index", binning.bins, binning.dim)));
    }
    let sorted_cells = |s: &SampleSet| {
        let mut cells: Vec<u64> = s.points().map(|p| binning.cell(p)).collect();
        cells.sort_unstable();
        cells
    };
    let (ca, cb) = (sorted_cells(a), sorted_cells(b));
    // exact integer accumulation of sum |c_a n_b - c_b n_a|
    let (na, nb) = (ca.len() as u128, cb.len() as u128);
    let (mut i, mut j) = (0, 0);
    let mut l1: u128 = 0;
    while i < ca.len() || j < cb.len() {
        let cell = match (ca.get(i), cb.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        let start_a = i;
        while i < ca.len() && ca[i] == cell {
            i += 1;
        }
        let start_b = j;
        while j < cb.len() && cb[j] == cell {
            j += 1;
        }
        l1 += ((i - start_a) as u128 * nb).abs_diff((j - start_b) as u128 * na);
    }
    Ok((l1 as f64 / (2 * na * nb) as f64).clamp(0.0, 1.0))
}

/// Efron-Stein bound on the standard deviation of [`binned_tv`].
pub fn tv_std_error(n_a: usize, n_b: usize) -> f64 {
    (0.5 * (1.0 / n_a as f64 + 1.0 / n_b as f64)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
}

/// Upper tail of the chi-square law.
pub fn chi_square_survival(statistic: f64, dof: usize) -> f64 {
    if statistic <= 0.0 {
        return 1.0;
    }
    gamma_ur(dof as f64 / 2.0, statistic / 2.0)
}

/// Pearson goodness of fit of non-negative integer counts against
/// `Poisson(mean)`. Tails are pooled so that every category expects at
/// least five observations.
pub fn chi_square_poisson(counts: &[u64], mean: f64) -> Result<ChiSquareResult> {
    if counts.is_empty() {
        return Err(Error::EmptySample);
    }
    if !(mean > 0.0 && mean.is_finite()) {
        return Err(Error::DegenerateParameters(format!("Poisson mean {mean}")));
    }
    let n = counts.len() as f64;
    let pmf = |k: u64| (-mean + k as f64 * mean.ln() - ln_gamma(k as f64 + 1.0)).exp();
    let max_observed = *counts.iter().max().unwrap();
    let horizon = max_observed.max((mean + 20.0 * mean.sqrt() + 20.0) as u64);
    let probs: Vec<f64> = (0..=horizon).map(pmf).collect();

    // lowest pooled category [0, lo], highest [hi, inf)
    let mut lo = 0usize;
    let mut acc = probs[0];
    while n * acc < 5.0 && lo + 1 < probs.len() {
        lo += 1;
        acc += probs[lo];
    }
    let mut hi = probs.len() - 1;
    let mut upper_tail = 1.0 - probs[..hi].iter().sum::<f64>();
    while n * upper_tail < 5.0 && hi > lo + 1 {
        hi -= 1;
        upper_tail += probs[hi];
    }
    if hi <= lo + 1 {
        return Err(Error::TooFewSamples { got: counts.len(), required: 10 });
    }
    let mut expected = vec![probs[..=lo].iter().sum::<f64>()];
    expected.extend_from_slice(&probs[lo + 1..hi]);
    expected.push(1.0 - probs[..hi].iter().sum::<f64>());
    let mut observed = vec![0u64; expected.len()];
    for &c in counts {
        let c = c as usize;
        let slot = if c <= lo { 0 } else if c >= hi { expected.len() - 1 } else { c - lo };
        observed[slot] += 1;
    }
    let statistic: f64 = observed
        .iter()
        .zip(&expected)
        .map(|(&o, &p)| {
            let e = n * p;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let dof = expected.len() - 1;
    Ok(ChiSquareResult { statistic, degrees_of_freedom: dof, p_value: chi_square_survival(statistic, dof) })
}

/// How the TV distance to equilibrium is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TvMode {
    /// Joint binning of the first `N - 1` holdings of each good (the last one
    /// is determined); the reported value is the maximum over goods.
    Joint,
    /// One-dimensional binning of every (agent, good) holding; the reported
    /// value is the maximum over coordinates.
    Marginal,
}

impl TvMode {
    /// Joint binning while it stays feasible (`N <= 3`), marginal otherwise.
    pub fn auto(n_agents: usize) -> Self {
        if n_agents <= 3 {
            TvMode::Joint
        } else {
            TvMode::Marginal
        }
    }
}

/// Per good, samples shaped trajectories by agents.
pub(crate) fn tv_between(a: &[Matrix], b: &[Matrix], totals: &[f64], mode: TvMode, bins: usize) -> Result<f64> {
    let mut worst = 0.0_f64;
    for (g, &total) in totals.iter().enumerate() {
        let n = a[g].cols();
        match mode {
            TvMode::Joint => {
                let project = |m: &Matrix| {
                    let values = (0..m.rows()).flat_map(|k| m.row(k)[..n - 1].iter().map(|x| x / total)).collect();
                    SampleSet::new(n - 1, values)
                };
                let tv = binned_tv(&project(&a[g])?, &project(&b[g])?, &Binning::unit(n - 1, bins))?;
                worst = worst.max(tv);
            }
            TvMode::Marginal => {
                for i in 0..n {
                    let column = |m: &Matrix| SampleSet::from_scalars(m.column(i).iter().map(|x| x / total).collect());
                    let tv = binned_tv(&column(&a[g]), &column(&b[g]), &Binning::unit(1, bins))?;
                    worst = worst.max(tv);
                }
            }
        }
    }
    Ok(worst)
}

/// Draws `count` equilibrium states, returned per good as trajectories by agents.
pub(crate) fn equilibrium_samples(economy: &Economy, count: usize, seed: u64) -> Vec<Matrix> {
    let mut rng = stream(seed, 0);
    let (n, m) = (economy.n_agents(), economy.n_goods());
    let mut out = vec![Matrix::zeros(count, n); m];
    for k in 0..count {
        let state = economy.equilibrium_state(&mut rng);
        for (g, mat) in out.iter_mut().enumerate() {
            for i in 0..n {
                mat.set(k, i, state.get(i, g));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MomentKind {
    Mean,
    Variance,
    Covariance,
}

/// One tracked moment: empirical value, Dirichlet target and z-score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentCheck {
    pub kind: MomentKind,
    pub good: usize,
    pub agent: usize,
    /// Second agent for covariances; equals `agent` otherwise.
    pub other: usize,
    pub empirical: f64,
    pub target: f64,
    /// Monte Carlo standard error under the target law.
    pub std_error: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalKs {
    pub agent: usize,
    pub good: usize,
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeReport {
    pub time: f64,
    pub max_abs_z: f64,
    pub tv: f64,
    pub max_ks_statistic: f64,
    pub min_ks_p_value: f64,
    pub moments: Vec<MomentCheck>,
    pub ks: Vec<MarginalKs>,
}

/// Comparison of an ensemble with the product Dirichlet equilibrium at every
/// sample time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub schema_version: String,
    pub plan_digest: String,
    pub seed: u64,
    pub n_samples: usize,
    pub tv_mode: TvMode,
    pub bins: usize,
    /// TV estimate between two independent equilibrium sample sets of the same size.
    pub baseline_tv: f64,
    /// Efron-Stein bound on the standard deviation of each TV estimate.
    pub tv_std_error: f64,
    /// Consecutive TV estimates never rise by more than three combined standard errors.
    pub tv_non_increasing: bool,
    /// The last TV estimate lies within three combined standard errors of the baseline.
    pub final_within_baseline: bool,
    pub times: Vec<TimeReport>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ReportOptions {
    pub tv_mode: Option<TvMode>,
    pub bins: Option<usize>,
}

pub fn convergence_report(ensemble: &EnsembleStats, economy: &Economy) -> Result<ConvergenceReport> {
    convergence_report_with(ensemble, economy, ReportOptions::default())
}

pub fn convergence_report_with(
    ensemble: &EnsembleStats,
    economy: &Economy,
    options: ReportOptions,
) -> Result<ConvergenceReport> {
    let (n, m) = (economy.n_agents(), economy.n_goods());
    if ensemble.n_agents != n || ensemble.n_goods != m || ensemble.totals != economy.totals() {
        return Err(Error::BadDimensions("ensemble was not produced from this economy".into()));
    }
    let count = ensemble.n_trajectories;
    let mode = options.tv_mode.unwrap_or_else(|| TvMode::auto(n));
    let bins = options.bins.unwrap_or_else(|| default_bin_count(count));
    let seed = ensemble.seed;

    let reference = equilibrium_samples(economy, count, derive_seed(seed, tag::EQUILIBRIUM_REFERENCE));
    let baseline_set = equilibrium_samples(economy, count, derive_seed(seed, tag::EQUILIBRIUM_BASELINE));
    let baseline_tv = tv_between(&reference, &baseline_set, economy.totals(), mode, bins)?;
    let sigma = tv_std_error(count, count);

    let specs: Vec<DirichletSpec> = (0..m).map(|g| economy.dirichlet(g)).collect();
    let targets: Vec<(Vec<f64>, Matrix)> = specs.iter().map(dirichlet_moments).collect();
    let nf = count as f64;

    let mut times = Vec::with_capacity(ensemble.snapshots.len());
    for snap in &ensemble.snapshots {
        let samples = snap.samples.as_ref().ok_or(Error::MissingSamples)?;
        let mut moments = Vec::new();
        let mut ks = Vec::new();
        for g in 0..m {
            let spec = &specs[g];
            let (mean, cov) = &targets[g];
            for i in 0..n {
                let var = cov.get(i, i);
                let se = (var / nf).sqrt();
                moments.push(moment_check(MomentKind::Mean, g, i, i, snap.mean.get(i, g), mean[i], se));
                for j in i..n {
                    let fourth = central_product_moment(spec, mean, i, 2, j, 2);
                    let target = cov.get(i, j);
                    let se = ((fourth - target * target).max(0.0) / nf).sqrt();
                    let kind = if i == j { MomentKind::Variance } else { MomentKind::Covariance };
                    moments.push(moment_check(kind, g, i, j, snap.covariance[g].get(i, j), target, se));
                }
                let r = marginal_ks(&samples[g].column(i), spec.alphas()[i], spec.alpha_sum(), spec.total())?;
                ks.push(MarginalKs { agent: i, good: g, statistic: r.statistic, p_value: r.p_value });
            }
        }
        let tv = tv_between(samples, &reference, economy.totals(), mode, bins)?;
        times.push(TimeReport {
            time: snap.time,
            max_abs_z: moments.iter().map(|c| c.z.abs()).fold(0.0, f64::max),
            tv,
            max_ks_statistic: ks.iter().map(|k| k.statistic).fold(0.0, f64::max),
            min_ks_p_value: ks.iter().map(|k| k.p_value).fold(1.0, f64::min),
            moments,
            ks,
        });
    }

    let band = 3.0 * (2.0_f64).sqrt() * sigma;
    let tv_non_increasing = times.windows(2).all(|w| w[1].tv <= w[0].tv + band);
    let final_within_baseline = times.last().is_some_and(|t| t.tv <= baseline_tv + band);

    Ok(ConvergenceReport {
        schema_version: CONVERGENCE_SCHEMA_VERSION.to_string(),
        plan_digest: ensemble.plan_digest.clone(),
        seed,
        n_samples: count,
        tv_mode: mode,
        bins,
        baseline_tv,
        tv_std_error: sigma,
        tv_non_increasing,
        final_within_baseline,
        times,
    })
}

fn moment_check(kind: MomentKind, good: usize, agent: usize, other: usize, empirical: f64, target: f64, std_error: f64) -> MomentCheck {
    let z = if std_error > 0.0 {
        (empirical - target) / std_error
    } else if empirical == target {
        0.0
    } else {
        f64::MAX.copysign(empirical - target)
    };
    MomentCheck { kind, good, agent, other, empirical, target, std_error, z }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::sampling::sample_dirichlet;
    use rand::Rng;

    #[test]
    fn flat_three_moments() {
        let spec = DirichletSpec::new(vec![1.0; 3], 1.0).unwrap();
        let (mean, cov) = dirichlet_moments(&spec);
        for (i, m) in mean.iter().enumerate() {
            assert!((m - 1.0 / 3.0).abs() < 1e-15);
            assert!((cov.get(i, i) - 1.0 / 18.0).abs() < 1e-15);
            for j in 0..3 {
                if i != j {
                    assert!((cov.get(i, j) + 1.0 / 36.0).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn flat_three_moments_monte_carlo() {
        let spec = DirichletSpec::new(vec![1.0; 3], 1.0).unwrap();
        let mut rng = stream(99, 0);
        let n = 1_000_000;
        let (mut s0, mut s00, mut s01) = (0.0, 0.0, 0.0);
        let mut s1 = 0.0;
        for _ in 0..n {
            let g = sample_dirichlet(&spec, &mut rng);
            s0 += g[0];
            s1 += g[1];
            s00 += g[0] * g[0];
            s01 += g[0] * g[1];
        }
        let nf = n as f64;
        let (m0, m1) = (s0 / nf, s1 / nf);
        let (mean, cov) = dirichlet_moments(&spec);
        assert!((m0 - mean[0]).abs() < 0.002);
        assert!((s00 / nf - m0 * m0 - cov.get(0, 0)).abs() < 0.001);
        assert!((s01 / nf - m0 * m1 - cov.get(0, 1)).abs() < 0.001);
    }

    #[test]
    fn two_agent_mean_by_quadrature() {
        // midpoint rule on the Beta(a, b) density of agent 1's share of G
        for (a, b, g) in [(2.0, 3.0, 1.0), (0.5, 0.5, 2.0), (1.5, 4.0, 3.0_f64)] {
            let spec = DirichletSpec::new(vec![a, b], g).unwrap();
            let ln_z = ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
            let steps = 2_000_000;
            let h = 1.0 / steps as f64;
            let integral: f64 = (0..steps)
                .map(|k| {
                    let x = (k as f64 + 0.5) * h;
                    x * ((a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - ln_z).exp() * h
                })
                .sum();
            let (mean, _) = dirichlet_moments(&spec);
            assert!((mean[0] - g * integral).abs() < 1e-3 * g, "{} vs {}", mean[0], g * integral);
            assert!((mean[0] - g * a / (a + b)).abs() < 1e-14);
        }
    }

    #[test]
    fn covariance_rows_sum_to_zero() {
        let spec = DirichletSpec::new(vec![0.5, 2.0, 1.3, 4.0], 2.5).unwrap();
        let (_, cov) = dirichlet_moments(&spec);
        for i in 0..4 {
            assert!(cov.row(i).iter().sum::<f64>().abs() < 1e-15);
            for j in 0..4 {
                assert_eq!(cov.get(i, j), cov.get(j, i));
            }
        }
    }

    #[test]
    fn raw_moments_match_closed_forms() {
        let spec = DirichletSpec::new(vec![2.0, 3.0], 1.0).unwrap();
        // E[X] = 0.4, E[X^2] = a(a+1)/(s(s+1)) = 6/30
        assert!((dirichlet_raw_moment(&spec, &[(0, 1)]) - 0.4).abs() < 1e-15);
        assert!((dirichlet_raw_moment(&spec, &[(0, 2)]) - 0.2).abs() < 1e-15);
        let mean = vec![0.4, 0.6];
        // second central moment equals the variance 0.04
        assert!((central_product_moment(&spec, &mean, 0, 1, 0, 1) - 0.04).abs() < 1e-15);
        assert!((central_product_moment(&spec, &mean, 0, 1, 1, 1) + 0.04).abs() < 1e-15);
    }

    #[test]
    fn kolmogorov_branches_agree() {
        // both series are valid near the switch point
        let lambda = 1.18;
        let c = std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let theta: f64 = (1..=50)
            .map(|k| {
                let m = (2 * k - 1) as f64;
                (-m * m * c).exp()
            })
            .sum::<f64>()
            * (2.0 * std::f64::consts::PI).sqrt()
            / lambda;
        assert!((1.0 - theta - kolmogorov_survival(lambda + 1e-12)).abs() < 1e-10);
        assert!((kolmogorov_survival(1.3580986) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_survival(1.6276236) - 0.01).abs() < 1e-4);
        assert_eq!(kolmogorov_survival(0.0), 1.0);
    }

    #[test]
    fn point_mass_against_beta() {
        let samples = vec![0.5; 100];
        for (a, s) in [(1.0, 3.0), (0.5, 1.0), (2.0, 2.5)] {
            let r = marginal_ks(&samples, a, s, 1.0).unwrap();
            assert!(r.statistic >= 0.4);
        }
    }

    #[test]
    fn ks_errors() {
        assert_eq!(marginal_ks(&[], 1.0, 2.0, 1.0), Err(Error::EmptySample));
        assert!(matches!(marginal_ks(&[0.1; 40], 2.0, 2.0, 1.0), Err(Error::DegenerateParameters(_))));
        assert!(matches!(marginal_ks(&[0.1; 34], 1.0, 2.0, 1.0), Err(Error::TooFewSamples { .. })));
        assert!(matches!(ks_two_sample(&[0.1; 40], &[0.2; 10]), Err(Error::TooFewSamples { .. })));
    }

    #[test]
    fn two_sample_ks_statistic() {
        let a: Vec<f64> = (0..50).map(|k| k as f64).collect();
        let b: Vec<f64> = (0..50).map(|k| k as f64 + 25.0).collect();
        let r = ks_two_sample(&a, &b).unwrap();
        assert!((r.statistic - 0.5).abs() < 1e-15);
        let same = ks_two_sample(&a, &a).unwrap();
        assert_eq!(same.statistic, 0.0);
        assert_eq!(same.p_value, 1.0);
    }

    #[test]
    fn tv_identity_and_disjoint() {
        let a = SampleSet::from_scalars((0..100).map(|k| k as f64 / 200.0).collect());
        let b = SampleSet::from_scalars((0..100).map(|k| 0.5 + k as f64 / 200.0).collect());
        let bins = Binning::unit(1, 10);
        assert_eq!(binned_tv(&a, &a, &bins).unwrap(), 0.0);
        assert_eq!(binned_tv(&a, &b, &bins).unwrap(), 1.0);
    }

    #[test]
    fn tv_uniform_shift() {
        // exact TV between U(0,1) and U(0.5,1.5) is 1/2; bin edges fall on 0.5
        let mut rng = stream(31, 0);
        let n = 100_000;
        let a = SampleSet::from_scalars((0..n).map(|_| rng.random::<f64>()).collect());
        let b = SampleSet::from_scalars((0..n).map(|_| 0.5 + rng.random::<f64>()).collect());
        let bins = Binning { dim: 1, bins: 20, lower: 0.0, upper: 1.5 };
        let tv = binned_tv(&a, &b, &bins).unwrap();
        assert!((tv - 0.5).abs() < 0.02, "tv {tv}");
    }

    #[test]
    fn tv_errors() {
        let a = SampleSet::new(2, vec![0.1, 0.2]).unwrap();
        let b = SampleSet::from_scalars(vec![0.1]);
        assert!(matches!(binned_tv(&a, &b, &Binning::unit(2, 4)), Err(Error::BinningMismatch(_))));
        assert!(matches!(binned_tv(&a, &a, &Binning::unit(1, 4)), Err(Error::BinningMismatch(_))));
        let empty = SampleSet::new(2, vec![]).unwrap();
        assert_eq!(binned_tv(&a, &empty, &Binning::unit(2, 4)), Err(Error::EmptySample));
        assert!(SampleSet::new(2, vec![0.1]).is_err());
    }

    #[test]
    fn poisson_chi_square_accepts_poisson_counts() {
        let mut rng = stream(41, 0);
        let poisson = rand_distr::Poisson::new(5.0).unwrap();
        let counts: Vec<u64> = (0..10_000).map(|_| rand_distr::Distribution::sample(&poisson, &mut rng) as u64).collect();
        let r = chi_square_poisson(&counts, 5.0).unwrap();
        assert!(r.p_value > 0.01, "{r:?}");
        let shifted: Vec<u64> = counts.iter().map(|c| c + 1).collect();
        assert!(chi_square_poisson(&shifted, 5.0).unwrap().p_value < 1e-6);
    }

    #[test]
    fn chi_square_survival_reference_values() {
        // 99th percentile of chi-square with 1 and 10 degrees of freedom
        assert!((chi_square_survival(6.634896601, 1) - 0.01).abs() < 1e-8);
        assert!((chi_square_survival(23.20925116, 10) - 0.01).abs() < 1e-8);
    }
}
