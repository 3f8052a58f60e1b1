//! Gamma, Beta and Dirichlet variates, plus the Dirichlet density.
//!
//! Gamma draws are produced in log space. For shape `a < 1` the sampler uses
//! the boost `Gamma(a) = Gamma(a + 1) * U^(1/a)`, whose logarithm stays finite
//! even when the variate itself would underflow; Beta and Dirichlet variates
//! are then formed from log-Gamma draws by a log-sum-exp normalization.

use rand::distr::Open01;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::rng::Stream;

/// Sampler for `ln X` with `X ~ Gamma(shape, 1)`.
#[derive(Debug, Clone, Copy)]
pub struct LogGamma {
    shape: f64,
    base: Gamma<f64>,
    boosted: bool,
}

impl LogGamma {
    pub fn new(shape: f64) -> Result<Self> {
        if !(shape > 0.0 && shape.is_finite()) {
            return Err(Error::NonPositiveParameter(shape));
        }
        let boosted = shape < 1.0;
        let base_shape = if boosted { shape + 1.0 } else { shape };
        let base = Gamma::new(base_shape, 1.0).map_err(|_| Error::NonPositiveParameter(shape))?;
        Ok(LogGamma { shape, base, boosted })
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn sample_ln<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let ln_base = self.base.sample(rng).ln();
        if self.boosted {
            let u: f64 = rng.sample(Open01);
            ln_base + u.ln() / self.shape
        } else {
            ln_base
        }
    }
}

/// Splits a unit of mass between two parties with shares `(B, 1 - B)`,
/// `B ~ Beta(a, b)`.
///
/// Returns `(first_takes_larger, larger_share)` with `larger_share` in
/// `[0.5, 1]`. Handing out the larger share as a product and the smaller one
/// as a difference keeps the pair sum bit-exact (Sterbenz).
#[inline]
pub fn split_shares<R: Rng + ?Sized>(a: &LogGamma, b: &LogGamma, rng: &mut R) -> (bool, f64) {
    let ln_x = a.sample_ln(rng);
    let ln_y = b.sample_ln(rng);
    let d = ln_y - ln_x;
    // sigmoid of |d| in a form that never overflows
    let larger = 1.0 / (1.0 + (-d.abs()).exp());
    (d <= 0.0, larger.max(0.5))
}

/// One Beta(a, b) variate. Valid for shapes below one.
pub fn beta_sample(a: f64, b: f64, rng: &mut Stream) -> Result<f64> {
    let ga = LogGamma::new(a)?;
    let gb = LogGamma::new(b)?;
    let ln_x = ga.sample_ln(rng);
    let ln_y = gb.sample_ln(rng);
    Ok(1.0 / (1.0 + (ln_y - ln_x).exp()))
}

/// Dirichlet law `D(alpha, total)` on the simplex of `alphas.len()` holdings
/// summing to `total`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletSpec {
    alphas: Vec<f64>,
    total: f64,
}

impl DirichletSpec {
    pub fn new(alphas: Vec<f64>, total: f64) -> Result<Self> {
        if alphas.len() < 2 {
            return Err(Error::BadDimensions(format!(
                "Dirichlet law needs at least 2 coordinates, got {}",
                alphas.len()
            )));
        }
        if let Some(&a) = alphas.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
            return Err(Error::NonPositiveParameter(a));
        }
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::NonPositiveParameter(total));
        }
        Ok(DirichletSpec { alphas, total })
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn dim(&self) -> usize {
        self.alphas.len()
    }

    /// Sum of the exponents.
    pub fn alpha_sum(&self) -> f64 {
        self.alphas.iter().sum()
    }

    /// `ln Z = sum ln Gamma(alpha_i) - ln Gamma(s) + s ln G`.
    pub fn log_normalizer(&self) -> f64 {
        let s = self.alpha_sum();
        self.alphas.iter().map(|&a| ln_gamma(a)).sum::<f64>() - ln_gamma(s) + s * self.total.ln()
    }

    /// Normalizer of `prod g_i^(alpha_i - 1)` against Lebesgue measure on the
    /// first `N - 1` coordinates of the simplex. The integral carries
    /// `G^(s - 1)`, one power of `G` less than [`Self::log_normalizer`]; the
    /// two agree for `G = 1`.
    pub fn lebesgue_log_normalizer(&self) -> f64 {
        self.log_normalizer() - self.total.ln()
    }
}

/// Draws one point of `D(alpha, G)` by normalizing independent Gamma variates.
pub fn sample_dirichlet(spec: &DirichletSpec, rng: &mut Stream) -> Vec<f64> {
    let samplers: Vec<LogGamma> = spec
        .alphas
        .iter()
        .map(|&a| LogGamma::new(a).expect("validated exponent"))
        .collect();
    sample_dirichlet_with(&samplers, spec.total, rng)
}

pub(crate) fn sample_dirichlet_with(samplers: &[LogGamma], total: f64, rng: &mut Stream) -> Vec<f64> {
    let logs: Vec<f64> = samplers.iter().map(|s| s.sample_ln(rng)).collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = weights.iter().sum();
    weights.iter().map(|w| total * (w / sum)).collect()
}

/// Tolerance (relative to the total) for a point to count as on the simplex.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// Log density of `D(alpha, G)` with respect to Lebesgue measure on the
/// first `N - 1` coordinates of the simplex, so that it integrates to one.
///
/// On the boundary a zero coordinate with exponent above one gives `-inf`; a
/// zero coordinate with exponent below one gives `+inf` (the density diverges
/// but stays integrable). If both occur the vanishing factor wins.
pub fn dirichlet_log_density(spec: &DirichletSpec, point: &[f64]) -> Result<f64> {
    if point.len() != spec.dim() {
        return Err(Error::BadDimensions(format!(
            "point has {} coordinates, expected {}",
            point.len(),
            spec.dim()
        )));
    }
    let sum: f64 = point.iter().sum();
    if point.iter().any(|g| !(*g >= 0.0))
        || (sum - spec.total).abs() > SIMPLEX_TOLERANCE * spec.total
    {
        return Err(Error::PointOffSimplex { sum, total: spec.total });
    }
    let mut acc = 0.0;
    let mut diverges = false;
    for (&a, &g) in spec.alphas.iter().zip(point) {
        if g == 0.0 {
            if a > 1.0 {
                return Ok(f64::NEG_INFINITY);
            } else if a < 1.0 {
                diverges = true;
            }
        } else {
            acc += (a - 1.0) * g.ln();
        }
    }
    if diverges {
        return Ok(f64::INFINITY);
    }
    Ok(acc - spec.lebesgue_log_normalizer())
}
