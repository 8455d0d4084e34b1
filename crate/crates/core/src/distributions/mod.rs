//! Absolutely continuous distribution families and the CDF functionals used by
//! the rank-moment calculus.

mod functionals;
pub mod quadrature;

use std::f64::consts::{LN_2, PI, SQRT_2};

use rand::Rng;
use rand_distr::Distribution as _;
use serde::{Deserialize, Serialize};
use statrs::function::{beta::beta_reg, erf, gamma::gamma_lr};

use crate::error::{Error, Result};
use crate::tolerances;

pub use functionals::{
    cross_cdf_moment, cross_cdf_moment_quadrature, cross_cdf_product_moment,
    cross_cdf_product_moment_quadrature, g_moment, g_moment_quadrature,
};

/// A continuous distribution on the real line.
///
/// Serialized as a JSON object tagged by `"family"`, e.g.
/// `{"family": "normal", "mu": 2.0, "sigma": 3.0}`. Parameters are validated on
/// construction and on deserialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", try_from = "Unchecked")]
pub enum Distribution {
    Normal { mu: f64, sigma: f64 },
    Cauchy { x0: f64, gamma: f64 },
    /// Survival function `(m/x)^alpha` for `x ≥ m`.
    Pareto { m: f64, alpha: f64 },
    Gamma { shape: f64, scale: f64 },
    Exponential { mean: f64 },
    Beta { a: f64, b: f64 },
    Uniform { lo: f64, hi: f64 },
    Mixture {
        weights: Vec<f64>,
        components: Vec<Distribution>,
    },
}

#[derive(Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
enum Unchecked {
    Normal { mu: f64, sigma: f64 },
    Cauchy { x0: f64, gamma: f64 },
    Pareto { m: f64, alpha: f64 },
    Gamma { shape: f64, scale: f64 },
    Exponential { mean: f64 },
    Beta { a: f64, b: f64 },
    Uniform { lo: f64, hi: f64 },
    Mixture {
        weights: Vec<f64>,
        components: Vec<Distribution>,
    },
}

impl TryFrom<Unchecked> for Distribution {
    type Error = Error;

    fn try_from(u: Unchecked) -> Result<Self> {
        match u {
            Unchecked::Normal { mu, sigma } => Distribution::normal(mu, sigma),
            Unchecked::Cauchy { x0, gamma } => Distribution::cauchy(x0, gamma),
            Unchecked::Pareto { m, alpha } => Distribution::pareto(m, alpha),
            Unchecked::Gamma { shape, scale } => Distribution::gamma(shape, scale),
            Unchecked::Exponential { mean } => Distribution::exponential(mean),
            Unchecked::Beta { a, b } => Distribution::beta(a, b),
            Unchecked::Uniform { lo, hi } => Distribution::uniform(lo, hi),
            Unchecked::Mixture {
                weights,
                components,
            } => Distribution::mixture(weights, components),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::arg(format!("{name} must be positive and finite, got {v}")))
    }
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::arg(format!("{name} must be finite, got {v}")))
    }
}

impl Distribution {
    pub fn normal(mu: f64, sigma: f64) -> Result<Self> {
        finite("mu", mu)?;
        positive("sigma", sigma)?;
        Ok(Distribution::Normal { mu, sigma })
    }

    pub fn cauchy(x0: f64, gamma: f64) -> Result<Self> {
        finite("x0", x0)?;
        positive("gamma", gamma)?;
        Ok(Distribution::Cauchy { x0, gamma })
    }

    pub fn pareto(m: f64, alpha: f64) -> Result<Self> {
        positive("m", m)?;
        positive("alpha", alpha)?;
        Ok(Distribution::Pareto { m, alpha })
    }

    pub fn gamma(shape: f64, scale: f64) -> Result<Self> {
        positive("shape", shape)?;
        positive("scale", scale)?;
        Ok(Distribution::Gamma { shape, scale })
    }

    pub fn exponential(mean: f64) -> Result<Self> {
        positive("mean", mean)?;
        Ok(Distribution::Exponential { mean })
    }

    pub fn beta(a: f64, b: f64) -> Result<Self> {
        positive("a", a)?;
        positive("b", b)?;
        Ok(Distribution::Beta { a, b })
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        finite("lo", lo)?;
        finite("hi", hi)?;
        if lo >= hi {
            return Err(Error::arg(format!("uniform needs lo < hi, got [{lo}, {hi}]")));
        }
        Ok(Distribution::Uniform { lo, hi })
    }

    pub fn mixture(weights: Vec<f64>, components: Vec<Distribution>) -> Result<Self> {
        if weights.is_empty() || weights.len() != components.len() {
            return Err(Error::arg(format!(
                "mixture needs matching non-empty weights and components, got {} and {}",
                weights.len(),
                components.len()
            )));
        }
        for &w in &weights {
            positive("mixture weight", w)?;
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > tolerances::MIXTURE_WEIGHT_SUM {
            return Err(Error::arg(format!("mixture weights sum to {total}, not 1")));
        }
        Ok(Distribution::Mixture {
            weights,
            components,
        })
    }

    /// `(1−ε)·N(μ, σ²) + ε·N(μ, (τσ)²)`.
    pub fn contaminated_normal(mu: f64, sigma: f64, epsilon: f64, tau: f64) -> Result<Self> {
        if epsilon == 0.0 {
            return Distribution::normal(mu, sigma);
        }
        if !(0.0..1.0).contains(&epsilon) {
            return Err(Error::arg(format!(
                "contamination fraction must lie in [0, 1), got {epsilon}"
            )));
        }
        Distribution::mixture(
            vec![1.0 - epsilon, epsilon],
            vec![
                Distribution::normal(mu, sigma)?,
                Distribution::normal(mu, tau * sigma)?,
            ],
        )
    }

    pub fn family(&self) -> &'static str {
        match self {
            Distribution::Normal { .. } => "normal",
            Distribution::Cauchy { .. } => "cauchy",
            Distribution::Pareto { .. } => "pareto",
            Distribution::Gamma { .. } => "gamma",
            Distribution::Exponential { .. } => "exponential",
            Distribution::Beta { .. } => "beta",
            Distribution::Uniform { .. } => "uniform",
            Distribution::Mixture { .. } => "mixture",
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Distribution::Normal { mu, sigma } => 0.5 * erf::erfc(-(x - mu) / (sigma * SQRT_2)),
            Distribution::Cauchy { x0, gamma } => 0.5 + ((x - x0) / gamma).atan() / PI,
            Distribution::Pareto { m, alpha } => {
                if x <= m {
                    0.0
                } else {
                    -(alpha * (m / x).ln()).exp_m1()
                }
            }
            Distribution::Gamma { shape, scale } => {
                if x <= 0.0 {
                    0.0
                } else if x.is_infinite() {
                    1.0
                } else {
                    gamma_lr(shape, x / scale)
                }
            }
            Distribution::Exponential { mean } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-x / mean).exp_m1()
                }
            }
            Distribution::Beta { a, b } => {
                if x <= 0.0 {
                    0.0
                } else if x >= 1.0 {
                    1.0
                } else {
                    beta_reg(a, b, x)
                }
            }
            Distribution::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            Distribution::Mixture {
                ref weights,
                ref components,
            } => weights
                .iter()
                .zip(components)
                .map(|(w, c)| w * c.cdf(x))
                .sum(),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            Distribution::Normal { mu, sigma } => {
                let z = (x - mu) / sigma;
                (-0.5 * z * z).exp() / (sigma * (2.0 * PI).sqrt())
            }
            Distribution::Cauchy { x0, gamma } => {
                let z = (x - x0) / gamma;
                1.0 / (PI * gamma * (1.0 + z * z))
            }
            Distribution::Pareto { m, alpha } => {
                if x < m {
                    0.0
                } else {
                    alpha / x * (m / x).powf(alpha)
                }
            }
            Distribution::Gamma { shape, scale } => {
                if x < 0.0 || (x == 0.0 && shape > 1.0) {
                    0.0
                } else if x == 0.0 && shape < 1.0 {
                    f64::INFINITY
                } else {
                    let z = x / scale;
                    ((shape - 1.0) * z.ln() - z - statrs::function::gamma::ln_gamma(shape)).exp()
                        / scale
                }
            }
            Distribution::Exponential { mean } => {
                if x < 0.0 {
                    0.0
                } else {
                    (-x / mean).exp() / mean
                }
            }
            Distribution::Beta { a, b } => {
                if !(0.0..=1.0).contains(&x) {
                    0.0
                } else {
                    ((a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p()
                        - statrs::function::beta::ln_beta(a, b))
                    .exp()
                }
            }
            Distribution::Uniform { lo, hi } => {
                if (lo..=hi).contains(&x) {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            Distribution::Mixture {
                ref weights,
                ref components,
            } => weights
                .iter()
                .zip(components)
                .map(|(w, c)| w * c.pdf(x))
                .sum(),
        }
    }

    /// Inverse CDF `F⁻¹(u) = inf{x : F(x) ≥ u}` for `u ∈ [0, 1]`.
    pub fn quantile(&self, u: f64) -> f64 {
        assert!((0.0..=1.0).contains(&u), "quantile level {u} outside [0, 1]");
        match *self {
            Distribution::Normal { mu, sigma } => {
                mu - sigma * SQRT_2 * erf::erfc_inv(2.0 * u)
            }
            Distribution::Cauchy { x0, gamma } => {
                if u == 0.0 {
                    f64::NEG_INFINITY
                } else if u == 1.0 {
                    f64::INFINITY
                } else {
                    x0 + gamma * (PI * (u - 0.5)).tan()
                }
            }
            Distribution::Pareto { m, alpha } => m * (-(-u).ln_1p() / alpha).exp(),
            Distribution::Exponential { mean } => -mean * (-u).ln_1p(),
            Distribution::Uniform { lo, hi } => lo + u * (hi - lo),
            Distribution::Gamma { .. } | Distribution::Beta { .. } | Distribution::Mixture { .. } => {
                self.invert_cdf(u)
            }
        }
    }

    fn support(&self) -> (f64, f64) {
        match *self {
            Distribution::Pareto { m, .. } => (m, f64::INFINITY),
            Distribution::Gamma { .. } | Distribution::Exponential { .. } => (0.0, f64::INFINITY),
            Distribution::Beta { .. } => (0.0, 1.0),
            Distribution::Uniform { lo, hi } => (lo, hi),
            Distribution::Mixture { ref components, .. } => components
                .iter()
                .map(Distribution::support)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (a, b)| {
                    (lo.min(a), hi.max(b))
                }),
            Distribution::Normal { .. } | Distribution::Cauchy { .. } => {
                (f64::NEG_INFINITY, f64::INFINITY)
            }
        }
    }

    /// Bracketed Newton iteration with bisection fallback.
    fn invert_cdf(&self, u: f64) -> f64 {
        let (support_lo, support_hi) = self.support();
        if u == 0.0 {
            return support_lo;
        }
        if u == 1.0 {
            return support_hi;
        }
        let (mut lo, mut hi) = match self {
            Distribution::Mixture { components, .. } => components
                .iter()
                .map(|c| c.quantile(u))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), q| {
                    (lo.min(q), hi.max(q))
                }),
            _ => {
                let mut hi = if support_hi.is_finite() { support_hi } else { 1.0 };
                while self.cdf(hi) < u && hi.is_finite() {
                    hi *= 2.0;
                }
                (support_lo, hi)
            }
        };
        if lo == hi {
            return lo;
        }
        let target = tolerances::QUANTILE_PROBABILITY_RELATIVE * u.min(1.0 - u);
        let mut x = 0.5 * (lo + hi);
        for _ in 0..200 {
            let fx = self.cdf(x) - u;
            if fx.abs() <= target {
                return x;
            }
            if fx < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            if hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(lo.abs()) || hi - lo < f64::MIN_POSITIVE {
                break;
            }
            let density = self.pdf(x);
            let newton = x - fx / density;
            x = if density > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        x
    }

    pub fn median(&self) -> f64 {
        match *self {
            Distribution::Normal { mu, .. } => mu,
            Distribution::Cauchy { x0, .. } => x0,
            Distribution::Pareto { m, alpha } => m * 2f64.powf(1.0 / alpha),
            Distribution::Exponential { mean } => mean * LN_2,
            Distribution::Uniform { lo, hi } => 0.5 * (lo + hi),
            _ => self.quantile(0.5),
        }
    }

    /// The mean, or `None` when the defining integral diverges.
    pub fn mean(&self) -> Option<f64> {
        match *self {
            Distribution::Normal { mu, .. } => Some(mu),
            Distribution::Cauchy { .. } => None,
            Distribution::Pareto { m, alpha } => (alpha > 1.0).then(|| alpha * m / (alpha - 1.0)),
            Distribution::Gamma { shape, scale } => Some(shape * scale),
            Distribution::Exponential { mean } => Some(mean),
            Distribution::Beta { a, b } => Some(a / (a + b)),
            Distribution::Uniform { lo, hi } => Some(0.5 * (lo + hi)),
            Distribution::Mixture {
                ref weights,
                ref components,
            } => weights
                .iter()
                .zip(components)
                .map(|(w, c)| c.mean().map(|m| w * m))
                .sum(),
        }
    }

    /// The variance, or `None` when the second moment diverges.
    pub fn variance(&self) -> Option<f64> {
        match *self {
            Distribution::Normal { sigma, .. } => Some(sigma * sigma),
            Distribution::Cauchy { .. } => None,
            Distribution::Pareto { m, alpha } => (alpha > 2.0)
                .then(|| m * m * alpha / ((alpha - 1.0).powi(2) * (alpha - 2.0))),
            Distribution::Gamma { shape, scale } => Some(shape * scale * scale),
            Distribution::Exponential { mean } => Some(mean * mean),
            Distribution::Beta { a, b } => Some(a * b / ((a + b).powi(2) * (a + b + 1.0))),
            Distribution::Uniform { lo, hi } => Some((hi - lo).powi(2) / 12.0),
            Distribution::Mixture {
                ref weights,
                ref components,
            } => {
                let mean = self.mean()?;
                let second: Option<f64> = weights
                    .iter()
                    .zip(components)
                    .map(|(w, c)| Some(w * (c.variance()? + c.mean()?.powi(2))))
                    .sum();
                Some(second? - mean * mean)
            }
        }
    }

    /// A reusable sampler; cheaper than [`Distribution::sample`] for many draws.
    pub fn sampler(&self) -> Sampler {
        let kind = match *self {
            Distribution::Normal { mu, sigma } => {
                SamplerKind::Normal(rand_distr::Normal::new(mu, sigma).expect("validated"))
            }
            Distribution::Cauchy { x0, gamma } => {
                SamplerKind::Cauchy(rand_distr::Cauchy::new(x0, gamma).expect("validated"))
            }
            Distribution::Pareto { m, alpha } => {
                SamplerKind::Pareto(rand_distr::Pareto::new(m, alpha).expect("validated"))
            }
            Distribution::Gamma { shape, scale } => {
                SamplerKind::Gamma(rand_distr::Gamma::new(shape, scale).expect("validated"))
            }
            Distribution::Exponential { mean } => {
                SamplerKind::Exponential(rand_distr::Exp::new(1.0 / mean).expect("validated"))
            }
            Distribution::Beta { a, b } => {
                SamplerKind::Beta(rand_distr::Beta::new(a, b).expect("validated"))
            }
            Distribution::Uniform { lo, hi } => {
                SamplerKind::Uniform(rand_distr::Uniform::new(lo, hi).expect("validated"))
            }
            Distribution::Mixture {
                ref weights,
                ref components,
            } => SamplerKind::Mixture(
                rand_distr::weighted::WeightedIndex::new(weights).expect("validated"),
                components.iter().map(Distribution::sampler).collect(),
            ),
        };
        Sampler { kind }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sampler().sample(rng)
    }
}

/// A prepared random variate generator for one [`Distribution`].
#[derive(Debug, Clone)]
pub struct Sampler {
    kind: SamplerKind,
}

#[derive(Debug, Clone)]
enum SamplerKind {
    Normal(rand_distr::Normal<f64>),
    Cauchy(rand_distr::Cauchy<f64>),
    Pareto(rand_distr::Pareto<f64>),
    Gamma(rand_distr::Gamma<f64>),
    Exponential(rand_distr::Exp<f64>),
    Beta(rand_distr::Beta<f64>),
    Uniform(rand_distr::Uniform<f64>),
    Mixture(rand_distr::weighted::WeightedIndex<f64>, Vec<Sampler>),
}

impl Sampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.kind {
            SamplerKind::Normal(d) => d.sample(rng),
            SamplerKind::Cauchy(d) => d.sample(rng),
            SamplerKind::Pareto(d) => d.sample(rng),
            SamplerKind::Gamma(d) => d.sample(rng),
            SamplerKind::Exponential(d) => d.sample(rng),
            SamplerKind::Beta(d) => d.sample(rng),
            SamplerKind::Uniform(d) => d.sample(rng),
            SamplerKind::Mixture(index, components) => components[index.sample(rng)].sample(rng),
        }
    }
}
