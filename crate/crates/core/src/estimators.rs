//! Point estimators built from a chain or directly from the data.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{default_alpha, ModelConfig, Observations};
use crate::sampler::PosteriorChain;
use crate::scalar::Real;

/// Which estimator produced a vector of estimates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EstimatorLabel {
    /// Posterior mean of the empirical Bayes posterior.
    EBM,
    /// Hard thresholding at `sqrt(2 log n)`.
    HT,
    /// Hard thresholding at the loss-minimizing threshold (needs the truth).
    HTO,
}

impl EstimatorLabel {
    pub const ALL: [EstimatorLabel; 3] = [EstimatorLabel::EBM, EstimatorLabel::HT, EstimatorLabel::HTO];

    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorLabel::EBM => "EBM",
            EstimatorLabel::HT => "HT",
            EstimatorLabel::HTO => "HTO",
        }
    }
}

impl fmt::Display for EstimatorLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Point estimate plus the posterior summaries that accompany it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport<F> {
    pub theta_hat: Vec<F>,
    /// `P(θ_i ≠ 0 | X)`; for thresholding rules, the 0/1 selection indicator.
    pub inclusion: Vec<F>,
    pub omega_mean: F,
    pub alpha_used: F,
    pub estimator_label: EstimatorLabel,
}

impl<F: Real> EstimateReport<F> {
    pub fn from_chain(chain: &PosteriorChain<F>) -> Result<Self> {
        let theta_hat = posterior_mean(chain)?;
        let inclusion = inclusion_probabilities(chain)?;
        let omega_mean = chain.omega_draws.iter().fold(F::zero(), |acc, &w| acc + w)
            / F::from_count(chain.retained());
        Ok(EstimateReport {
            theta_hat,
            inclusion,
            omega_mean,
            alpha_used: chain.model.alpha,
            estimator_label: EstimatorLabel::EBM,
        })
    }
}

fn ensure_draws<F: Real>(chain: &PosteriorChain<F>) -> Result<()> {
    if chain.retained() == 0 {
        return Err(Error::Usage("chain has no retained draws".into()));
    }
    Ok(())
}

/// Coordinate-wise average of the retained θ draws.
pub fn posterior_mean<F: Real>(chain: &PosteriorChain<F>) -> Result<Vec<F>> {
    ensure_draws(chain)?;
    Ok(chain.running_mean_theta.clone())
}

/// Fraction of retained draws in which each coordinate is nonzero.
pub fn inclusion_probabilities<F: Real>(chain: &PosteriorChain<F>) -> Result<Vec<F>> {
    ensure_draws(chain)?;
    Ok(chain.running_nonzero_freq.clone())
}

/// `sqrt(2 log n)`.
pub fn universal_threshold<F: Real>(n: usize) -> Result<F> {
    if n < 2 {
        return Err(Error::Usage(format!(
            "universal threshold needs n >= 2 (got {n})"
        )));
    }
    Ok((F::lit(2.0) * F::from_count(n).ln()).sqrt())
}

#[inline]
fn keep<F: Real>(x: F, t: F) -> bool {
    x.abs() > t
}

/// Keep `x_i` when `|x_i| > t`, zero it otherwise.
pub fn hard_threshold<F: Real>(x: &[F], t: F) -> Vec<F> {
    debug_assert!(t > F::zero(), "threshold {t} must be positive");
    threshold_with(x, t)
}

fn threshold_with<F: Real>(x: &[F], t: F) -> Vec<F> {
    x.iter()
        .map(|&v| if keep(v, t) { v } else { F::zero() })
        .collect()
}

/// Realized loss `‖hard_threshold(x, t) − truth‖²` without materializing the estimate.
fn threshold_loss<F: Real>(x: &[F], truth: &[F], t: F) -> F {
    x.iter().zip(truth).fold(F::zero(), |acc, (&v, &th)| {
        let est = if keep(v, t) { v } else { F::zero() };
        let d = est - th;
        acc + d * d
    })
}

/// Output of the oracle threshold search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleThreshold<F> {
    pub threshold: F,
    pub estimate: Vec<F>,
    pub loss: F,
}

/// Threshold minimizing the realized loss against `truth`.
///
/// Candidates are `0`, every `|x_i|`, and the universal threshold when
/// `n ≥ 2`. Ties go to the smaller threshold.
pub fn oracle_hard_threshold<F: Real>(
    data: &Observations<F>,
    truth: &[F],
) -> Result<OracleThreshold<F>> {
    let x = data.as_slice();
    if truth.len() != x.len() {
        return Err(Error::Usage(format!(
            "truth has length {} but data has length {}",
            truth.len(),
            x.len()
        )));
    }
    let mut candidates: Vec<F> = std::iter::once(F::zero())
        .chain(x.iter().map(|v| v.abs()))
        .chain(universal_threshold(x.len()).ok())
        .collect();
    candidates.sort_by(|a, b| a.partial_cmp(b).expect("finite thresholds"));
    candidates.dedup();

    let mut best_t = candidates[0];
    let mut best_loss = threshold_loss(x, truth, best_t);
    for &t in &candidates[1..] {
        let loss = threshold_loss(x, truth, t);
        if loss < best_loss {
            best_loss = loss;
            best_t = t;
        }
    }
    Ok(OracleThreshold {
        threshold: best_t,
        estimate: threshold_with(x, best_t),
        loss: best_loss,
    })
}

/// Number of coordinates with `|x_i| ≤ sqrt(2 log n)`.
pub fn thresholded_null_count<F: Real>(data: &Observations<F>) -> Result<usize> {
    let t: F = universal_threshold(data.len())?;
    Ok(data.as_slice().iter().filter(|&&v| !keep(v, t)).count())
}

/// Method-of-moments `α̂ = D̂ / (n (n − D̂))`, with `D̂` the universal-threshold null count.
pub fn mom_alpha<F: Real>(data: &Observations<F>) -> Result<F> {
    let n = data.len();
    let d_hat = thresholded_null_count(data)?;
    mom_alpha_from_count(n, d_hat)
}

pub fn mom_alpha_from_count<F: Real>(n: usize, d_hat: usize) -> Result<F> {
    if d_hat >= n {
        return Err(Error::Degenerate(format!(
            "no coordinate exceeds the universal threshold (D = n = {n})"
        )));
    }
    Ok(F::from_count(d_hat) / (F::from_count(n) * F::from_count(n - d_hat)))
}

/// How `α` is chosen for a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum AlphaChoice<F> {
    /// A fixed value.
    Fixed(F),
    /// `50/n`.
    #[default]
    Default,
    /// Method of moments, falling back to `50/n` when degenerate.
    Auto,
}

/// Where a resolved `α` came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaSource {
    Fixed,
    Default,
    MethodOfMoments,
    DefaultFallback,
}

impl<F: Real> AlphaChoice<F> {
    pub fn resolve(&self, data: &Observations<F>) -> Result<(F, AlphaSource)> {
        match *self {
            AlphaChoice::Fixed(a) => Ok((a, AlphaSource::Fixed)),
            AlphaChoice::Default => Ok((default_alpha(data.len())?, AlphaSource::Default)),
            AlphaChoice::Auto => match mom_alpha(data) {
                Ok(a) if a > F::zero() => Ok((a, AlphaSource::MethodOfMoments)),
                Ok(_) | Err(Error::Degenerate(_)) | Err(Error::Usage(_)) => {
                    Ok((default_alpha(data.len())?, AlphaSource::DefaultFallback))
                }
                Err(e) => Err(e),
            },
        }
    }
}

/// Model hyperparameters with `n` and `α` still to be resolved from the data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[serde(bound = "")]
pub struct ModelSpec<F: Real> {
    pub kappa: F,
    pub sigma2: F,
    pub alpha: AlphaChoice<F>,
}

impl<F: Real> Default for ModelSpec<F> {
    fn default() -> Self {
        ModelSpec {
            kappa: F::lit(0.99),
            sigma2: F::lit(100.0),
            alpha: AlphaChoice::Default,
        }
    }
}

impl<F: Real> ModelSpec<F> {
    /// Checks everything that does not depend on the data.
    pub fn validate(&self) -> Result<()> {
        let alpha = match self.alpha {
            AlphaChoice::Fixed(a) => a,
            _ => F::one(),
        };
        ModelConfig::new(1, self.kappa, self.sigma2, alpha).map(|_| ())
    }

    pub fn resolve(&self, data: &Observations<F>) -> Result<(ModelConfig<F>, AlphaSource)> {
        let (alpha, source) = self.alpha.resolve(data)?;
        let model = ModelConfig::new(data.len(), self.kappa, self.sigma2, alpha)?;
        Ok((model, source))
    }
}

impl<F: Real> Serialize for AlphaChoice<F> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            AlphaChoice::Fixed(a) => a.serialize(s),
            AlphaChoice::Default => s.serialize_str("default"),
            AlphaChoice::Auto => s.serialize_str("auto"),
        }
    }
}

impl<'de, F: Real> Deserialize<'de> for AlphaChoice<F> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw<F> {
            Num(F),
            Word(String),
        }
        match Raw::<F>::deserialize(d)? {
            Raw::Num(a) => Ok(AlphaChoice::Fixed(a)),
            Raw::Word(w) => match w.as_str() {
                "default" => Ok(AlphaChoice::Default),
                "auto" => Ok(AlphaChoice::Auto),
                other => Err(serde::de::Error::custom(format!(
                    "alpha must be a number, \"default\" or \"auto\" (got \"{other}\")"
                ))),
            },
        }
    }
}
