//! Empirical checks on chains: ω concentration, the effective-dimension tail,
//! the `E(ω | X)` identity and the loss-to-rate ratio.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::thresholded_null_count;
use crate::model::{ModelConfig, Observations};
use crate::sampler::PosteriorChain;
use crate::scalar::Real;
use crate::simulation::squared_error;

/// Smallest chain accepted by the histogram-based diagnostics.
pub const MIN_DIAGNOSTIC_DRAWS: usize = 100;

/// Default constant `K` in `δ_n = K ε_n / n`.
pub const DEFAULT_K_CONST: f64 = 2.0;

/// Default number of histogram bins for the ω posterior.
pub const DEFAULT_BINS: usize = 40;

/// Minimax rate unit `s · log(n / s)`.
pub fn epsilon_n<F: Real>(n: usize, s: usize) -> Result<F> {
    if s == 0 || s >= n {
        return Err(Error::Usage(format!(
            "epsilon_n needs 1 <= s < n (got s = {s}, n = {n})"
        )));
    }
    let s_f = F::from_count(s);
    Ok(s_f * (F::from_count(n) / s_f).ln())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistBin<F> {
    pub left: F,
    pub right: F,
    pub count: usize,
}

/// Equal-width histogram of the ω draws on `[min, max]` and the midpoint of
/// the fullest bin (first one on ties).
///
/// When every draw is identical the histogram is a single zero-width bin.
pub fn omega_concentration<F: Real>(
    chain: &PosteriorChain<F>,
    bins: usize,
) -> Result<(Vec<HistBin<F>>, F)> {
    if bins == 0 {
        return Err(Error::Usage("histogram needs at least one bin".into()));
    }
    let draws = &chain.omega_draws;
    if draws.len() < MIN_DIAGNOSTIC_DRAWS {
        return Err(Error::Usage(format!(
            "omega histogram needs at least {MIN_DIAGNOSTIC_DRAWS} draws (got {})",
            draws.len()
        )));
    }
    let (lo, hi) = draws
        .iter()
        .fold((F::infinity(), F::neg_infinity()), |(lo, hi), &w| {
            (lo.min(w), hi.max(w))
        });
    if lo == hi {
        let bin = HistBin {
            left: lo,
            right: hi,
            count: draws.len(),
        };
        return Ok((vec![bin], lo));
    }

    let width = (hi - lo) / F::from_count(bins);
    let mut counts = vec![0usize; bins];
    for &w in draws {
        let idx = ((w - lo) / width).floor().to_usize().unwrap_or(0).min(bins - 1);
        counts[idx] += 1;
    }
    let hist: Vec<HistBin<F>> = counts
        .iter()
        .enumerate()
        .map(|(i, &count)| HistBin {
            left: lo + width * F::from_count(i),
            right: if i + 1 == bins {
                hi
            } else {
                lo + width * F::from_count(i + 1)
            },
            count,
        })
        .collect();
    let mode_bin = hist
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| a.count.cmp(&b.count).then(ib.cmp(ia)))
        .map(|(_, b)| *b)
        .expect("at least one bin");
    let mode = (mode_bin.left + mode_bin.right) / F::lit(2.0);
    Ok((hist, mode))
}

/// `δ_n = K ε_n / n`.
pub fn delta_n<F: Real>(n: usize, s: usize, k_const: F) -> Result<F> {
    Ok(k_const * epsilon_n::<F>(n, s)? / F::from_count(n))
}

/// Fraction of retained draws with `1 − ω > δ_n`.
pub fn dimension_tail<F: Real>(chain: &PosteriorChain<F>, s: usize, k_const: F) -> Result<F> {
    if chain.retained() == 0 {
        return Err(Error::Usage("chain has no retained draws".into()));
    }
    let delta = delta_n(chain.n, s, k_const)?;
    let above = chain
        .omega_draws
        .iter()
        .filter(|&&w| F::one() - w > delta)
        .count();
    Ok(F::from_count(above) / F::from_count(chain.retained()))
}

/// `E(ω | D_θ) = α/(α+1+1/n) + D_θ/(n(α+1+1/n))`, the conditional mean of the beta update.
fn omega_given_count<F: Real>(model: &ModelConfig<F>, d_theta: usize) -> F {
    let n = F::from_count(model.n);
    let denom = model.alpha + F::one() + F::one() / n;
    model.alpha / denom + F::from_count(d_theta) / (n * denom)
}

fn identity_terms<'a, F: Real>(
    chain: &'a PosteriorChain<F>,
    model: &'a ModelConfig<F>,
) -> impl Iterator<Item = F> + 'a {
    chain
        .omega_draws
        .iter()
        .zip(&chain.d_theta_draws)
        .map(move |(&w, &d)| w - omega_given_count(model, d))
}

/// `mean(ω draws) − [α/(α+1+1/n) + mean(D_θ draws)/(n(α+1+1/n))]`.
pub fn ew_identity_residual<F: Real>(chain: &PosteriorChain<F>, model: &ModelConfig<F>) -> Result<F> {
    if chain.retained() == 0 {
        return Err(Error::Usage("chain has no retained draws".into()));
    }
    let sum = identity_terms(chain, model).fold(F::zero(), |a, z| a + z);
    Ok(sum / F::from_count(chain.retained()))
}

/// Batch-means Monte Carlo standard error of [`ew_identity_residual`].
///
/// Uses `floor(sqrt(m))` batches of equal size for `m` retained draws; needs
/// at least four draws.
pub fn ew_identity_stderr<F: Real>(chain: &PosteriorChain<F>, model: &ModelConfig<F>) -> Result<F> {
    let terms: Vec<F> = identity_terms(chain, model).collect();
    batch_means_stderr(&terms)
}

pub(crate) fn batch_means_stderr<F: Real>(series: &[F]) -> Result<F> {
    let m = series.len();
    if m < 4 {
        return Err(Error::Usage(format!(
            "batch-means standard error needs at least 4 draws (got {m})"
        )));
    }
    let batches = (m as f64).sqrt().floor() as usize;
    let size = m / batches;
    let means: Vec<F> = series
        .chunks_exact(size)
        .take(batches)
        .map(|c| c.iter().fold(F::zero(), |a, &v| a + v) / F::from_count(size))
        .collect();
    let b = F::from_count(batches);
    let grand = means.iter().fold(F::zero(), |a, &v| a + v) / b;
    let var = means
        .iter()
        .fold(F::zero(), |a, &v| a + (v - grand) * (v - grand))
        / (b - F::one());
    Ok((var / b).sqrt())
}

/// `‖θ̂ − θ*‖² / ε_n(n, s)`.
pub fn concentration_ratio<F: Real>(theta_hat: &[F], theta_star: &[F], s: usize) -> Result<F> {
    if s == 0 {
        return Err(Error::Usage(
            "concentration ratio undefined for a zero truth (s = 0)".into(),
        ));
    }
    let loss = squared_error(theta_hat, theta_star)?;
    Ok(loss / epsilon_n::<F>(theta_star.len(), s)?)
}

/// Where the sparsity level used by the diagnostics came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SparsitySource {
    /// Nonzero count of a known truth vector.
    Truth,
    /// Supplied by the caller.
    Supplied,
    /// `n − D̂` from universal hard thresholding of the data.
    Threshold,
    /// `n − mean(D_θ)` from the chain, when no data is at hand.
    Posterior,
}

/// Sparsity level from universal thresholding, clamped into `[1, n − 1]`.
pub fn sparsity_from_threshold<F: Real>(data: &Observations<F>) -> Result<usize> {
    let n = data.len();
    let d_hat = thresholded_null_count(data)?;
    Ok((n - d_hat).clamp(1, n - 1))
}

/// Sparsity level `n − round(mean D_θ)`, clamped into `[1, n − 1]`.
pub fn sparsity_from_chain<F: Real>(chain: &PosteriorChain<F>) -> Result<usize> {
    let n = chain.n;
    if n < 2 || chain.retained() == 0 {
        return Err(Error::Usage(
            "posterior sparsity needs n >= 2 and at least one draw".into(),
        ));
    }
    let mean_d = chain.d_theta_draws.iter().sum::<usize>() as f64 / chain.retained() as f64;
    let s = n as f64 - mean_d;
    Ok((s.round() as usize).clamp(1, n - 1))
}

/// Full diagnostics bundle for one chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport<F> {
    pub omega_hist: Vec<HistBin<F>>,
    pub omega_mode_loc: F,
    pub ew_identity_residual: F,
    pub ew_identity_stderr: F,
    pub dim_tail_prob: F,
    /// Present only when the truth is known.
    pub concentration_ratio: Option<F>,
    pub epsilon_n: F,
    pub delta_n: F,
    pub k_const: F,
    pub s: usize,
    pub s_source: SparsitySource,
}

/// Knobs for [`diagnose`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[serde(bound = "")]
pub struct DiagnosticsConfig<F: Real> {
    pub bins: usize,
    pub k_const: F,
}

impl<F: Real> Default for DiagnosticsConfig<F> {
    fn default() -> Self {
        DiagnosticsConfig {
            bins: DEFAULT_BINS,
            k_const: F::lit(DEFAULT_K_CONST),
        }
    }
}

impl<F: Real> DiagnosticsConfig<F> {
    pub fn validate(&self) -> Result<()> {
        if self.bins == 0 {
            return Err(Error::Config("bins must be at least 1".into()));
        }
        if !(self.k_const > F::zero()) || !self.k_const.is_finite() {
            return Err(Error::Config(format!(
                "k_const = {} must be positive and finite",
                self.k_const
            )));
        }
        Ok(())
    }
}

/// Run every diagnostic on `chain` at sparsity `s`.
///
/// `truth`, when given, must be the full θ* together with the estimate to score.
pub fn diagnose<F: Real>(
    chain: &PosteriorChain<F>,
    s: usize,
    s_source: SparsitySource,
    config: &DiagnosticsConfig<F>,
    truth: Option<(&[F], &[F])>,
) -> Result<DiagnosticsReport<F>> {
    config.validate()?;
    let (omega_hist, omega_mode_loc) = omega_concentration(chain, config.bins)?;
    let concentration_ratio = match truth {
        Some((theta_hat, theta_star)) => {
            let s_true = theta_star.iter().filter(|&&t| t != F::zero()).count();
            Some(concentration_ratio(theta_hat, theta_star, s_true)?)
        }
        None => None,
    };
    Ok(DiagnosticsReport {
        omega_hist,
        omega_mode_loc,
        ew_identity_residual: ew_identity_residual(chain, &chain.model)?,
        ew_identity_stderr: ew_identity_stderr(chain, &chain.model)?,
        dim_tail_prob: dimension_tail(chain, s, config.k_const)?,
        concentration_ratio,
        epsilon_n: epsilon_n(chain.n, s)?,
        delta_n: delta_n(chain.n, s, config.k_const)?,
        k_const: config.k_const,
        s,
        s_source,
    })
}
