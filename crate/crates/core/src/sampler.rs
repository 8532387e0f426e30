//! Two-block Gibbs sampler over `(θ, ω)`.
//!
//! Each sweep first redraws every `θ_i` from its spike-and-slab conditional
//! given `ω`, then redraws `ω ~ Beta(αn + D_θ, 1 + n − D_θ)` where `D_θ` is
//! the number of coordinates sitting exactly at zero.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, Observations};
use crate::rng;
use crate::scalar::Real;

/// Chain length, burn-in, thinning and seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Store the full `retained × n` matrix of θ draws. Summaries are always kept.
    pub keep_theta_draws: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            iterations: 5000,
            burn_in: 1000,
            thin: 1,
            seed: 0x5EED,
            keep_theta_draws: true,
        }
    }
}

impl SamplerConfig {
    pub fn with_seed(seed: u64) -> Self {
        SamplerConfig {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be positive".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::Config(format!(
                "burn_in = {} must be smaller than iterations = {}",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if self.retained() == 0 {
            return Err(Error::Config(format!(
                "no draws retained: (iterations - burn_in) / thin = ({} - {}) / {} = 0",
                self.iterations, self.burn_in, self.thin
            )));
        }
        Ok(())
    }

    /// Number of post-burn-in draws kept.
    pub fn retained(&self) -> usize {
        self.iterations.saturating_sub(self.burn_in) / self.thin.max(1)
    }
}

/// One state of the Markov chain.
///
/// Null coordinates are stored as the literal value zero; `d_theta` always
/// equals the number of exact zeros in `theta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GibbsState<F> {
    pub theta: Vec<F>,
    pub omega: F,
    pub d_theta: usize,
}

impl<F: Real> GibbsState<F> {
    /// Starting point: θ at the universal hard-threshold estimate (all of `x`
    /// when `n < 2`), and `ω = max{(D+1)/(n+2), 1 − 1/(n+1)}`.
    pub fn initial(data: &Observations<F>) -> Self {
        let x = data.as_slice();
        let n = x.len();
        let theta: Vec<F> = if n >= 2 {
            let t = (F::lit(2.0) * F::from_count(n).ln()).sqrt();
            x.iter()
                .map(|&v| if v.abs() > t { v } else { F::zero() })
                .collect()
        } else {
            x.to_vec()
        };
        let d_theta = count_zeros(&theta);
        let nf = F::from_count(n);
        let from_count = F::from_count(d_theta + 1) / (nf + F::lit(2.0));
        let from_prior = F::one() - F::one() / (nf + F::one());
        let omega = clamp_open_unit(from_count.max(from_prior));
        GibbsState {
            theta,
            omega,
            d_theta,
        }
    }

    pub fn n(&self) -> usize {
        self.theta.len()
    }
}

#[inline]
fn count_zeros<F: Real>(theta: &[F]) -> usize {
    theta.iter().filter(|&&t| t == F::zero()).count()
}

/// Clamp into the open unit interval.
#[inline]
fn clamp_open_unit<F: Real>(v: F) -> F {
    let lo = F::min_positive_value();
    let hi = F::one() - F::epsilon() / F::lit(2.0);
    v.max(lo).min(hi)
}

/// Redraw every θ_i from its conditional given ω.
///
/// Coordinate `i` is set to exactly zero with probability
/// `spike_probability(x_i, ω, κ, σ²)`, otherwise drawn from
/// `N(x_i, σ²/(1+κσ²))`. The spike probability is evaluated as the logistic
/// function of the log-weight difference, which is the same quantity as the
/// max-shifted ratio and cannot produce 0/0.
pub fn update_theta<F: Real, R: Rng + ?Sized>(
    state: &mut GibbsState<F>,
    data: &Observations<F>,
    model: &ModelConfig<F>,
    rng: &mut R,
) {
    let x = data.as_slice();
    debug_assert_eq!(x.len(), state.theta.len());
    let omega = state.omega;
    debug_assert!(omega > F::zero() && omega < F::one());

    // log(spike weight / slab weight) = log_odds − κx²/2
    let log_odds = omega.ln() - (-omega).ln_1p() + model.half_log_slab_norm();
    let half_kappa = F::lit(0.5) * model.kappa;
    let slab_sd = model.slab_variance().sqrt();

    let mut zeros = 0usize;
    for (t, &xi) in state.theta.iter_mut().zip(x) {
        let z = log_odds - half_kappa * xi * xi;
        let p_spike = F::one() / (F::one() + (-z).exp());
        if F::sample_unit(rng) < p_spike {
            *t = F::zero();
        } else {
            *t = xi + slab_sd * F::sample_standard_normal(rng);
        }
        if *t == F::zero() {
            zeros += 1;
        }
    }
    state.d_theta = zeros;
}

/// Redraw ω from `Beta(αn + D_θ, 1 + n − D_θ)`.
pub fn update_omega<F: Real, R: Rng + ?Sized>(
    state: &mut GibbsState<F>,
    model: &ModelConfig<F>,
    rng: &mut R,
) {
    let n = state.n();
    debug_assert!(state.d_theta <= n);
    let a = model.alpha * F::from_count(n) + F::from_count(state.d_theta);
    let b = F::one() + F::from_count(n - state.d_theta);
    state.omega = sample_beta(a, b, rng);
}

/// `Beta(a, b)` variate as `G₁/(G₁+G₂)` with independent unit-scale gammas,
/// clamped into the open unit interval.
pub fn sample_beta<F: Real, R: Rng + ?Sized>(a: F, b: F, rng: &mut R) -> F {
    let g1 = F::sample_gamma(a, rng);
    let g2 = F::sample_gamma(b, rng);
    let total = g1 + g2;
    let v = if total > F::zero() {
        g1 / total
    } else {
        // both gammas underflowed (only for tiny shapes): fall back to the mean
        a / (a + b)
    };
    clamp_open_unit(v)
}

/// Retained draws plus running per-coordinate summaries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorChain<F> {
    pub n: usize,
    /// Row-major `retained × n`; empty when `keep_theta_draws` is off.
    pub theta_draws: Vec<F>,
    pub omega_draws: Vec<F>,
    pub d_theta_draws: Vec<usize>,
    pub running_mean_theta: Vec<F>,
    pub running_nonzero_freq: Vec<F>,
    pub model: ModelConfig<F>,
    pub sampler: SamplerConfig,
}

impl<F: Real> PosteriorChain<F> {
    pub fn retained(&self) -> usize {
        self.omega_draws.len()
    }

    pub fn has_theta_draws(&self) -> bool {
        !self.theta_draws.is_empty()
    }

    /// θ draw number `k`, if the matrix was stored.
    pub fn theta_draw(&self, k: usize) -> Option<&[F]> {
        if !self.has_theta_draws() {
            return None;
        }
        self.theta_draws.get(k * self.n..(k + 1) * self.n)
    }

    pub fn theta_rows(&self) -> impl Iterator<Item = &[F]> {
        self.theta_draws.chunks_exact(self.n.max(1))
    }
}

/// Run the sampler for `sampler.iterations` sweeps and collect the retained draws.
///
/// The output is a pure function of `(data, model, sampler)`.
pub fn run_chain<F: Real>(
    data: &Observations<F>,
    model: &ModelConfig<F>,
    sampler: &SamplerConfig,
) -> Result<PosteriorChain<F>> {
    model.validate()?;
    sampler.validate()?;
    data.check_dimension(model)?;

    let n = model.n;
    let retained = sampler.retained();
    let mut rng = rng::stream(sampler.seed);
    let mut state = GibbsState::initial(data);

    let mut theta_draws = if sampler.keep_theta_draws {
        Vec::with_capacity(retained * n)
    } else {
        Vec::new()
    };
    let mut omega_draws = Vec::with_capacity(retained);
    let mut d_theta_draws = Vec::with_capacity(retained);
    let mut theta_sum = vec![F::zero(); n];
    let mut nonzero = vec![0usize; n];

    for sweep in 0..sampler.iterations {
        update_theta(&mut state, data, model, &mut rng);
        update_omega(&mut state, model, &mut rng);
        debug_assert_eq!(state.d_theta, count_zeros(&state.theta));

        if sweep < sampler.burn_in || !(sweep - sampler.burn_in + 1).is_multiple_of(sampler.thin) {
            continue;
        }
        for ((s, c), &t) in theta_sum.iter_mut().zip(nonzero.iter_mut()).zip(&state.theta) {
            *s = *s + t;
            if t != F::zero() {
                *c += 1;
            }
        }
        if sampler.keep_theta_draws {
            theta_draws.extend_from_slice(&state.theta);
        }
        omega_draws.push(state.omega);
        d_theta_draws.push(state.d_theta);
    }

    let count = F::from_count(omega_draws.len());
    let running_mean_theta = theta_sum.into_iter().map(|s| s / count).collect();
    let running_nonzero_freq = nonzero
        .into_iter()
        .map(|c| F::from_count(c) / count)
        .collect();

    Ok(PosteriorChain {
        n,
        theta_draws,
        omega_draws,
        d_theta_draws,
        running_mean_theta,
        running_nonzero_freq,
        model: *model,
        sampler: *sampler,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::spike_probability;

    fn obs(x: &[f64]) -> Observations<f64> {
        Observations::new(x.to_vec()).unwrap()
    }

    #[test]
    fn sampler_config_validation() {
        assert!(SamplerConfig::default().validate().is_ok());
        assert_eq!(SamplerConfig::default().retained(), 4000);
        let bad = SamplerConfig {
            burn_in: 5000,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SamplerConfig {
            thin: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SamplerConfig {
            iterations: 10,
            burn_in: 5,
            thin: 6,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let ok = SamplerConfig {
            iterations: 10,
            burn_in: 3,
            thin: 3,
            ..Default::default()
        };
        assert_eq!(ok.retained(), 2);
    }

    #[test]
    fn initial_state_uses_universal_threshold() {
        let data = obs(&[5.0, 1.0, -4.0, 0.2]);
        let s = GibbsState::initial(&data);
        // sqrt(2 ln 4) ≈ 1.665
        assert_eq!(s.theta, vec![5.0, 0.0, -4.0, 0.0]);
        assert_eq!(s.d_theta, 2);
        // max{3/6, 1 - 1/5}
        assert_eq!(s.omega, 0.8);

        let single = GibbsState::initial(&obs(&[0.3]));
        assert_eq!(single.theta, vec![0.3]);
        assert_eq!(single.d_theta, 0);
        assert!(single.omega > 0.0 && single.omega < 1.0);
    }

    #[test]
    fn update_theta_near_one_omega_zeroes_everything() {
        let model = ModelConfig::new(5, 0.99, 100.0, 1.0).unwrap();
        let data = obs(&[0.0, 1.0, -2.0, 3.0, 0.5]);
        let mut state = GibbsState::initial(&data);
        state.omega = 1.0 - 1e-15;
        let mut rng = rng::stream(3);
        for _ in 0..100 {
            update_theta(&mut state, &data, &model, &mut rng);
            assert_eq!(state.d_theta, 5);
            assert!(state.theta.iter().all(|&t| t == 0.0));
        }
    }

    #[test]
    fn update_theta_keeps_strong_signal() {
        // P(spike) ≈ 2.6e-9 at x = 7
        let model = ModelConfig::new(1, 0.99, 100.0, 1.0).unwrap();
        let data = obs(&[7.0]);
        assert!(spike_probability(7.0, 0.9, 0.99, 100.0) < 3e-9);
        let mut state = GibbsState::initial(&data);
        state.omega = 0.9;
        let mut rng = rng::stream(11);
        for _ in 0..10_000 {
            update_theta(&mut state, &data, &model, &mut rng);
            assert_eq!(state.d_theta, 0);
        }
    }

    #[test]
    fn update_omega_stays_in_open_interval() {
        let model = ModelConfig::new(1, 0.99, 100.0, 1.0).unwrap();
        let mut state = GibbsState {
            theta: vec![1.0],
            omega: 0.5,
            d_theta: 0,
        };
        let mut rng = rng::stream(5);
        let mut sum = 0.0;
        let draws = 200_000;
        for _ in 0..draws {
            update_omega(&mut state, &model, &mut rng);
            assert!(state.omega > 0.0 && state.omega < 1.0);
            sum += state.omega;
        }
        // Beta(1, 2): mean 1/3, sd sqrt(2/36/4) = 0.2357
        let se = (2.0f64 / 36.0 / 4.0).sqrt() / (draws as f64).sqrt();
        assert!((sum / draws as f64 - 1.0 / 3.0).abs() < 4.0 * se);
    }

    #[test]
    fn sample_beta_handles_tiny_shapes() {
        let mut rng = rng::stream(9);
        for _ in 0..1000 {
            let v: f64 = sample_beta(1e-3, 1.0, &mut rng);
            assert!(v > 0.0 && v < 1.0);
            let v: f32 = sample_beta(3e4, 1.0, &mut rng);
            assert!(v > 0.0 && v < 1.0);
        }
    }

    #[test]
    fn run_chain_is_deterministic_and_consistent() {
        let data = obs(&[0.1, -0.4, 6.5, 0.9, -7.2, 0.0, 1.4, -0.3]);
        let model = ModelConfig::new(8, 0.99, 100.0, 50.0 / 8.0).unwrap();
        let sampler = SamplerConfig {
            iterations: 600,
            burn_in: 100,
            thin: 2,
            seed: 77,
            keep_theta_draws: true,
        };
        let a = run_chain(&data, &model, &sampler).unwrap();
        let b = run_chain(&data, &model, &sampler).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.retained(), 250);
        assert_eq!(a.theta_draws.len(), 250 * 8);

        for i in 0..8 {
            let col: Vec<f64> = a.theta_rows().map(|r| r[i]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            assert!((mean - a.running_mean_theta[i]).abs() < 1e-10);
            let nz = col.iter().filter(|&&t| t != 0.0).count() as f64 / col.len() as f64;
            assert_eq!(nz, a.running_nonzero_freq[i]);
        }
        for (row, &d) in a.theta_rows().zip(&a.d_theta_draws) {
            assert_eq!(row.iter().filter(|&&t| t == 0.0).count(), d);
        }

        let other = run_chain(&data, &model, &SamplerConfig { seed: 78, ..sampler }).unwrap();
        assert_ne!(a.omega_draws, other.omega_draws);
    }

    #[test]
    fn summary_only_chain_matches_full_chain() {
        let data = obs(&[0.1, -0.4, 6.5, 0.9]);
        let model = ModelConfig::new(4, 0.99, 100.0, 12.5).unwrap();
        let full = SamplerConfig {
            iterations: 300,
            burn_in: 50,
            thin: 1,
            seed: 1,
            keep_theta_draws: true,
        };
        let a = run_chain(&data, &model, &full).unwrap();
        let b = run_chain(
            &data,
            &model,
            &SamplerConfig {
                keep_theta_draws: false,
                ..full
            },
        )
        .unwrap();
        assert!(!b.has_theta_draws());
        assert_eq!(a.running_mean_theta, b.running_mean_theta);
        assert_eq!(a.omega_draws, b.omega_draws);
    }

    #[test]
    fn run_chain_rejects_dimension_mismatch() {
        let data = obs(&[0.1, 0.2]);
        let model = ModelConfig::new(3, 0.99, 100.0, 1.0).unwrap();
        assert!(matches!(
            run_chain(&data, &model, &SamplerConfig::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn lone_null_coordinate_is_shrunk() {
        let data = obs(&[0.0]);
        let model = ModelConfig::new(1, 0.99, 100.0, 50.0).unwrap();
        let chain = run_chain(&data, &model, &SamplerConfig::with_seed(2024)).unwrap();
        assert!(chain.running_nonzero_freq[0] < 0.05);
    }

    #[test]
    fn f32_chain_runs() {
        let data = Observations::new(vec![0.1f32, 5.0, -0.2, 0.3]).unwrap();
        let model = ModelConfig::<f32>::new(4, 0.99, 100.0, 12.5).unwrap();
        let chain = run_chain(&data, &model, &SamplerConfig::with_seed(1)).unwrap();
        assert_eq!(chain.retained(), 4000);
        assert!(chain.running_nonzero_freq[1] > 0.9);
    }
}
