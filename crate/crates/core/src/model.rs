//! Model configuration, log-space mixture weights and the feasible-region test.
//!
//! Given the spike weight `ω`, each coordinate's full conditional is a two
//! component mixture: a point mass at zero with weight `ω·exp(-κx²/2)` and a
//! normal slab `N(x, σ²/(1+κσ²))` with weight `(1-ω)/sqrt(1+κσ²)`. The weights
//! are kept in log space because `exp(-κx²/2)` underflows `f64` once `|x|`
//! reaches the high thirties.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Hyperparameters of the empirical Bayes model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig<F> {
    /// Problem dimension.
    pub n: usize,
    /// Fractional-likelihood power, in `(0, 1)`.
    pub kappa: F,
    /// Slab variance.
    pub sigma2: F,
    /// Shape of the `Beta(αn, 1)` prior on `ω`.
    pub alpha: F,
}

impl<F: Real> ModelConfig<F> {
    pub fn new(n: usize, kappa: F, sigma2: F, alpha: F) -> Result<Self> {
        let cfg = ModelConfig {
            n,
            kappa,
            sigma2,
            alpha,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The defaults used throughout the simulation tables: `κ = 0.99`,
    /// `σ² = 1/(1-κ) = 100`, `α = 50/n`.
    pub fn with_defaults(n: usize) -> Result<Self> {
        Self::new(n, F::lit(0.99), F::lit(100.0), default_alpha(n)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        if !(self.kappa > F::zero() && self.kappa < F::one()) {
            return Err(Error::Config(format!(
                "kappa = {} must lie in the open interval (0, 1)",
                self.kappa
            )));
        }
        if !(self.sigma2 > F::zero()) || !self.sigma2.is_finite() {
            return Err(Error::Config(format!(
                "sigma2 = {} must be positive and finite",
                self.sigma2
            )));
        }
        if !(self.alpha > F::zero()) || !self.alpha.is_finite() {
            return Err(Error::Config(format!(
                "alpha = {} must be positive and finite",
                self.alpha
            )));
        }
        let v = self.slab_variance();
        if !(v > F::zero()) || !v.is_finite() {
            return Err(Error::Config(format!(
                "slab conditional variance {v} is not finite and positive"
            )));
        }
        Ok(())
    }

    /// Conditional slab variance `σ²/(1+κσ²)`.
    pub fn slab_variance(&self) -> F {
        self.sigma2 / (F::one() + self.kappa * self.sigma2)
    }

    /// `½·log(1+κσ²)`, the slab normalizer shared by every coordinate.
    pub fn half_log_slab_norm(&self) -> F {
        F::lit(0.5) * (self.kappa * self.sigma2).ln_1p()
    }
}

/// Observed data `X_1, …, X_n`, unit noise variance assumed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Observations<F> {
    x: Vec<F>,
}

impl<F: Real> Observations<F> {
    pub fn new(x: Vec<F>) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::Input("no observations".into()));
        }
        if let Some((i, v)) = x.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Input(format!("observation {i} is not finite ({v})")));
        }
        Ok(Observations { x })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn as_slice(&self) -> &[F] {
        &self.x
    }

    pub fn into_inner(self) -> Vec<F> {
        self.x
    }

    /// Fails unless the data length equals `model.n`.
    pub fn check_dimension(&self, model: &ModelConfig<F>) -> Result<()> {
        if self.x.len() != model.n {
            return Err(Error::Config(format!(
                "data has {} observations but the model expects n = {}",
                self.x.len(),
                model.n
            )));
        }
        Ok(())
    }
}

/// Log weight of the point mass at zero: `log ω − κx²/2`.
#[inline]
pub fn spike_logweight<F: Real>(x: F, omega: F, kappa: F) -> F {
    debug_assert!(
        omega > F::zero() && omega < F::one(),
        "omega = {omega} outside (0, 1)"
    );
    omega.ln() - F::lit(0.5) * kappa * x * x
}

/// Log weight of the normal slab: `log(1−ω) − ½·log(1+κσ²)`.
#[inline]
pub fn slab_logweight<F: Real>(omega: F, kappa: F, sigma2: F) -> F {
    debug_assert!(
        omega > F::zero() && omega < F::one(),
        "omega = {omega} outside (0, 1)"
    );
    debug_assert!(sigma2 > F::zero(), "sigma2 = {sigma2} must be positive");
    (-omega).ln_1p() - F::lit(0.5) * (kappa * sigma2).ln_1p()
}

/// Normalized probability that a coordinate sits at the point mass.
///
/// Uses the max-shifted form `exp(a-m) / (exp(a-m) + exp(b-m))`, so at least
/// one term in the denominator is exactly one.
pub fn spike_probability<F: Real>(x: F, omega: F, kappa: F, sigma2: F) -> F {
    let a = spike_logweight(x, omega, kappa);
    let b = slab_logweight(omega, kappa, sigma2);
    let m = a.max(b);
    let ea = (a - m).exp();
    let eb = (b - m).exp();
    ea / (ea + eb)
}

/// Parameters for the feasible-region test, including the Hölder exponent `β`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityQuery<F> {
    pub kappa: F,
    pub sigma2: F,
    pub beta: F,
}

impl<F: Real> FeasibilityQuery<F> {
    pub fn new(kappa: F, sigma2: F, beta: F) -> Result<Self> {
        if !(kappa > F::zero() && kappa < F::one()) {
            return Err(Error::Config(format!(
                "kappa = {kappa} must lie in the open interval (0, 1)"
            )));
        }
        if !(sigma2 > F::zero()) || !sigma2.is_finite() {
            return Err(Error::Config(format!(
                "sigma2 = {sigma2} must be positive and finite"
            )));
        }
        if !(beta > F::one()) || !beta.is_finite() {
            return Err(Error::Config(format!(
                "beta = {beta} must be finite and greater than 1"
            )));
        }
        Ok(FeasibilityQuery {
            kappa,
            sigma2,
            beta,
        })
    }

    /// Left-hand side `1/(σ²(1+β/σ²)^{1/β}) − 1/(σ²+β)`.
    pub fn lhs(&self) -> F {
        let FeasibilityQuery {
            sigma2: s, beta: b, ..
        } = *self;
        F::one() / (s * (F::one() + b / s).powf(F::one() / b)) - F::one() / (s + b)
    }

    /// Right-hand side `κ[(1−κ)β − 1]/(β − 1)`.
    pub fn rhs(&self) -> F {
        let FeasibilityQuery {
            kappa: k, beta: b, ..
        } = *self;
        k * ((F::one() - k) * b - F::one()) / (b - F::one())
    }
}

/// Signed margin `rhs − lhs`; strictly positive inside the feasible region.
pub fn feasible_margin<F: Real>(q: &FeasibilityQuery<F>) -> F {
    debug_assert!(q.beta > F::one(), "beta = {} must exceed 1", q.beta);
    q.rhs() - q.lhs()
}

/// Three-way classification of a feasibility margin.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feasibility {
    Feasible,
    Boundary,
    Infeasible,
}

impl Feasibility {
    /// Margins with `|margin| < tol` are reported as boundary.
    pub fn classify<F: Real>(margin: F, tol: F) -> Self {
        if margin.abs() < tol {
            Feasibility::Boundary
        } else if margin > F::zero() {
            Feasibility::Feasible
        } else {
            Feasibility::Infeasible
        }
    }
}

/// Data-free default `α = 50/n`; gives 0.25, 0.10, 0.05 at n = 200, 500, 1000.
pub fn default_alpha<F: Real>(n: usize) -> Result<F> {
    if n == 0 {
        return Err(Error::Usage("default_alpha requires n >= 1".into()));
    }
    Ok(F::lit(50.0) / F::from_count(n))
}
