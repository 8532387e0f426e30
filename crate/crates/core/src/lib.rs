//! Empirical Bayes inference for sparse normal means.
//!
//! Observations `X_i ~ N(θ_i, 1)` with most `θ_i` exactly zero. The posterior
//! combines a fractional likelihood with a data-centred spike-and-slab prior
//!
//! ```text
//! θ_i | ω ~ ω δ_0 + (1 − ω) N(X_i, σ²),   ω ~ Beta(αn, 1)
//! ```
//!
//! and is sampled exactly by a two-block Gibbs sampler ([`sampler`]). The
//! crate also provides the estimators built on the chain ([`estimators`]),
//! a seeded replication harness ([`simulation`]), chain diagnostics
//! ([`diagnostics`]) and the command-line front end ([`cli`]).
//!
//! All numerical code is generic over [`Real`] (`f32` or `f64`); the `*F64`
//! and `*F32` aliases below name the concrete instantiations.
//!
//! ```
//! use ebnm::{run_chain, ModelConfigF64, ObservationsF64, SamplerConfig};
//!
//! let mut x = vec![0.0; 50];
//! x[0] = 8.0;
//! let data = ObservationsF64::new(x).unwrap();
//! let model = ModelConfigF64::with_defaults(50).unwrap();
//! let sampler = SamplerConfig { iterations: 500, burn_in: 100, ..Default::default() };
//! let chain = run_chain(&data, &model, &sampler).unwrap();
//! assert!(chain.running_nonzero_freq[0] > 0.9);
//! ```

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod model;
pub mod rng;
pub mod sampler;
pub mod scalar;
pub mod simulation;

pub use error::{Error, Result};
pub use estimators::{AlphaChoice, AlphaSource, EstimateReport, EstimatorLabel, ModelSpec};
pub use model::{FeasibilityQuery, ModelConfig, Observations};
pub use sampler::{run_chain, GibbsState, PosteriorChain, SamplerConfig};
pub use scalar::Real;
pub use simulation::{StudyResult, StudySpec, TableResult, TableSpec, TruthSpec};

pub type ModelConfigF64 = ModelConfig<f64>;
pub type ModelConfigF32 = ModelConfig<f32>;
pub type ObservationsF64 = Observations<f64>;
pub type ObservationsF32 = Observations<f32>;
pub type GibbsStateF64 = GibbsState<f64>;
pub type GibbsStateF32 = GibbsState<f32>;
pub type PosteriorChainF64 = PosteriorChain<f64>;
pub type PosteriorChainF32 = PosteriorChain<f32>;
pub type EstimateReportF64 = EstimateReport<f64>;
pub type EstimateReportF32 = EstimateReport<f32>;
pub type TruthSpecF64 = TruthSpec<f64>;
pub type TruthSpecF32 = TruthSpec<f32>;
pub type StudySpecF64 = StudySpec<f64>;
pub type StudySpecF32 = StudySpec<f32>;
pub type StudyResultF64 = StudyResult<f64>;
pub type StudyResultF32 = StudyResult<f32>;
pub type TableSpecF64 = TableSpec<f64>;
pub type TableResultF64 = TableResult<f64>;
pub type FeasibilityQueryF64 = FeasibilityQuery<f64>;
pub type DiagnosticsReportF64 = diagnostics::DiagnosticsReport<f64>;
