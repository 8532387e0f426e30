//! Replicated simulation studies: ground truth, noisy data, per-estimator losses.
//!
//! Randomness is addressed by index. For a study with root seed `R`:
//!
//! ```text
//! replication r : seed_r     = stream_seed(R, r)
//!   data noise  : stream_seed(seed_r, 0)
//!   Gibbs chain : stream_seed(seed_r, 1)
//! ```
//!
//! A table with root seed `T` gives its `c`-th cell the study root seed
//! `stream_seed(T, c)`. Results are therefore independent of how replications
//! are scheduled across threads.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::epsilon_n;
use crate::error::{Error, Result};
use crate::estimators::{
    hard_threshold, oracle_hard_threshold, posterior_mean, universal_threshold, AlphaSource,
    EstimatorLabel, ModelSpec,
};
use crate::model::Observations;
use crate::rng::{stream, stream_seed};
use crate::sampler::{run_chain, SamplerConfig};
use crate::scalar::Real;

/// Ground truth as ordered `(count, value)` groups padded with zeros to `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthSpec<F> {
    pub n: usize,
    pub groups: Vec<(usize, F)>,
}

impl<F: Real> TruthSpec<F> {
    pub fn new(n: usize, groups: Vec<(usize, F)>) -> Result<Self> {
        let spec = TruthSpec { n, groups };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("truth dimension n must be at least 1".into()));
        }
        let total: usize = self.groups.iter().map(|&(c, _)| c).sum();
        if total > self.n {
            return Err(Error::Config(format!(
                "signal groups hold {total} entries but n = {}",
                self.n
            )));
        }
        if let Some(&(_, v)) = self.groups.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Config(format!("signal value {v} is not finite")));
        }
        Ok(())
    }

    /// Number of nonzero entries.
    pub fn sparsity(&self) -> usize {
        self.groups
            .iter()
            .filter(|&&(_, v)| v != F::zero())
            .map(|&(c, _)| c)
            .sum()
    }
}

/// Concatenate the signal groups and pad with zeros.
pub fn make_theta_star<F: Real>(spec: &TruthSpec<F>) -> Result<Vec<F>> {
    spec.validate()?;
    let mut theta = Vec::with_capacity(spec.n);
    for &(count, value) in &spec.groups {
        theta.extend(std::iter::repeat_n(value, count));
    }
    theta.resize(spec.n, F::zero());
    Ok(theta)
}

/// `X_i = θ*_i + noise_sd · Z_i` with independent standard normal `Z_i`.
pub fn generate_data_with_noise<F: Real, R: Rng + ?Sized>(
    theta_star: &[F],
    noise_sd: F,
    rng: &mut R,
) -> Result<Observations<F>> {
    let x = theta_star
        .iter()
        .map(|&t| t + noise_sd * F::sample_standard_normal(rng))
        .collect();
    Observations::new(x)
}

/// Unit-variance Gaussian data around `theta_star`.
pub fn generate_data<F: Real, R: Rng + ?Sized>(
    theta_star: &[F],
    rng: &mut R,
) -> Result<Observations<F>> {
    generate_data_with_noise(theta_star, F::one(), rng)
}

/// `Σ (θ̂_i − θ*_i)²`.
pub fn squared_error<F: Real>(theta_hat: &[F], theta_star: &[F]) -> Result<F> {
    if theta_hat.len() != theta_star.len() {
        return Err(Error::Usage(format!(
            "length mismatch: estimate has {} entries, truth has {}",
            theta_hat.len(),
            theta_star.len()
        )));
    }
    Ok(theta_hat
        .iter()
        .zip(theta_star)
        .fold(F::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b)))
}

/// A single replicated study on one ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(bound = "")]
pub struct StudySpec<F: Real> {
    pub truth: TruthSpec<F>,
    pub replications: usize,
    pub estimators: Vec<EstimatorLabel>,
    pub model: ModelSpec<F>,
    /// Chain settings; the seed is replaced by the per-replication stream seed.
    pub sampler: SamplerConfig,
    pub root_seed: u64,
}

impl<F: Real> StudySpec<F> {
    pub fn validate(&self) -> Result<()> {
        self.truth.validate()?;
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("at least one estimator is required".into()));
        }
        let mut seen = self.estimators.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.estimators.len() {
            return Err(Error::Config("estimator list has duplicates".into()));
        }
        let needs_threshold = self
            .estimators
            .iter()
            .any(|e| matches!(e, EstimatorLabel::HT));
        if needs_threshold && self.truth.n < 2 {
            return Err(Error::Config("hard thresholding needs n >= 2".into()));
        }
        self.model.validate()?;
        SamplerConfig {
            seed: 0,
            ..self.sampler
        }
        .validate()
    }
}

/// Losses of one replication, aligned with `StudySpec::estimators`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord<F> {
    pub index: usize,
    pub seed: u64,
    pub losses: Vec<F>,
    /// α actually used by EBM in this replication, if EBM ran.
    pub alpha_used: Option<F>,
    pub alpha_source: Option<AlphaSource>,
    /// Threshold picked by HTO, if HTO ran.
    pub oracle_threshold: Option<F>,
}

/// One row of a result table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyRow<F> {
    pub estimator: EstimatorLabel,
    pub mse: F,
    /// `sd / sqrt(replications)`; absent for a single replication.
    pub mc_stderr: Option<F>,
    /// `mse / ε_n`, when `1 ≤ s < n`.
    pub concentration_ratio: Option<F>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct StudyResult<F: Real> {
    pub rows: Vec<StudyRow<F>>,
    pub replications: Vec<ReplicationRecord<F>>,
    pub epsilon_n: Option<F>,
    pub spec: StudySpec<F>,
}

impl<F: Real> StudyResult<F> {
    pub fn row(&self, label: EstimatorLabel) -> Option<&StudyRow<F>> {
        self.rows.iter().find(|r| r.estimator == label)
    }

    /// Per-replication losses of one estimator, in replication order.
    pub fn losses(&self, label: EstimatorLabel) -> Option<Vec<F>> {
        let col = self.spec.estimators.iter().position(|&e| e == label)?;
        Some(self.replications.iter().map(|r| r.losses[col]).collect())
    }
}

/// Run replication `index` of `spec`.
pub fn run_replication<F: Real>(
    spec: &StudySpec<F>,
    theta_star: &[F],
    index: usize,
) -> Result<ReplicationRecord<F>> {
    let seed = stream_seed(spec.root_seed, index as u64);
    let numeric = |message: String| Error::Numeric {
        replication: index,
        seed,
        message,
    };
    let mut data_rng = stream(stream_seed(seed, 0));
    let data = generate_data(theta_star, &mut data_rng)
        .map_err(|e| numeric(format!("data generation failed: {e}")))?;

    let mut losses = Vec::with_capacity(spec.estimators.len());
    let mut alpha_used = None;
    let mut alpha_source = None;
    let mut oracle_threshold = None;
    for &label in &spec.estimators {
        let loss = match label {
            EstimatorLabel::EBM => {
                let (model, source) = spec.model.resolve(&data)?;
                let sampler = SamplerConfig {
                    seed: stream_seed(seed, 1),
                    keep_theta_draws: false,
                    ..spec.sampler
                };
                let chain = run_chain(&data, &model, &sampler)?;
                alpha_used = Some(model.alpha);
                alpha_source = Some(source);
                squared_error(&posterior_mean(&chain)?, theta_star)?
            }
            EstimatorLabel::HT => {
                let t = universal_threshold(data.len())?;
                squared_error(&hard_threshold(data.as_slice(), t), theta_star)?
            }
            EstimatorLabel::HTO => {
                let oracle = oracle_hard_threshold(&data, theta_star)?;
                oracle_threshold = Some(oracle.threshold);
                oracle.loss
            }
        };
        if !loss.is_finite() {
            return Err(numeric(format!("{label} loss is not finite ({loss})")));
        }
        losses.push(loss);
    }
    Ok(ReplicationRecord {
        index,
        seed,
        losses,
        alpha_used,
        alpha_source,
        oracle_threshold,
    })
}

fn mean_and_stderr<F: Real>(values: &[F]) -> (F, Option<F>) {
    let k = F::from_count(values.len());
    let mean = values.iter().fold(F::zero(), |a, &v| a + v) / k;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values
        .iter()
        .fold(F::zero(), |a, &v| a + (v - mean) * (v - mean))
        / (k - F::one());
    (mean, Some((var / k).sqrt()))
}

/// Aggregate replication records into table rows.
pub fn summarize<F: Real>(
    spec: &StudySpec<F>,
    replications: Vec<ReplicationRecord<F>>,
) -> StudyResult<F> {
    let eps = epsilon_n::<F>(spec.truth.n, spec.truth.sparsity()).ok();
    let rows = spec
        .estimators
        .iter()
        .enumerate()
        .map(|(col, &estimator)| {
            let losses: Vec<F> = replications.iter().map(|r| r.losses[col]).collect();
            let (mse, mc_stderr) = mean_and_stderr(&losses);
            StudyRow {
                estimator,
                mse,
                mc_stderr,
                concentration_ratio: eps.map(|e| mse / e),
            }
        })
        .collect();
    StudyResult {
        rows,
        replications,
        epsilon_n: eps,
        spec: spec.clone(),
    }
}

/// Run every replication (in parallel on the current rayon pool) and aggregate.
pub fn run_study<F: Real>(spec: &StudySpec<F>) -> Result<StudyResult<F>> {
    spec.validate()?;
    let theta_star = make_theta_star(&spec.truth)?;
    let records = (0..spec.replications)
        .into_par_iter()
        .map(|r| run_replication(spec, &theta_star, r))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(spec, records))
}

/// One column of a table: a labelled ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec<F> {
    pub label: String,
    pub groups: Vec<(usize, F)>,
}

/// A family of studies sharing `n`, settings and seed, one per table column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(bound = "")]
pub struct TableSpec<F: Real> {
    pub name: String,
    pub n: usize,
    pub replications: usize,
    pub root_seed: u64,
    pub estimators: Vec<EstimatorLabel>,
    #[serde(default)]
    pub model: ModelSpec<F>,
    #[serde(default)]
    pub sampler: SamplerConfig,
    pub cells: Vec<CellSpec<F>>,
    /// Published reference rows, carried through to the output for comparison.
    #[serde(default)]
    pub reference: BTreeMap<String, Vec<F>>,
}

impl<F: Real> TableSpec<F> {
    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() {
            return Err(Error::Config("table has no cells".into()));
        }
        for (name, row) in &self.reference {
            if row.len() != self.cells.len() {
                return Err(Error::Config(format!(
                    "reference row {name} has {} values for {} cells",
                    row.len(),
                    self.cells.len()
                )));
            }
        }
        for study in self.studies() {
            study.validate()?;
        }
        Ok(())
    }

    /// The per-cell studies, each with its own derived root seed.
    pub fn studies(&self) -> Vec<StudySpec<F>> {
        self.cells
            .iter()
            .enumerate()
            .map(|(c, cell)| StudySpec {
                truth: TruthSpec {
                    n: self.n,
                    groups: cell.groups.clone(),
                },
                replications: self.replications,
                estimators: self.estimators.clone(),
                model: self.model,
                sampler: self.sampler,
                root_seed: stream_seed(self.root_seed, c as u64),
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TableCell<F: Real> {
    pub label: String,
    pub result: StudyResult<F>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TableResult<F: Real> {
    pub name: String,
    pub cells: Vec<TableCell<F>>,
    pub reference: BTreeMap<String, Vec<F>>,
}

impl<F: Real> TableResult<F> {
    /// MSE of `label` across the cells, in column order.
    pub fn mse_row(&self, label: EstimatorLabel) -> Option<Vec<F>> {
        self.cells
            .iter()
            .map(|c| c.result.row(label).map(|r| r.mse))
            .collect()
    }

    pub fn stderr_row(&self, label: EstimatorLabel) -> Option<Vec<Option<F>>> {
        self.cells
            .iter()
            .map(|c| c.result.row(label).map(|r| r.mc_stderr))
            .collect()
    }
}

/// Run every cell of a table.
pub fn run_table<F: Real>(spec: &TableSpec<F>) -> Result<TableResult<F>> {
    spec.validate()?;
    let cells = spec
        .studies()
        .iter()
        .zip(&spec.cells)
        .map(|(study, cell)| {
            Ok(TableCell {
                label: cell.label.clone(),
                result: run_study(study)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TableResult {
        name: spec.name.clone(),
        cells,
        reference: spec.reference.clone(),
    })
}
