//! Command-line front end.
//!
//! ```text
//! ebnm fit <DATA> [--config c.json] [--out report.json] [--chain-out chain.json]
//! ebnm simulate <STUDY> --out table.csv [--audit audit.json]
//! ebnm diagnose <CHAIN_OR_DATA> [--config c.json] [--out diag.json] [--sparsity s]
//! ebnm feasible <KAPPA> <SIGMA2> <BETA>
//! ```
//!
//! Common flags: `--seed` overrides the configured seed, `--threads` caps the
//! worker pool. Exit codes: 0 success, 1 input error, 2 configuration error,
//! 3 numeric failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::{
    diagnose, sparsity_from_chain, sparsity_from_threshold, DiagnosticsConfig, DiagnosticsReport,
    SparsitySource,
};
use crate::error::{Error, Result};
use crate::estimators::{AlphaSource, EstimateReport, EstimatorLabel, ModelSpec};
use crate::model::{feasible_margin, Feasibility, FeasibilityQuery, Observations};
use crate::sampler::{run_chain, PosteriorChain, SamplerConfig};
use crate::simulation::{run_table, TableResult, TableSpec};

/// Margins smaller than this in magnitude are reported as boundary.
pub const BOUNDARY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Parser)]
#[command(name = "ebnm", version, about = "Empirical Bayes posterior for sparse normal means")]
pub struct Cli {
    /// Maximum number of worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample the posterior for a data file and report estimates and diagnostics.
    Fit {
        /// Newline-delimited reals; lines starting with `#` are comments.
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the full chain as JSON (readable by `diagnose`).
        #[arg(long)]
        chain_out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Sparsity level for the dimension diagnostics.
        #[arg(long)]
        sparsity: Option<usize>,
    },
    /// Run a replicated study table and write CSV plus a JSON audit.
    Simulate {
        study: PathBuf,
        /// CSV output path.
        #[arg(long)]
        out: PathBuf,
        /// JSON audit path (default: `<out stem>.audit.json`).
        #[arg(long)]
        audit: Option<PathBuf>,
        /// Overrides the table's root seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Emit ω-histogram and inclusion plot data from a chain or a data file.
    Diagnose {
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        sparsity: Option<usize>,
    },
    /// Signed margin of (κ, σ²) against the feasible region for exponent β.
    Feasible {
        kappa: f64,
        sigma2: f64,
        beta: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Configuration document accepted by `fit` and `diagnose`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub model: ModelSpec<f64>,
    pub sampler: SamplerConfig,
    pub diagnostics: DiagnosticsConfig<f64>,
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.sampler.validate()?;
        self.diagnostics.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_digest: String,
    pub root_seed: u64,
    pub tool_version: String,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

impl RunManifest {
    fn new<T: Serialize>(command: &str, resolved: &T, root_seed: u64, started: u128) -> Result<Self> {
        Ok(RunManifest {
            command: command.to_string(),
            config_digest: config_digest(resolved)?,
            root_seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix_ms: started,
            finished_unix_ms: now_ms(),
        })
    }
}

/// Every output document: the manifest plus a payload that is byte-stable
/// for a fixed resolved configuration and seed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Document<P> {
    pub manifest: RunManifest,
    pub payload: P,
}

/// SHA-256 of the compact JSON encoding of the resolved configuration.
pub fn config_digest<T: Serialize>(resolved: &T) -> Result<String> {
    let bytes = serde_json::to_vec(resolved)
        .map_err(|e| Error::Config(format!("cannot encode configuration: {e}")))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

/// Parse newline-delimited reals; `#` lines and blank lines are skipped.
pub fn parse_data(text: &str) -> Result<Observations<f64>> {
    let mut x = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: f64 = line
            .parse()
            .map_err(|_| Error::Input(format!("line {}: cannot parse {line:?} as a number", i + 1)))?;
        if !v.is_finite() {
            return Err(Error::Input(format!("line {}: value {line:?} is not finite", i + 1)));
        }
        x.push(v);
    }
    if x.is_empty() {
        return Err(Error::Input("data file contains no observations".into()));
    }
    Observations::new(x)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))
}

fn read_config<T: for<'de> Deserialize<'de> + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = read_text(p)?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| Error::Config(format!("cannot encode output: {e}")))
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(Error::from),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

/// Model and sampler after data-dependent resolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolvedFit {
    pub model: crate::model::ModelConfig<f64>,
    pub alpha_source: AlphaSource,
    pub sampler: SamplerConfig,
    pub diagnostics: DiagnosticsConfig<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitPayload {
    pub config: ResolvedFit,
    pub estimate: EstimateReport<f64>,
    /// Absent when the chain is too short or `n < 2`; see `diagnostics_note`.
    pub diagnostics: Option<DiagnosticsReport<f64>>,
    pub diagnostics_note: Option<String>,
}

fn resolve_fit(
    data: &Observations<f64>,
    config: &FitConfig,
    seed: Option<u64>,
) -> Result<ResolvedFit> {
    config.validate()?;
    let (model, alpha_source) = config.model.resolve(data)?;
    let mut sampler = config.sampler;
    if let Some(s) = seed {
        sampler.seed = s;
    }
    Ok(ResolvedFit {
        model,
        alpha_source,
        sampler,
        diagnostics: config.diagnostics,
    })
}

fn chain_diagnostics(
    chain: &PosteriorChain<f64>,
    data: Option<&Observations<f64>>,
    sparsity: Option<usize>,
    config: &DiagnosticsConfig<f64>,
) -> Result<(Option<DiagnosticsReport<f64>>, Option<String>)> {
    if chain.n < 2 {
        return Ok((None, Some("diagnostics need n >= 2".into())));
    }
    let (s, source) = match (sparsity, data) {
        (Some(s), _) => {
            if s == 0 || s >= chain.n {
                return Err(Error::Config(format!(
                    "sparsity must satisfy 1 <= s < n = {} (got {s})",
                    chain.n
                )));
            }
            (s, SparsitySource::Supplied)
        }
        (None, Some(d)) => (sparsity_from_threshold(d)?, SparsitySource::Threshold),
        (None, None) => (sparsity_from_chain(chain)?, SparsitySource::Posterior),
    };
    match diagnose(chain, s, source, config, None) {
        Ok(r) => Ok((Some(r), None)),
        Err(Error::Usage(msg)) => Ok((None, Some(msg))),
        Err(e) => Err(e),
    }
}

fn check_chain_numeric(chain: &PosteriorChain<f64>, seed: u64) -> Result<()> {
    let bad = chain
        .running_mean_theta
        .iter()
        .chain(&chain.omega_draws)
        .any(|v| !v.is_finite());
    if bad {
        return Err(Error::Numeric {
            replication: 0,
            seed,
            message: "chain produced non-finite values".into(),
        });
    }
    Ok(())
}

pub fn cmd_fit(
    data_path: &Path,
    config_path: Option<&Path>,
    out: Option<&Path>,
    chain_out: Option<&Path>,
    seed: Option<u64>,
    sparsity: Option<usize>,
) -> Result<()> {
    let started = now_ms();
    let data = parse_data(&read_text(data_path)?)?;
    let config: FitConfig = read_config(config_path)?;
    let resolved = resolve_fit(&data, &config, seed)?;
    let chain = run_chain(&data, &resolved.model, &resolved.sampler)?;
    check_chain_numeric(&chain, resolved.sampler.seed)?;
    let estimate = EstimateReport::from_chain(&chain)?;
    let (diagnostics, diagnostics_note) =
        chain_diagnostics(&chain, Some(&data), sparsity, &resolved.diagnostics)?;
    if let Some(p) = chain_out {
        fs::write(p, to_json(&chain)?)?;
    }
    let manifest = RunManifest::new("fit", &resolved, resolved.sampler.seed, started)?;
    let doc = Document {
        manifest,
        payload: FitPayload {
            config: resolved,
            estimate,
            diagnostics,
            diagnostics_note,
        },
    };
    write_or_print(out, &to_json(&doc)?)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiagnosePayload {
    /// `"chain"` or `"data"`.
    pub input_kind: String,
    pub config: Option<ResolvedFit>,
    pub diagnostics: Option<DiagnosticsReport<f64>>,
    pub diagnostics_note: Option<String>,
    /// Per-coordinate `P(θ_i ≠ 0 | X)`.
    pub inclusion: Vec<f64>,
    pub posterior_mean: Vec<f64>,
}

/// Structural checks on a chain read from disk.
pub fn validate_chain(chain: &PosteriorChain<f64>) -> Result<()> {
    let bad = |m: String| Err(Error::Input(format!("chain file: {m}")));
    if chain.omega_draws.len() != chain.d_theta_draws.len() {
        return bad("omega_draws and d_theta_draws differ in length".into());
    }
    if chain.model.n != chain.n {
        return bad(format!("model.n = {} but n = {}", chain.model.n, chain.n));
    }
    if chain.running_mean_theta.len() != chain.n || chain.running_nonzero_freq.len() != chain.n {
        return bad("running summaries do not have length n".into());
    }
    if !chain.theta_draws.is_empty() && chain.theta_draws.len() != chain.n * chain.retained() {
        return bad("theta_draws is not retained × n".into());
    }
    if chain.omega_draws.iter().any(|&w| !(w > 0.0 && w < 1.0)) {
        return bad("omega draws must lie in (0, 1)".into());
    }
    if chain.d_theta_draws.iter().any(|&d| d > chain.n) {
        return bad("d_theta draws exceed n".into());
    }
    chain.model.validate()
}

pub fn cmd_diagnose(
    input: &Path,
    config_path: Option<&Path>,
    out: Option<&Path>,
    seed: Option<u64>,
    sparsity: Option<usize>,
) -> Result<()> {
    let started = now_ms();
    let text = read_text(input)?;
    let config: FitConfig = read_config(config_path)?;
    let (kind, resolved, chain, data) = if text.trim_start().starts_with('{') {
        let chain: PosteriorChain<f64> = serde_json::from_str(&text)
            .map_err(|e| Error::Input(format!("{}: {e}", input.display())))?;
        validate_chain(&chain)?;
        config.diagnostics.validate()?;
        ("chain", None, chain, None)
    } else {
        let data = parse_data(&text)?;
        let resolved = resolve_fit(&data, &config, seed)?;
        let chain = run_chain(&data, &resolved.model, &resolved.sampler)?;
        check_chain_numeric(&chain, resolved.sampler.seed)?;
        ("data", Some(resolved), chain, Some(data))
    };
    let (diagnostics, diagnostics_note) =
        chain_diagnostics(&chain, data.as_ref(), sparsity, &config.diagnostics)?;
    let root_seed = resolved
        .as_ref()
        .map(|r| r.sampler.seed)
        .unwrap_or(chain.sampler.seed);
    let manifest = match &resolved {
        Some(r) => RunManifest::new("diagnose", r, root_seed, started)?,
        None => RunManifest::new("diagnose", &(&chain.model, &chain.sampler, &config.diagnostics), root_seed, started)?,
    };
    let doc = Document {
        manifest,
        payload: DiagnosePayload {
            input_kind: kind.into(),
            config: resolved,
            diagnostics,
            diagnostics_note,
            inclusion: chain.running_nonzero_freq.clone(),
            posterior_mean: chain.running_mean_theta.clone(),
        },
    };
    write_or_print(out, &to_json(&doc)?)
}

/// Wide CSV: one MSE row and one standard-error row per estimator, one column
/// per cell, then any reference rows. Empty cells mark missing standard errors.
pub fn render_table_csv(table: &TableResult<f64>, estimators: &[EstimatorLabel]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["estimator".to_string()];
    header.extend(table.cells.iter().map(|c| c.label.clone()));
    let csv_err = |e: csv::Error| Error::Config(format!("cannot write CSV: {e}"));
    w.write_record(&header).map_err(csv_err)?;
    for &label in estimators {
        let mse = table.mse_row(label).unwrap_or_default();
        let mut row = vec![label.to_string()];
        row.extend(mse.iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(csv_err)?;
        let se = table.stderr_row(label).unwrap_or_default();
        let mut row = vec![format!("{label} se")];
        row.extend(se.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()));
        w.write_record(&row).map_err(csv_err)?;
    }
    for (name, values) in &table.reference {
        let mut row = vec![format!("reference {name}")];
        row.extend(values.iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Config(format!("cannot write CSV: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Config(e.to_string()))
}

/// Default audit path: `<dir>/<stem>.audit.json`.
pub fn audit_path_for(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "table".into());
    out.with_file_name(format!("{stem}.audit.json"))
}

pub fn load_table_spec(path: &Path) -> Result<TableSpec<f64>> {
    let text = read_text(path)?;
    let spec: TableSpec<f64> = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    spec.validate()?;
    Ok(spec)
}

pub fn cmd_simulate(study: &Path, out: &Path, audit: Option<&Path>, seed: Option<u64>) -> Result<()> {
    let started = now_ms();
    let mut spec = load_table_spec(study)?;
    if let Some(s) = seed {
        spec.root_seed = s;
    }
    let table = run_table(&spec)?;
    let csv = render_table_csv(&table, &spec.estimators)?;
    fs::write(out, csv)?;
    let manifest = RunManifest::new("simulate", &spec, spec.root_seed, started)?;
    let doc = Document {
        manifest,
        payload: table,
    };
    let audit_path = audit.map(Path::to_path_buf).unwrap_or_else(|| audit_path_for(out));
    fs::write(audit_path, to_json(&doc)?)?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasiblePayload {
    pub kappa: f64,
    pub sigma2: f64,
    pub beta: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub verdict: Feasibility,
    pub note: Option<String>,
}

pub fn feasibility_report(kappa: f64, sigma2: f64, beta: f64) -> Result<FeasiblePayload> {
    let q = FeasibilityQuery::new(kappa, sigma2, beta)?;
    let margin = feasible_margin(&q);
    let verdict = Feasibility::classify(margin, BOUNDARY_TOLERANCE);
    let on_curve = ((1.0 - kappa) * sigma2 - 1.0).abs() < 1e-9;
    let note = (verdict != Feasibility::Feasible && on_curve).then(|| {
        "sigma2 = 1/(1-kappa) is the nominal boundary curve of the region for large beta \
         and kappa near 1; the strict margin at this beta is reported as computed"
            .to_string()
    });
    Ok(FeasiblePayload {
        kappa,
        sigma2,
        beta,
        lhs: q.lhs(),
        rhs: q.rhs(),
        margin,
        verdict,
        note,
    })
}

pub fn cmd_feasible(kappa: f64, sigma2: f64, beta: f64, out: Option<&Path>) -> Result<()> {
    let started = now_ms();
    let payload = feasibility_report(kappa, sigma2, beta)?;
    let manifest = RunManifest::new("feasible", &(kappa, sigma2, beta), 0, started)?;
    write_or_print(out, &to_json(&Document { manifest, payload })?)
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit {
            data,
            config,
            out,
            chain_out,
            seed,
            sparsity,
        } => cmd_fit(
            &data,
            config.as_deref(),
            out.as_deref(),
            chain_out.as_deref(),
            seed,
            sparsity,
        ),
        Command::Simulate {
            study,
            out,
            audit,
            seed,
        } => cmd_simulate(&study, &out, audit.as_deref(), seed),
        Command::Diagnose {
            input,
            config,
            out,
            seed,
            sparsity,
        } => cmd_diagnose(&input, config.as_deref(), out.as_deref(), seed, sparsity),
        Command::Feasible {
            kappa,
            sigma2,
            beta,
            out,
        } => cmd_feasible(kappa, sigma2, beta, out.as_deref()),
    }
}

/// Parse arguments, run the command, and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(k) = cli.threads {
        if k == 0 {
            eprintln!("error: --threads must be at least 1");
            return 2;
        }
        pool = pool.num_threads(k);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return 3;
        }
    };
    match pool.install(|| dispatch(cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
