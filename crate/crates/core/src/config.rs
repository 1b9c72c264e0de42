//! Experiment configuration: a flat `key = value` text schema with eager
//! validation and no silent typo tolerance.
//!
//! ```text
//! # lines starting with # are comments
//! experiment = phi-sweep
//! E = 10.0
//! g = 1.0
//! eta = 1.0          # defaults: kappa = 1, eta = 1, dt = 1e-3
//! seed = 1
//! ```
//!
//! Recognized keys: `experiment`, `E`, `g`, `kappa`, `eta`, `phi`, `v0_sq`,
//! `g_true`, `prior_mean`, `n_traj`, `n_steps`, `n_terms`, `phi_points`,
//! `dt`, `delta_t`, `sme_dt`, `t_final`, `e_values`, `n_max`, `seed`,
//! `output_path`, `record_path`, `format`. Unknown keys are errors.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::output::OutputFormat;

/// The experiment families the orchestrator can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    /// Information rates and trajectory summaries over a φ grid.
    PhiSweep,
    /// Normalized R_Q/R_g trade-off identity over a φ grid.
    Tradeoff,
    /// Analytic vs numerical steady state over a drive sweep.
    SteadyStateValidation,
    /// Monte Carlo entropy rate at a single parameter point.
    EntropyRateMc,
    /// Series formula against the diagonal rate and a finite-difference oracle.
    SeriesCheck,
    /// Monte Carlo R_g, fast (likelihood) and slow (SME) paths.
    BayesRateMc,
    /// Sequential (non-reset) inference chain.
    BayesConverge,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::PhiSweep => "phi-sweep",
            Experiment::Tradeoff => "tradeoff",
            Experiment::SteadyStateValidation => "steady-state-validation",
            Experiment::EntropyRateMc => "entropy-rate-mc",
            Experiment::SeriesCheck => "series-check",
            Experiment::BayesRateMc => "bayes-rate-mc",
            Experiment::BayesConverge => "bayes-converge",
        }
    }
}

impl std::str::FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "phi-sweep" => Ok(Experiment::PhiSweep),
            "tradeoff" => Ok(Experiment::Tradeoff),
            "steady-state-validation" => Ok(Experiment::SteadyStateValidation),
            "entropy-rate-mc" => Ok(Experiment::EntropyRateMc),
            "series-check" => Ok(Experiment::SeriesCheck),
            "bayes-rate-mc" => Ok(Experiment::BayesRateMc),
            "bayes-converge" => Ok(Experiment::BayesConverge),
            other => Err(Error::Config(format!(
                "unknown experiment '{other}' (expected one of phi-sweep, tradeoff, \
                 steady-state-validation, entropy-rate-mc, series-check, bayes-rate-mc, \
                 bayes-converge)"
            ))),
        }
    }
}

/// Fully validated configuration for one experiment run.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub drive: f64,
    pub coupling: f64,
    pub kappa: f64,
    pub eta: f64,
    pub phi: f64,
    pub v0_sq: Option<f64>,
    pub g_true: f64,
    pub prior_mean: f64,
    pub n_traj: usize,
    pub n_steps: usize,
    pub n_terms: usize,
    pub phi_points: usize,
    pub dt: f64,
    pub delta_t: f64,
    pub sme_dt: f64,
    pub t_final: f64,
    pub e_values: Vec<f64>,
    pub n_max: Option<usize>,
    pub seed: u64,
    pub output_path: Option<PathBuf>,
    /// When set on phi-sweep with t_final > 0, the full (step, dW, dq)
    /// record of one trajectory at `phi` is written here.
    pub record_path: Option<PathBuf>,
    pub format: OutputFormat,
}

impl ExperimentConfig {
    /// Echo of every field for output metadata, in stable order.
    pub fn metadata(&self) -> Vec<(String, String)> {
        let mut meta = vec![
            ("experiment".into(), self.experiment.name().to_string()),
            ("E".into(), self.drive.to_string()),
            ("g".into(), self.coupling.to_string()),
            ("kappa".into(), self.kappa.to_string()),
            ("eta".into(), self.eta.to_string()),
            ("phi".into(), self.phi.to_string()),
            ("g_true".into(), self.g_true.to_string()),
            ("prior_mean".into(), self.prior_mean.to_string()),
            ("n_traj".into(), self.n_traj.to_string()),
            ("n_steps".into(), self.n_steps.to_string()),
            ("n_terms".into(), self.n_terms.to_string()),
            ("phi_points".into(), self.phi_points.to_string()),
            ("dt".into(), self.dt.to_string()),
            ("delta_t".into(), self.delta_t.to_string()),
            ("sme_dt".into(), self.sme_dt.to_string()),
            ("t_final".into(), self.t_final.to_string()),
            (
                "e_values".into(),
                self.e_values
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("seed".into(), self.seed.to_string()),
        ];
        if let Some(v) = self.v0_sq {
            meta.push(("v0_sq".into(), v.to_string()));
        }
        if let Some(n) = self.n_max {
            meta.push(("n_max".into(), n.to_string()));
        }
        meta
    }
}

const KNOWN_KEYS: &[&str] = &[
    "experiment",
    "E",
    "g",
    "kappa",
    "eta",
    "phi",
    "v0_sq",
    "g_true",
    "prior_mean",
    "n_traj",
    "n_steps",
    "n_terms",
    "phi_points",
    "dt",
    "delta_t",
    "sme_dt",
    "t_final",
    "e_values",
    "n_max",
    "seed",
    "output_path",
    "record_path",
    "format",
];

/// Parses and validates the flat `key = value` schema.
pub fn validate_config(raw: &str) -> Result<ExperimentConfig> {
    let mut map: BTreeMap<String, String> = BTreeMap::new();
    for (lineno, line) in raw.lines().enumerate() {
        let line = match line.find('#') {
            Some(pos) => &line[..pos],
            None => line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected 'key = value'", lineno + 1))
        })?;
        let key = key.trim();
        let value = value.trim();
        if !KNOWN_KEYS.contains(&key) {
            return Err(Error::Config(format!(
                "line {}: unknown key '{key}'",
                lineno + 1
            )));
        }
        if map.insert(key.to_string(), value.to_string()).is_some() {
            return Err(Error::Config(format!(
                "line {}: duplicate key '{key}'",
                lineno + 1
            )));
        }
    }

    let get = |key: &str| map.get(key).map(String::as_str);
    let required = |key: &str| {
        get(key).ok_or_else(|| Error::Config(format!("missing required field '{key}'")))
    };
    fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
        value
            .parse::<T>()
            .map_err(|_| Error::Config(format!("field '{key}': cannot parse '{value}'")))
    }

    let experiment: Experiment = required("experiment")?.parse()?;
    let drive: f64 = parse("E", required("E")?)?;
    let coupling: f64 = parse("g", required("g")?)?;
    let kappa: f64 = get("kappa").map(|v| parse("kappa", v)).transpose()?.unwrap_or(1.0);
    let eta: f64 = get("eta").map(|v| parse("eta", v)).transpose()?.unwrap_or(1.0);
    let phi: f64 = get("phi").map(|v| parse("phi", v)).transpose()?.unwrap_or(0.0);
    let v0_sq: Option<f64> = get("v0_sq").map(|v| parse("v0_sq", v)).transpose()?;
    let g_true: f64 = get("g_true")
        .map(|v| parse("g_true", v))
        .transpose()?
        .unwrap_or(coupling);
    let prior_mean: f64 = get("prior_mean")
        .map(|v| parse("prior_mean", v))
        .transpose()?
        .unwrap_or(g_true / 2.0);
    let n_traj: usize = get("n_traj").map(|v| parse("n_traj", v)).transpose()?.unwrap_or(10_000);
    let n_steps: usize = get("n_steps")
        .map(|v| parse("n_steps", v))
        .transpose()?
        .unwrap_or(100_000);
    let n_terms: usize = get("n_terms").map(|v| parse("n_terms", v)).transpose()?.unwrap_or(200);
    let phi_points: usize = get("phi_points")
        .map(|v| parse("phi_points", v))
        .transpose()?
        .unwrap_or(7);
    let dt: f64 = get("dt").map(|v| parse("dt", v)).transpose()?.unwrap_or(1e-3);
    let default_delta_t = match experiment {
        Experiment::BayesRateMc | Experiment::BayesConverge => 1e-3,
        _ => 1e-4,
    };
    let delta_t: f64 = get("delta_t")
        .map(|v| parse("delta_t", v))
        .transpose()?
        .unwrap_or(default_delta_t);
    let sme_dt: f64 = get("sme_dt").map(|v| parse("sme_dt", v)).transpose()?.unwrap_or(dt);
    let t_final: f64 = get("t_final").map(|v| parse("t_final", v)).transpose()?.unwrap_or(0.0);
    let e_values: Vec<f64> = match get("e_values") {
        Some(list) => list
            .split(',')
            .map(|tok| parse::<f64>("e_values", tok.trim()))
            .collect::<Result<Vec<_>>>()?,
        None => vec![2.5, 5.0, 10.0],
    };
    let n_max: Option<usize> = get("n_max").map(|v| parse("n_max", v)).transpose()?;
    let seed: u64 = get("seed").map(|v| parse("seed", v)).transpose()?.unwrap_or(1);
    let output_path = get("output_path").map(PathBuf::from);
    let record_path = get("record_path").map(PathBuf::from);
    let format: OutputFormat = get("format")
        .map(|v| v.parse())
        .transpose()?
        .unwrap_or(OutputFormat::Csv);

    // eager domain checks
    if !(drive > 0.0) {
        return Err(Error::Config(format!("field 'E': must be > 0, got {drive}")));
    }
    if !(coupling >= 0.0) {
        return Err(Error::Config(format!("field 'g': must be >= 0, got {coupling}")));
    }
    if coupling >= 2.0 * drive {
        return Err(Error::Config(format!(
            "fields 'g'/'E': the strong-driving formulas require g < 2E (g = {coupling}, E = {drive})"
        )));
    }
    if g_true >= 2.0 * drive {
        return Err(Error::Config(format!(
            "field 'g_true': requires g_true < 2E (g_true = {g_true}, E = {drive})"
        )));
    }
    if !(kappa > 0.0) {
        return Err(Error::Config(format!("field 'kappa': must be > 0, got {kappa}")));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::Config(format!(
            "field 'eta': must lie in (0, 1], got {eta}"
        )));
    }
    for &key_dt in &[("dt", dt), ("delta_t", delta_t), ("sme_dt", sme_dt)] {
        if !(key_dt.1 > 0.0) {
            return Err(Error::Config(format!(
                "field '{}': must be > 0, got {}",
                key_dt.0, key_dt.1
            )));
        }
    }
    if t_final < 0.0 {
        return Err(Error::Config(format!(
            "field 't_final': must be >= 0, got {t_final}"
        )));
    }
    if phi_points < 2 {
        return Err(Error::Config("field 'phi_points': need at least 2".into()));
    }
    if e_values.is_empty() {
        return Err(Error::Config("field 'e_values': need at least one value".into()));
    }
    if let Some(v) = v0_sq {
        if !(v > 0.0) {
            return Err(Error::Config(format!("field 'v0_sq': must be > 0, got {v}")));
        }
    }
    match experiment {
        Experiment::Tradeoff | Experiment::BayesRateMc | Experiment::BayesConverge => {
            if v0_sq.is_none() {
                return Err(Error::Config(format!(
                    "experiment '{}' requires field 'v0_sq'",
                    experiment.name()
                )));
            }
        }
        _ => {}
    }

    Ok(ExperimentConfig {
        experiment,
        drive,
        coupling,
        kappa,
        eta,
        phi,
        v0_sq,
        g_true,
        prior_mean,
        n_traj,
        n_steps,
        n_terms,
        phi_points,
        dt,
        delta_t,
        sme_dt,
        t_final,
        e_values,
        n_max,
        seed,
        output_path,
        record_path,
        format,
    })
}
