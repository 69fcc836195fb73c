//! Experiment specification files (TOML) and their command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{ChokeCriterion, Ensemble, ExperimentOptions, SearchOptions};
use crate::sim::TonConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Profile,
    SweepGrid,
    SweepCapacity,
    Fit,
    Flatten,
    PrimeAlpha,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitModel {
    /// `ln r1` surface over `(alpha, psi0)`.
    #[default]
    Surface,
    /// `r1` against capacity.
    CapacityR1,
    /// `r0` against capacity.
    CapacityR0,
    /// `r0` against `r1`.
    R0R1,
    /// `m0` against `rho0`.
    M0Rho0,
    /// OLS slope of `m0` against `rho0`.
    Delta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grids {
    pub alpha: Vec<f64>,
    pub psi0: Vec<f64>,
    pub capacity: Vec<f64>,
    pub txn_length: Vec<usize>,
}

impl Default for Grids {
    fn default() -> Self {
        Grids {
            alpha: vec![0.6, 0.8, 1.0, 1.2, 1.4],
            psi0: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            capacity: vec![4.0, 6.0, 8.0, 10.0, 12.0],
            txn_length: vec![6, 8, 10, 12, 14],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    /// Also measure `r0` on grid sweeps.
    pub with_r0: bool,
    /// Also measure `m0` on profiles and capacity sweeps.
    pub with_m0: bool,
    /// Mean fault delay of the `m0` measurement (default: a quarter of the
    /// simulated duration).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m0_fault_delay: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    /// CSV or JSON-lines table produced by a sweep command.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    pub model: FitModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlattenSection {
    /// Output of `fit` with the surface model. When absent the surface is
    /// measured on `grids.alpha x grids.psi0` and fitted first.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub surface: Option<PathBuf>,
    /// Impact factors to flatten; empty means `config.alpha`.
    pub alphas: Vec<f64>,
    /// Simulate original and flattened networks and compare them.
    pub verify: bool,
    pub rel_tol: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    /// Resolution of the peak search.
    pub tol: f64,
}

impl Default for FlattenSection {
    fn default() -> Self {
        FlattenSection {
            surface: None,
            alphas: Vec::new(),
            verify: false,
            rel_tol: crate::flatten::DEFAULT_EQUIVALENCE_TOL,
            alpha_min: 0.5,
            alpha_max: 1.5,
            tol: 1e-4,
        }
    }
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    pub seeds: usize,
    pub base_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
    pub output_format: Format,
    pub config: TonConfig,
    pub grids: Grids,
    pub search: SearchOptions,
    pub choke: ChokeCriterion,
    pub experiment: ExperimentSection,
    pub fit: FitSection,
    pub flatten: FlattenSection,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            command: None,
            seeds: Ensemble::default().seeds,
            base_seed: 0,
            output_path: None,
            output_format: Format::Csv,
            config: TonConfig::default(),
            grids: Grids::default(),
            search: SearchOptions::default(),
            choke: ChokeCriterion::default(),
            experiment: ExperimentSection::default(),
            fit: FitSection::default(),
            flatten: FlattenSection::default(),
        }
    }
}

/// Values given on the command line; each one wins over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub command: Option<Command>,
    /// `key=value` pairs. Dotted keys address tables (`config.density`);
    /// bare names of configuration fields are looked up under `config`.
    pub set: Vec<String>,
    pub seeds: Option<usize>,
    pub base_seed: Option<u64>,
    pub output_path: Option<PathBuf>,
    pub output_format: Option<Format>,
}

const CONFIG_KEYS: &[&str] = &[
    "n_nodes",
    "density",
    "capacity",
    "txn_length",
    "subtxn_time",
    "sim_duration",
    "decay_time",
    "psi0",
    "alpha",
    "injection_rate",
    "fault_mean_delay",
    "seed",
];

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn parse_error(path: &Path, text: &str, err: &toml::de::Error) -> Error {
    let message = err.message().to_string();
    if let Some(key) = message
        .strip_prefix("unknown field `")
        .and_then(|rest| rest.split('`').next())
    {
        return Error::UnknownKey(key.to_string());
    }
    Error::Parse {
        path: path.to_path_buf(),
        line: err.span().map_or(0, |s| line_of(text, s.start)),
        message,
    }
}

/// Parse the right-hand side of `--set`: any TOML value, or a bare string.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn apply_set(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::param("set", format!("expected key=value, got `{assignment}`")))?;
    let key = key.trim();
    let mut path: Vec<&str> = key.split('.').collect();
    if path.len() == 1 && CONFIG_KEYS.contains(&key) {
        path.insert(0, "config");
    }
    let (last, parents) = path.split_last().expect("split yields one element");
    let mut node = table;
    for part in parents {
        node = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::param("set", format!("`{part}` is not a table")))?;
    }
    node.insert(last.to_string(), parse_value(raw.trim()));
    Ok(())
}

fn from_table(table: toml::Table, path: &Path, text: &str) -> Result<ExperimentSpec> {
    let mut table = table;
    // Without an explicit decay time, H = 30 subtransaction durations.
    let config = table
        .entry("config")
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    if let Some(cfg) = config.as_table_mut() {
        if !cfg.contains_key("decay_time") {
            let tau = match cfg.get("subtxn_time") {
                Some(toml::Value::Float(f)) => *f,
                Some(toml::Value::Integer(i)) => *i as f64,
                _ => TonConfig::default().subtxn_time,
            };
            cfg.insert("decay_time".into(), toml::Value::Float(30.0 * tau));
        }
    }
    let spec: ExperimentSpec = toml::Table::try_into(table).map_err(|e| {
        let e: toml::de::Error = e;
        parse_error(path, text, &e)
    })?;
    Ok(spec)
}

/// Parse spec text, apply overrides and validate.
pub fn parse_spec(text: &str, path: &Path, overrides: &Overrides) -> Result<ExperimentSpec> {
    let mut table: toml::Table = toml::from_str(text).map_err(|e| parse_error(path, text, &e))?;
    for s in &overrides.set {
        apply_set(&mut table, s)?;
    }
    let mut spec = from_table(table, path, text)?;
    if let Some(c) = overrides.command {
        spec.command = Some(c);
    }
    if let Some(n) = overrides.seeds {
        spec.seeds = n;
    }
    if let Some(s) = overrides.base_seed {
        spec.base_seed = s;
    }
    if let Some(p) = &overrides.output_path {
        spec.output_path = Some(p.clone());
    }
    if let Some(f) = overrides.output_format {
        spec.output_format = f;
    }
    spec.validate()?;
    Ok(spec)
}

/// Load a spec file (or the defaults when `path` is `None`).
pub fn load_spec(path: Option<&Path>, overrides: &Overrides) -> Result<ExperimentSpec> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            parse_spec(&text, p, overrides)
        }
        None => parse_spec("", Path::new("<defaults>"), overrides),
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        self.search.validate()?;
        self.choke.validate()?;
        if self.seeds < 1 {
            return Err(Error::param("seeds", "must be at least 1"));
        }
        let need = |name: &'static str, empty: bool| {
            if empty {
                Err(Error::param(name, "grid must be non-empty for this command"))
            } else {
                Ok(())
            }
        };
        match self.command {
            Some(Command::SweepGrid) => {
                need("grids.alpha", self.grids.alpha.is_empty())?;
                need("grids.psi0", self.grids.psi0.is_empty())?;
            }
            Some(Command::SweepCapacity) => need("grids.capacity", self.grids.capacity.is_empty())?,
            Some(Command::PrimeAlpha) => need("grids.txn_length", self.grids.txn_length.is_empty())?,
            Some(Command::Fit) if self.fit.input.is_none() => {
                return Err(Error::param("fit.input", "required by the fit command"));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn options(&self) -> ExperimentOptions {
        ExperimentOptions {
            ensemble: Ensemble::new(self.seeds, self.base_seed),
            search: self.search.clone(),
            choke: self.choke.clone(),
            m0_fault_delay: self.experiment.m0_fault_delay,
        }
    }

    /// TOML text that loads back into an equal spec.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::param("spec", e.to_string()))
    }
}
