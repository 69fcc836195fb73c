//! Command dispatch and the result envelope.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::emit::{read_table, render, Record, Value};
use super::spec::{Command, ExperimentSpec, FitModel, Format};
use crate::error::{Error, Result};
use crate::experiments::{
    capacity_sweep, grid_sweep, resilience_profile, CapacitySample, GridSample, ResilienceProfile,
    SearchFlag,
};
use crate::fitting::{
    delta_relation_check, fit_capacity_law, fit_m0_vs_rho0, fit_r0_vs_r1, fit_surface, SurfaceFit,
};
use crate::flatten::{flatten, flattening_ratio, prime_impact_factor, verify_flattening};
use crate::sim::{RunStats, TonConfig};

fn flag_text(f: Option<SearchFlag>) -> Value {
    Value::MaybeText(f.map(|f| format!("{f:?}")))
}

/// Summary of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRecord {
    pub run: u64,
    pub seed: u64,
    pub injected: u64,
    pub committed: u64,
    pub aborted: u64,
    pub aborted_no_route: u64,
    pub aborted_host_died: u64,
    pub aborted_no_source: u64,
    pub in_flight_at_end: u64,
    pub disabled_overload: u64,
    pub disabled_fault: u64,
    pub abort_fraction: f64,
    pub choke_time: Option<f64>,
}

impl SimRecord {
    fn new(run: usize, seed: u64, s: &RunStats) -> Self {
        SimRecord {
            run: run as u64,
            seed,
            injected: s.injected,
            committed: s.committed,
            aborted: s.aborted,
            aborted_no_route: s.aborted_by_reason.all_neighbors_disabled,
            aborted_host_died: s.aborted_by_reason.host_died,
            aborted_no_source: s.aborted_by_reason.no_live_source,
            in_flight_at_end: s.in_flight_at_end,
            disabled_overload: s.nodes_disabled_overload,
            disabled_fault: s.nodes_disabled_fault,
            abort_fraction: s.abort_fraction(),
            choke_time: s.choke_time,
        }
    }
}

impl Record for SimRecord {
    fn header() -> &'static [&'static str] {
        &[
            "run",
            "seed",
            "injected",
            "committed",
            "aborted",
            "aborted_no_route",
            "aborted_host_died",
            "aborted_no_source",
            "in_flight_at_end",
            "disabled_overload",
            "disabled_fault",
            "abort_fraction",
            "choke_time",
        ]
    }
    fn values(&self) -> Vec<Value> {
        vec![
            Value::Int(self.run),
            Value::Int(self.seed),
            Value::Int(self.injected),
            Value::Int(self.committed),
            Value::Int(self.aborted),
            Value::Int(self.aborted_no_route),
            Value::Int(self.aborted_host_died),
            Value::Int(self.aborted_no_source),
            Value::Int(self.in_flight_at_end),
            Value::Int(self.disabled_overload),
            Value::Int(self.disabled_fault),
            Value::Float(self.abort_fraction),
            Value::MaybeFloat(self.choke_time),
        ]
    }
}

impl Record for ResilienceProfile {
    fn header() -> &'static [&'static str] {
        &["r0", "r1", "rho0", "m0", "m0_stderr", "seeds", "rel_resolution", "r0_flag", "r1_flag"]
    }
    fn values(&self) -> Vec<Value> {
        vec![
            Value::Float(self.r0),
            Value::Float(self.r1),
            Value::Float(self.rho0),
            Value::MaybeFloat(self.m0),
            Value::MaybeFloat(self.m0_stderr),
            Value::Int(self.seeds_used as u64),
            Value::Float(self.rel_resolution),
            flag_text(self.r0_flag),
            flag_text(self.r1_flag),
        ]
    }
}

impl Record for GridSample {
    fn header() -> &'static [&'static str] {
        &["alpha", "psi0", "ln_r1", "ln_r0", "stderr"]
    }
    fn values(&self) -> Vec<Value> {
        vec![
            Value::Float(self.alpha),
            Value::Float(self.psi0),
            Value::Float(self.ln_r1),
            Value::MaybeFloat(self.ln_r0),
            Value::Float(self.stderr),
        ]
    }
}

impl Record for CapacitySample {
    fn header() -> &'static [&'static str] {
        &["capacity", "r0", "r1", "rho0", "m0", "m0_stderr", "r0_flag", "r1_flag"]
    }
    fn values(&self) -> Vec<Value> {
        vec![
            Value::Float(self.capacity),
            Value::Float(self.r0),
            Value::Float(self.r1),
            Value::Float(self.rho0),
            Value::MaybeFloat(self.m0),
            Value::MaybeFloat(self.m0_stderr),
            flag_text(self.r0_flag),
            flag_text(self.r1_flag),
        ]
    }
}

/// One fitted parameter, in long format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub model: String,
    pub parameter: String,
    pub value: f64,
}

impl Record for FitRecord {
    fn header() -> &'static [&'static str] {
        &["model", "parameter", "value"]
    }
    fn values(&self) -> Vec<Value> {
        vec![
            Value::Text(self.model.clone()),
            Value::Text(self.parameter.clone()),
            Value::Float(self.value),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlattenRecord {
    pub alpha: f64,
    pub psi0: f64,
    pub txn_length: u64,
    pub ln_r1_target: f64,
    pub psi0_prime: f64,
    pub psi_ratio: f64,
    pub r0_original: Option<f64>,
    pub r1_original: Option<f64>,
    pub r0_flattened: Option<f64>,
    pub r1_flattened: Option<f64>,
    pub r1_rel_diff: Option<f64>,
    pub equivalent: Option<bool>,
}

impl Record for FlattenRecord {
    fn header() -> &'static [&'static str] {
        &[
            "alpha",
            "psi0",
            "txn_length",
            "ln_r1_target",
            "psi0_prime",
            "psi_ratio",
            "r0_original",
            "r1_original",
            "r0_flattened",
            "r1_flattened",
            "r1_rel_diff",
            "equivalent",
        ]
    }
    fn values(&self) -> Vec<Value> {
        vec![
            Value::Float(self.alpha),
            Value::Float(self.psi0),
            Value::Int(self.txn_length),
            Value::Float(self.ln_r1_target),
            Value::Float(self.psi0_prime),
            Value::Float(self.psi_ratio),
            Value::MaybeFloat(self.r0_original),
            Value::MaybeFloat(self.r1_original),
            Value::MaybeFloat(self.r0_flattened),
            Value::MaybeFloat(self.r1_flattened),
            Value::MaybeFloat(self.r1_rel_diff),
            Value::MaybeBool(self.equivalent),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimeRecord {
    pub txn_length: u64,
    pub alpha_prime: f64,
    pub psi_at_peak: f64,
    pub surface_goodness: f64,
}

impl Record for PrimeRecord {
    fn header() -> &'static [&'static str] {
        &["txn_length", "alpha_prime", "psi_at_peak", "surface_goodness"]
    }
    fn values(&self) -> Vec<Value> {
        vec![
            Value::Int(self.txn_length),
            Value::Float(self.alpha_prime),
            Value::Float(self.psi_at_peak),
            Value::Float(self.surface_goodness),
        ]
    }
}

/// Records produced by one command.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Simulate(Vec<SimRecord>),
    Profile(Vec<ResilienceProfile>),
    Grid(Vec<GridSample>),
    Capacity(Vec<CapacitySample>),
    Fit(Vec<FitRecord>),
    Flatten(Vec<FlattenRecord>),
    Prime(Vec<PrimeRecord>),
}

impl Payload {
    pub fn render(&self, format: Format) -> Result<Vec<u8>> {
        match self {
            Payload::Simulate(r) => render(r, format),
            Payload::Profile(r) => render(r, format),
            Payload::Grid(r) => render(r, format),
            Payload::Capacity(r) => render(r, format),
            Payload::Fit(r) => render(r, format),
            Payload::Flatten(r) => render(r, format),
            Payload::Prime(r) => render(r, format),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Payload::Simulate(r) => r.len(),
            Payload::Profile(r) => r.len(),
            Payload::Grid(r) => r.len(),
            Payload::Capacity(r) => r.len(),
            Payload::Fit(r) => r.len(),
            Payload::Flatten(r) => r.len(),
            Payload::Prime(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// False when every threshold search ran off the rate ceiling, i.e.
    /// nothing was actually located.
    pub fn has_results(&self) -> bool {
        let never = |f: &Option<SearchFlag>| *f == Some(SearchFlag::NeverTrue);
        match self {
            Payload::Profile(r) => !r.iter().all(|p| never(&p.r1_flag)),
            Payload::Capacity(r) => !r.iter().all(|p| never(&p.r1_flag)),
            Payload::Grid(r) => !r.iter().all(|p| never(&p.r1_flag)),
            _ => true,
        }
    }
}

/// Metadata written next to the payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultEnvelope {
    pub tool_version: String,
    pub command: Command,
    /// SHA-256 of the resolved spec with its output settings removed.
    pub config_digest: String,
    pub base_seed: u64,
    /// Seed of run `i` is `splitmix64(base_seed + (i + 1) * golden_gamma)`.
    pub seed_mixing: String,
    pub run_seeds: Vec<u64>,
    pub rng: String,
    pub records: usize,
    /// SHA-256 of the payload bytes.
    pub payload_digest: String,
    pub wall_time_secs: f64,
    pub spec: ExperimentSpec,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub envelope: ResultEnvelope,
    pub payload: Payload,
    pub bytes: Vec<u8>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn config_digest(spec: &ExperimentSpec) -> String {
    let mut s = spec.clone();
    s.output_path = None;
    s.output_format = Format::Csv;
    let json = serde_json::to_vec(&s).expect("spec serializes");
    hex(&Sha256::digest(&json))
}

fn cell(row: &BTreeMap<String, String>, name: &str) -> Result<Option<f64>> {
    match row.get(name).map(|s| s.trim()) {
        None | Some("") => Ok(None),
        Some(s) => s
            .parse::<f64>()
            .map(Some)
            .map_err(|_| Error::InvalidDomain(format!("column `{name}`: `{s}` is not a number"))),
    }
}

fn required(row: &BTreeMap<String, String>, name: &str) -> Result<f64> {
    cell(row, name)?.ok_or_else(|| Error::InvalidDomain(format!("missing value in column `{name}`")))
}

fn pairs(rows: &[BTreeMap<String, String>], x: &str, y: &str) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for row in rows {
        // Rows without a measurement (e.g. no m0) are skipped.
        if let (Some(a), Some(b)) = (cell(row, x)?, cell(row, y)?) {
            out.push((a, b));
        }
    }
    Ok(out)
}

fn surface_records(fit: &SurfaceFit<f64>) -> Vec<FitRecord> {
    let named = [
        ("A", fit.big_a),
        ("B_psi", fit.b_psi),
        ("B_alpha", fit.b_alpha),
        ("gamma_alpha", fit.gamma_alpha),
        ("delta_alpha", fit.delta_alpha),
        ("c", fit.c),
        ("goodness", fit.goodness),
        ("converged", if fit.converged { 1.0 } else { 0.0 }),
    ];
    long_records("surface", &named)
}

fn long_records(model: &str, named: &[(&str, f64)]) -> Vec<FitRecord> {
    named
        .iter()
        .map(|(p, v)| FitRecord { model: model.into(), parameter: (*p).into(), value: *v })
        .collect()
}

/// Read a surface written by the `fit` command.
pub fn load_surface(path: &Path) -> Result<SurfaceFit<f64>> {
    let rows = read_table(path)?;
    let mut params = BTreeMap::new();
    for row in rows.iter().filter(|r| r.get("model").map(String::as_str) == Some("surface")) {
        let name = row.get("parameter").cloned().unwrap_or_default();
        params.insert(name, required(row, "value")?);
    }
    let get = |k: &str| {
        params
            .get(k)
            .copied()
            .ok_or_else(|| Error::InvalidSurface(format!("{}: missing parameter {k}", path.display())))
    };
    let mut fit = SurfaceFit::new(
        get("A")?,
        get("B_psi")?,
        get("B_alpha")?,
        get("gamma_alpha")?,
        get("delta_alpha")?,
        get("c")?,
    );
    fit.goodness = params.get("goodness").copied().unwrap_or(f64::NAN);
    Ok(fit)
}

fn measure_surface(spec: &ExperimentSpec, config: &TonConfig) -> Result<SurfaceFit<f64>> {
    let samples = grid_sweep(config, &spec.grids.alpha, &spec.grids.psi0, &spec.options(), false)?;
    fit_surface(&samples)
}

fn surface_for(spec: &ExperimentSpec, config: &TonConfig) -> Result<SurfaceFit<f64>> {
    match &spec.flatten.surface {
        Some(p) => load_surface(p),
        None => measure_surface(spec, config),
    }
}

fn run_fit(spec: &ExperimentSpec) -> Result<Vec<FitRecord>> {
    let path = spec
        .fit
        .input
        .as_deref()
        .ok_or_else(|| Error::param("fit.input", "required by the fit command"))?;
    let rows = read_table(path)?;
    Ok(match spec.fit.model {
        FitModel::Surface => {
            let samples = rows
                .iter()
                .map(|r| {
                    Ok(GridSample {
                        alpha: required(r, "alpha")?,
                        psi0: required(r, "psi0")?,
                        ln_r1: required(r, "ln_r1")?,
                        ln_r0: cell(r, "ln_r0")?,
                        stderr: cell(r, "stderr")?.unwrap_or(0.0),
                        r1_flag: None,
                        r0_flag: None,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            surface_records(&fit_surface(&samples)?)
        }
        FitModel::CapacityR1 | FitModel::CapacityR0 => {
            let (col, model) = if spec.fit.model == FitModel::CapacityR1 {
                ("r1", "capacity-r1")
            } else {
                ("r0", "capacity-r0")
            };
            let f = fit_capacity_law(&pairs(&rows, "capacity", col)?)?;
            long_records(model, &[("A", f.a_coef), ("beta", f.beta), ("goodness", f.goodness)])
        }
        FitModel::R0R1 => {
            let f = fit_r0_vs_r1(&pairs(&rows, "r1", "r0")?)?;
            long_records("r0-r1", &[("a", f.a), ("b", f.b), ("goodness", f.goodness)])
        }
        FitModel::M0Rho0 => {
            let f = fit_m0_vs_rho0(&pairs(&rows, "rho0", "m0")?)?;
            long_records(
                "m0-rho0",
                &[("delta_m", f.delta_m), ("lambda", f.lambda), ("goodness", f.goodness)],
            )
        }
        FitModel::Delta => {
            let slope = delta_relation_check(&pairs(&rows, "rho0", "m0")?)?;
            long_records("delta", &[("slope", slope)])
        }
    })
}

fn run_flatten(spec: &ExperimentSpec) -> Result<Vec<FlattenRecord>> {
    let cfg = &spec.config;
    let fit = surface_for(spec, cfg)?;
    let alphas = if spec.flatten.alphas.is_empty() { vec![cfg.alpha] } else { spec.flatten.alphas.clone() };
    let opts = spec.options();
    alphas
        .iter()
        .map(|&alpha| {
            let base = flatten(&fit, alpha, cfg.psi0, cfg.txn_length)?;
            let mut rec = FlattenRecord {
                alpha,
                psi0: cfg.psi0,
                txn_length: cfg.txn_length as u64,
                ln_r1_target: base.ln_r1_target,
                psi0_prime: base.psi0_prime,
                psi_ratio: base.psi_ratio,
                r0_original: None,
                r1_original: None,
                r0_flattened: None,
                r1_flattened: None,
                r1_rel_diff: None,
                equivalent: None,
            };
            if spec.flatten.verify {
                let original = TonConfig { alpha, ..cfg.clone() };
                let report = verify_flattening(&original, &fit, &opts, spec.flatten.rel_tol)?;
                rec.ln_r1_target = report.original.r1.ln();
                rec.psi0_prime = report.psi0_prime;
                rec.psi_ratio = flattening_ratio(cfg.psi0, alpha, cfg.txn_length, report.psi0_prime)?;
                rec.r0_original = Some(report.original.r0);
                rec.r1_original = Some(report.original.r1);
                rec.r0_flattened = Some(report.flattened.r0);
                rec.r1_flattened = Some(report.flattened.r1);
                rec.r1_rel_diff = Some(report.r1_rel_diff);
                rec.equivalent = Some(report.equivalent);
            }
            Ok(rec)
        })
        .collect()
}

fn run_prime(spec: &ExperimentSpec) -> Result<Vec<PrimeRecord>> {
    let f = &spec.flatten;
    spec.grids
        .txn_length
        .iter()
        .map(|&l| {
            let cfg = TonConfig { txn_length: l, ..spec.config.clone() };
            let fit = surface_for(spec, &cfg)?;
            let pf = prime_impact_factor(&fit, cfg.psi0, l, (f.alpha_min, f.alpha_max), f.tol)?;
            Ok(PrimeRecord {
                txn_length: l as u64,
                alpha_prime: pf.alpha_prime,
                psi_at_peak: pf.psi_at_peak,
                surface_goodness: fit.goodness,
            })
        })
        .collect()
}

fn dispatch(spec: &ExperimentSpec, command: Command) -> Result<Payload> {
    let opts = spec.options();
    Ok(match command {
        Command::Simulate => {
            let runs = opts.ensemble.run(&spec.config, &spec.choke)?;
            let seeds = opts.ensemble.run_seeds();
            Payload::Simulate(
                runs.iter()
                    .zip(seeds)
                    .enumerate()
                    .map(|(i, (s, seed))| SimRecord::new(i, seed, s))
                    .collect(),
            )
        }
        Command::Profile => Payload::Profile(vec![resilience_profile(
            &spec.config,
            &opts,
            spec.experiment.with_m0,
        )?]),
        Command::SweepGrid => Payload::Grid(grid_sweep(
            &spec.config,
            &spec.grids.alpha,
            &spec.grids.psi0,
            &opts,
            spec.experiment.with_r0,
        )?),
        Command::SweepCapacity => Payload::Capacity(capacity_sweep(
            &spec.config,
            &spec.grids.capacity,
            &opts,
            spec.experiment.with_m0,
        )?),
        Command::Fit => Payload::Fit(run_fit(spec)?),
        Command::Flatten => Payload::Flatten(run_flatten(spec)?),
        Command::PrimeAlpha => Payload::Prime(run_prime(spec)?),
    })
}

/// Run the spec's command, on `jobs` worker threads when given.
pub fn run_command(spec: &ExperimentSpec, jobs: Option<usize>) -> Result<RunOutput> {
    spec.validate()?;
    let command = spec
        .command
        .ok_or_else(|| Error::param("command", "no command given"))?;
    let start = Instant::now();
    let payload = match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::param("jobs", e.to_string()))?
            .install(|| dispatch(spec, command))?,
        None => dispatch(spec, command)?,
    };
    let bytes = payload.render(spec.output_format)?;
    let envelope = ResultEnvelope {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command,
        config_digest: config_digest(spec),
        base_seed: spec.base_seed,
        seed_mixing: "splitmix64".into(),
        run_seeds: spec.options().ensemble.run_seeds(),
        rng: "ChaCha8 (rand_chacha), one stream per purpose".into(),
        records: payload.len(),
        payload_digest: hex(&Sha256::digest(&bytes)),
        wall_time_secs: start.elapsed().as_secs_f64(),
        spec: spec.clone(),
    };
    Ok(RunOutput { envelope, payload, bytes })
}
