//! Command-line front end: spec loading, dispatch and output.
//!
//! Every command writes its records to `--out` (stdout when absent) and a
//! JSON envelope to `<out>.envelope.json` (stderr when writing to stdout).

pub mod emit;
pub mod run;
pub mod spec;

use std::path::PathBuf;

use clap::Parser;

pub use emit::{emit, format_float, read_table, render, Record, Value};
pub use run::{
    config_digest, load_surface, run_command, FitRecord, FlattenRecord, Payload, PrimeRecord,
    ResultEnvelope, RunOutput, SimRecord,
};
pub use spec::{
    load_spec, parse_spec, Command, ExperimentSection, ExperimentSpec, FitModel, FitSection,
    FlattenSection, Format, Grids, Overrides,
};

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "tonsim", version, about = "Transaction-oriented network simulator")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// Experiment spec (TOML). Built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one spec key, e.g. `--set density=0.1` or `--set grids.alpha=[0.8,1.2]`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    #[arg(long, global = true)]
    pub seeds: Option<usize>,
    #[arg(long, global = true)]
    pub base_seed: Option<u64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, global = true)]
    pub format: Option<Format>,
    /// Worker threads.
    #[arg(long, env = "TONSIM_JOBS", global = true)]
    pub jobs: Option<usize>,
}

fn envelope_path(out: &std::path::Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".envelope.json");
    PathBuf::from(s)
}

/// Parse, run, write. Returns the resolved run on success.
pub fn execute(cli: &Cli) -> Result<RunOutput> {
    let overrides = Overrides {
        command: Some(cli.command),
        set: cli.set.clone(),
        seeds: cli.seeds,
        base_seed: cli.base_seed,
        output_path: cli.out.clone(),
        output_format: cli.format,
    };
    let spec = load_spec(cli.config.as_deref(), &overrides)?;
    let output = run_command(&spec, cli.jobs)?;
    let envelope = serde_json::to_string_pretty(&output.envelope)
        .map_err(|e| Error::param("envelope", e.to_string()))?;
    match &spec.output_path {
        Some(p) => {
            emit::write_payload(&output.bytes, Some(p))?;
            let ep = envelope_path(p);
            std::fs::write(&ep, envelope + "\n").map_err(|e| Error::io(&ep, e))?;
        }
        None => {
            emit::write_payload(&output.bytes, None)?;
            eprintln!("{}", serde_json::to_string(&output.envelope).unwrap_or_default());
        }
    }
    if !output.payload.has_results() {
        return Err(Error::SearchFailed(
            "no threshold was located below the rate ceiling".into(),
        ));
    }
    Ok(output)
}

/// Process entry point; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
