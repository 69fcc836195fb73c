//! Parameter sweeps: the (alpha, psi0) surface and the capacity series.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ensemble::mean_stderr;
use super::profile::{find_r0, find_r1, per_seed_r1, resilience_profile, ExperimentOptions};
use super::search::{SearchFlag, Threshold};
use crate::error::{Error, Result};
use crate::sim::TonConfig;

/// One cell of the (alpha, psi0) sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSample {
    pub alpha: f64,
    pub psi0: f64,
    pub ln_r1: f64,
    pub ln_r0: Option<f64>,
    /// Standard error of `ln_r1` over the per-seed choke thresholds.
    pub stderr: f64,
    pub r1_flag: Option<SearchFlag>,
    pub r0_flag: Option<SearchFlag>,
}

/// Log of a located rate; a threshold flagged as always-true reports the
/// lowest rate probed instead of zero.
fn ln_rate(t: &Threshold) -> f64 {
    match t.flag {
        Some(SearchFlag::AlwaysTrue) => t.upper.ln(),
        _ => t.rate.ln(),
    }
}

/// Measure `ln r1` (and `ln r0` when `with_r0`) on every `(alpha, psi0)`
/// pair, row-major in `alpha`.
pub fn grid_sweep(
    template: &TonConfig,
    alpha_grid: &[f64],
    psi0_grid: &[f64],
    opts: &ExperimentOptions,
    with_r0: bool,
) -> Result<Vec<GridSample>> {
    if alpha_grid.is_empty() || psi0_grid.is_empty() {
        return Err(Error::param("grid", "alpha and psi0 grids must be non-empty"));
    }
    if let Some(a) = alpha_grid.iter().find(|&&a| !(a > 0.0)) {
        return Err(Error::param("alpha_grid", format!("values must be positive, got {a}")));
    }
    if let Some(p) = psi0_grid.iter().find(|&&p| !(p > 0.0)) {
        return Err(Error::param("psi0_grid", format!("values must be positive, got {p}")));
    }
    let cells: Vec<(f64, f64)> = alpha_grid
        .iter()
        .flat_map(|&a| psi0_grid.iter().map(move |&p| (a, p)))
        .collect();
    cells
        .into_par_iter()
        .map(|(alpha, psi0)| {
            let cfg = TonConfig { alpha, psi0, ..template.clone() };
            let r1 = find_r1(&cfg, opts)?;
            let seeds = per_seed_r1(&cfg, opts)?;
            let logs: Vec<f64> = seeds.iter().map(ln_rate).collect();
            let (_, stderr) = mean_stderr(&logs);
            let r0 = if with_r0 { Some(find_r0(&cfg, opts)?) } else { None };
            Ok(GridSample {
                alpha,
                psi0,
                ln_r1: ln_rate(&r1),
                ln_r0: r0.as_ref().map(ln_rate),
                stderr,
                r1_flag: r1.flag,
                r0_flag: r0.and_then(|t| t.flag),
            })
        })
        .collect()
}

/// Resilience profile at one node capacity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacitySample {
    pub capacity: f64,
    pub r0: f64,
    pub r1: f64,
    pub rho0: f64,
    pub m0: Option<f64>,
    pub m0_stderr: Option<f64>,
    pub r0_flag: Option<SearchFlag>,
    pub r1_flag: Option<SearchFlag>,
}

/// Profile the template at each capacity.
pub fn capacity_sweep(
    template: &TonConfig,
    capacities: &[f64],
    opts: &ExperimentOptions,
    with_m0: bool,
) -> Result<Vec<CapacitySample>> {
    if capacities.is_empty() {
        return Err(Error::param("capacity_grid", "must be non-empty"));
    }
    capacities
        .par_iter()
        .map(|&capacity| {
            let cfg = TonConfig { capacity, ..template.clone() };
            let p = resilience_profile(&cfg, opts, with_m0)?;
            Ok(CapacitySample {
                capacity,
                r0: p.r0,
                r1: p.r1,
                rho0: p.rho0,
                m0: p.m0,
                m0_stderr: p.m0_stderr,
                r0_flag: p.r0_flag,
                r1_flag: p.r1_flag,
            })
        })
        .collect()
}
