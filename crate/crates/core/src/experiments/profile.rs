//! Resilience thresholds of one configuration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::choke::ChokeCriterion;
use super::ensemble::{mean_stderr, Ensemble, Pooled};
use super::search::{bisect_rate, SearchFlag, SearchOptions, Threshold};
use crate::error::Result;
use crate::rng::{SimRng, Stream};
use crate::sim::{schedule_faults, NodeId, Simulation, TonConfig};

/// Everything a threshold measurement needs besides the configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOptions {
    pub ensemble: Ensemble,
    pub search: SearchOptions,
    pub choke: ChokeCriterion,
    /// Mean fault delay for the `m0` runs when the configuration has none;
    /// `None` means a quarter of the simulated duration.
    pub m0_fault_delay: Option<f64>,
}

/// Starting point of the rate search: the rate at which the mean decayed
/// load of a node reaches 30% of its capacity.
pub fn rate_guess(config: &TonConfig) -> f64 {
    let cost = config.txn_cost();
    if cost > 0.0 {
        0.3 * config.capacity * config.n_nodes as f64 / (config.decay_time * cost)
    } else {
        1.0
    }
}

fn at_rate(config: &TonConfig, rate: f64) -> TonConfig {
    TonConfig { injection_rate: rate, ..config.clone() }
}

fn without_faults(config: &TonConfig) -> TonConfig {
    TonConfig { fault_mean_delay: None, ..config.clone() }
}

/// Lowest rate at which the ensemble-pooled abort fraction reaches
/// `max(1e-6, 1 / injected)`. Faults are switched off.
pub fn find_r0(config: &TonConfig, opts: &ExperimentOptions) -> Result<Threshold> {
    let base = without_faults(config);
    base.validate()?;
    bisect_rate(rate_guess(&base), &opts.search, |r| {
        let runs = opts.ensemble.run(&at_rate(&base, r), &opts.choke)?;
        Ok(Pooled::of(&runs).aborts_reached())
    })
}

/// Lowest rate at which a strict majority of the ensemble chokes.
pub fn find_r1(config: &TonConfig, opts: &ExperimentOptions) -> Result<Threshold> {
    let base = without_faults(config);
    base.validate()?;
    bisect_rate(rate_guess(&base), &opts.search, |r| {
        let runs = opts.ensemble.run(&at_rate(&base, r), &opts.choke)?;
        Ok(Pooled::of(&runs).majority_choked())
    })
}

/// Choke threshold of every ensemble member searched on its own.
pub fn per_seed_r1(config: &TonConfig, opts: &ExperimentOptions) -> Result<Vec<Threshold>> {
    let base = without_faults(config);
    base.validate()?;
    let guess = rate_guess(&base);
    opts.ensemble
        .run_seeds()
        .into_par_iter()
        .map(|seed| {
            bisect_rate(guess, &opts.search, |r| {
                let cfg = TonConfig { seed, ..at_rate(&base, r) };
                let run = crate::sim::run_simulation_with(&cfg, &opts.choke)?;
                Ok(run.choke_time.is_some())
            })
        })
        .collect()
}

/// Critical fraction of failed nodes at a fixed injection rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct M0Estimate {
    /// Ensemble mean of the per-run fractions; `None` when no run choked.
    pub m0: Option<f64>,
    pub stderr: Option<f64>,
    /// Per-run fractions, in seed order (`None` for runs that never choked).
    pub per_run: Vec<Option<f64>>,
}

impl M0Estimate {
    fn from_runs(per_run: Vec<Option<f64>>) -> Self {
        let xs: Vec<f64> = per_run.iter().flatten().copied().collect();
        let (m0, stderr) = if xs.is_empty() {
            (None, None)
        } else {
            let (m, s) = mean_stderr(&xs);
            (Some(m), Some(s))
        };
        M0Estimate { m0, stderr, per_run }
    }

    pub fn choked_runs(&self) -> usize {
        self.per_run.iter().filter(|x| x.is_some()).count()
    }
}

/// Nodes of one run ordered by their sampled fault times, earliest first.
pub fn fault_order(config: &TonConfig, mean_delay: f64) -> Vec<NodeId> {
    let cfg = TonConfig { fault_mean_delay: Some(mean_delay), ..config.clone() };
    let mut rng = SimRng::for_stream(config.seed, Stream::Faults);
    let mut faults = schedule_faults(&cfg, &mut rng);
    faults.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    faults.into_iter().map(|(node, _)| node).collect()
}

/// Does the run choke when its first `k` nodes in fault order are failed
/// from the start?
fn chokes_with_failed(
    config: &TonConfig,
    order: &[NodeId],
    k: usize,
    criterion: &ChokeCriterion,
) -> Result<bool> {
    let mut sim = Simulation::new(config, criterion)?;
    sim.fail_at_start(&order[..k]);
    Ok(sim.run().choke_time.is_some())
}

/// Smallest failed-node fraction that chokes the network at `rate`.
///
/// For every ensemble member the nodes are ranked by their sampled fault
/// times; the smallest prefix of that ranking whose failure makes the run
/// choke within the simulated duration is found by bisection. The result
/// is the mean over members.
pub fn find_m0(config: &TonConfig, rate: f64, opts: &ExperimentOptions) -> Result<M0Estimate> {
    config.validate()?;
    if !(rate > 0.0) {
        return Ok(M0Estimate::from_runs(vec![None; opts.ensemble.seeds]));
    }
    let delay = m0_fault_delay(config, opts);
    let base = TonConfig { injection_rate: rate, fault_mean_delay: None, ..config.clone() };
    let per_run = opts
        .ensemble
        .run_seeds()
        .into_par_iter()
        .map(|seed| {
            let cfg = TonConfig { seed, ..base.clone() };
            let order = fault_order(&cfg, delay);
            let n = order.len();
            if !chokes_with_failed(&cfg, &order, n, &opts.choke)? {
                return Ok(None);
            }
            let (mut lo, mut hi) = (0usize, n);
            if chokes_with_failed(&cfg, &order, 0, &opts.choke)? {
                return Ok(Some(0.0));
            }
            while hi - lo > 1 {
                let mid = (lo + hi) / 2;
                if chokes_with_failed(&cfg, &order, mid, &opts.choke)? {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            Ok(Some(hi as f64 / n as f64))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(M0Estimate::from_runs(per_run))
}

/// Fraction of fault-failed nodes at choke onset when faults arrive at
/// exponentially distributed times during a run at fixed `rate`.
///
/// This follows nodes failing one by one; the cascade lags behind the
/// faults, so the fraction overshoots [`find_m0`].
pub fn m0_under_fault_ramp(
    config: &TonConfig,
    rate: f64,
    opts: &ExperimentOptions,
) -> Result<M0Estimate> {
    let runs = if rate > 0.0 {
        opts.ensemble.run(&at_rate(config, rate), &opts.choke)?
    } else {
        Vec::new()
    };
    let mut per_run: Vec<Option<f64>> = runs.iter().map(|r| r.fault_fraction_at_choke).collect();
    per_run.resize(opts.ensemble.seeds, None);
    Ok(M0Estimate::from_runs(per_run))
}

/// Mean fault delay used to order (and, in the ramp variant, time) node
/// failures for the `m0` measurement.
pub fn m0_fault_delay(config: &TonConfig, opts: &ExperimentOptions) -> f64 {
    config
        .fault_mean_delay
        .or(opts.m0_fault_delay)
        .unwrap_or(config.sim_duration / 4.0)
}

/// `(r0, r1, rho0, m0)` of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResilienceProfile {
    pub r0: f64,
    pub r1: f64,
    pub rho0: f64,
    pub m0: Option<f64>,
    pub m0_stderr: Option<f64>,
    pub seeds_used: usize,
    /// Relative resolution of the rate searches.
    pub rel_resolution: f64,
    pub r0_flag: Option<SearchFlag>,
    pub r1_flag: Option<SearchFlag>,
}

impl ResilienceProfile {
    pub fn from_rates(r0: f64, r1: f64) -> Self {
        let r0 = r0.min(r1);
        ResilienceProfile {
            r0,
            r1,
            rho0: if r1 > 0.0 { r0 / r1 } else { 0.0 },
            m0: None,
            m0_stderr: None,
            seeds_used: 0,
            rel_resolution: 0.0,
            r0_flag: None,
            r1_flag: None,
        }
    }
}

/// Measure `r0`, `r1` and, when `with_m0`, `m0` at `r0`.
pub fn resilience_profile(
    config: &TonConfig,
    opts: &ExperimentOptions,
    with_m0: bool,
) -> Result<ResilienceProfile> {
    let t0 = find_r0(config, opts)?;
    let t1 = find_r1(config, opts)?;
    // A choking majority implies aborts, so r0 <= r1 up to search noise.
    let mut profile = ResilienceProfile::from_rates(t0.rate, t1.rate);
    profile.seeds_used = opts.ensemble.seeds;
    profile.rel_resolution = opts.search.rel_resolution;
    profile.r0_flag = t0.flag;
    profile.r1_flag = t1.flag;
    if with_m0 {
        let est = find_m0(config, profile.r0, opts)?;
        profile.m0 = est.m0;
        profile.m0_stderr = est.stderr;
    }
    Ok(profile)
}

fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Same `r0` and `r1` (and `m0` when both have one) within `rel_tol`.
pub fn behaviorally_equivalent(p: &ResilienceProfile, q: &ResilienceProfile, rel_tol: f64) -> bool {
    let m0_ok = match (p.m0, q.m0) {
        (Some(a), Some(b)) => rel_diff(a, b) <= rel_tol,
        _ => true,
    };
    rel_diff(p.r0, q.r0) <= rel_tol && rel_diff(p.r1, q.r1) <= rel_tol && m0_ok
}

/// Relative difference of the `r1` thresholds.
pub fn r1_rel_diff(p: &ResilienceProfile, q: &ResilienceProfile) -> f64 {
    rel_diff(p.r1, q.r1)
}
