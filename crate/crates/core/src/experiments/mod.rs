//! Resilience measurements built on ensembles of simulation runs.

pub mod choke;
pub mod ensemble;
pub mod grid;
pub mod profile;
pub mod search;

pub use choke::{detect_choke, ChokeCriterion, ChokeOutcome};
pub use ensemble::{mean_stderr, Ensemble, Pooled};
pub use grid::{capacity_sweep, grid_sweep, CapacitySample, GridSample};
pub use profile::{
    behaviorally_equivalent, fault_order, find_m0, find_r0, find_r1, m0_fault_delay, m0_under_fault_ramp, per_seed_r1,
    r1_rel_diff, rate_guess, resilience_profile, ExperimentOptions, M0Estimate,
    ResilienceProfile,
};
pub use search::{bisect_rate, Probe, SearchFlag, SearchOptions, Threshold};
