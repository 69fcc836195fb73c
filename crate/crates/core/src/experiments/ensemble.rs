//! Seeded ensembles of independent runs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::choke::ChokeCriterion;
use crate::error::Result;
use crate::rng::mix_seed;
use crate::sim::{run_simulation_with, RunStats, TonConfig};

/// Seed set of an ensemble: run `i` uses `mix_seed(base_seed, i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub seeds: usize,
    pub base_seed: u64,
}

impl Default for Ensemble {
    fn default() -> Self {
        Ensemble { seeds: 8, base_seed: 0 }
    }
}

impl Ensemble {
    pub fn new(seeds: usize, base_seed: u64) -> Self {
        Ensemble { seeds, base_seed }
    }

    pub fn run_seed(&self, index: usize) -> u64 {
        mix_seed(self.base_seed, index as u64)
    }

    pub fn run_seeds(&self) -> Vec<u64> {
        (0..self.seeds).map(|i| self.run_seed(i)).collect()
    }

    /// Run every member at `config` (its `seed` field is replaced).
    /// Runs execute on the rayon pool; results come back in seed order.
    pub fn run(&self, config: &TonConfig, criterion: &ChokeCriterion) -> Result<Vec<RunStats>> {
        config.validate()?;
        self.run_seeds()
            .into_par_iter()
            .map(|seed| {
                let cfg = TonConfig { seed, ..config.clone() };
                run_simulation_with(&cfg, criterion)
            })
            .collect()
    }
}

/// Pooled counts over an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pooled {
    pub runs: usize,
    pub injected: u64,
    pub aborted: u64,
    pub choked: usize,
}

impl Pooled {
    pub fn of(runs: &[RunStats]) -> Self {
        Pooled {
            runs: runs.len(),
            injected: runs.iter().map(|r| r.injected).sum(),
            aborted: runs.iter().map(|r| r.aborted).sum(),
            choked: runs.iter().filter(|r| r.choke_time.is_some()).count(),
        }
    }

    pub fn abort_fraction(&self) -> f64 {
        if self.injected == 0 {
            0.0
        } else {
            self.aborted as f64 / self.injected as f64
        }
    }

    /// Abort threshold: one in a million, but never less than a single
    /// abort over everything the ensemble injected.
    pub fn abort_threshold(&self) -> f64 {
        if self.injected == 0 {
            f64::INFINITY
        } else {
            (1e-6f64).max(1.0 / self.injected as f64)
        }
    }

    pub fn aborts_reached(&self) -> bool {
        self.injected > 0 && self.abort_fraction() >= self.abort_threshold()
    }

    /// Strict majority of runs choked.
    pub fn majority_choked(&self) -> bool {
        2 * self.choked > self.runs
    }
}

/// Mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pooled_thresholds() {
        let p = Pooled { runs: 8, injected: 1000, aborted: 1, choked: 4 };
        assert!(p.aborts_reached());
        assert!(!p.majority_choked());
        let q = Pooled { runs: 8, injected: 10_000_000, aborted: 5, choked: 5 };
        assert!(!q.aborts_reached());
        assert!(q.majority_choked());
        assert!(!Pooled::default().aborts_reached());
    }

    #[test]
    fn stderr_of_constant_is_zero() {
        assert_eq!(mean_stderr(&[2.0, 2.0, 2.0]), (2.0, 0.0));
        let (m, s) = mean_stderr(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ensemble_seeds_are_distinct() {
        let seeds = Ensemble::new(16, 9).run_seeds();
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 16);
    }
}
