//! Operational definition of a choked network.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::WindowRecord;

/// A run has choked once the committed fraction over a window of `window`
/// consecutive finalized transactions drops to `commit_floor` or below, or
/// once no alive node remains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChokeCriterion {
    pub window: usize,
    pub commit_floor: f64,
}

impl Default for ChokeCriterion {
    fn default() -> Self {
        ChokeCriterion {
            window: 1000,
            commit_floor: 0.01,
        }
    }
}

impl ChokeCriterion {
    pub fn validate(&self) -> Result<()> {
        if self.window < 1 {
            return Err(Error::param("window", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.commit_floor) {
            return Err(Error::param(
                "commit_floor",
                format!("must lie in [0, 1), got {}", self.commit_floor),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChokeOutcome {
    ChokedAt(f64),
    NotChoked,
}

impl ChokeOutcome {
    pub fn is_choked(&self) -> bool {
        matches!(self, ChokeOutcome::ChokedAt(_))
    }
}

/// Scan a run's window stream for the choke onset.
///
/// The onset of a choking window is the finalization time of its oldest
/// transaction. The earlier of that and `all_dead_time` wins.
pub fn detect_choke(
    windows: &[WindowRecord],
    all_dead_time: Option<f64>,
    criterion: &ChokeCriterion,
) -> ChokeOutcome {
    let by_window = windows
        .iter()
        .find(|w| w.commit_fraction() <= criterion.commit_floor)
        .map(|w| w.start_time);
    match (by_window, all_dead_time) {
        (Some(a), Some(b)) => ChokeOutcome::ChokedAt(a.min(b)),
        (Some(t), None) | (None, Some(t)) => ChokeOutcome::ChokedAt(t),
        (None, None) => ChokeOutcome::NotChoked,
    }
}
