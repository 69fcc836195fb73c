use serde::{Deserialize, Serialize};

use super::network::{DisableCause, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AbortReason {
    /// The host of the last completed subtransaction had no alive neighbor.
    AllNeighborsDisabled,
    /// The node hosting the running subtransaction was disabled.
    HostDied,
    /// No alive node was left to act as the transaction source.
    NoLiveSource,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbortCounts {
    pub all_neighbors_disabled: u64,
    pub host_died: u64,
    pub no_live_source: u64,
}

impl AbortCounts {
    pub(crate) fn bump(&mut self, reason: AbortReason) {
        match reason {
            AbortReason::AllNeighborsDisabled => self.all_neighbors_disabled += 1,
            AbortReason::HostDied => self.host_died += 1,
            AbortReason::NoLiveSource => self.no_live_source += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.all_neighbors_disabled + self.host_died + self.no_live_source
    }
}

/// Outcome counts over one sliding window of finalized transactions.
///
/// `start_time` is the finalization time of the oldest transaction in the
/// window, `end_time` that of the newest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub start_time: f64,
    pub end_time: f64,
    pub finalized: u32,
    pub committed: u32,
}

impl WindowRecord {
    pub fn commit_fraction(&self) -> f64 {
        if self.finalized == 0 {
            0.0
        } else {
            self.committed as f64 / self.finalized as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeathRecord {
    pub time: f64,
    pub node: NodeId,
    pub cause: DisableCause,
}

/// Measurements collected over one simulation run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunStats {
    pub n_nodes: usize,
    pub injected: u64,
    pub committed: u64,
    pub aborted: u64,
    pub aborted_by_reason: AbortCounts,
    pub in_flight_at_end: u64,
    pub nodes_disabled_overload: u64,
    pub nodes_disabled_fault: u64,
    pub window_records: Vec<WindowRecord>,
    /// Node deaths in event order.
    pub deaths: Vec<DeathRecord>,
    /// Time the last alive node was disabled, if that happened.
    pub all_dead_time: Option<f64>,
    pub choke_time: Option<f64>,
    /// Fraction of nodes disabled by any cause at `choke_time`.
    pub disabled_fraction_at_choke: Option<f64>,
    /// Fraction of nodes disabled by internal faults at `choke_time`.
    pub fault_fraction_at_choke: Option<f64>,
}

impl RunStats {
    pub fn abort_fraction(&self) -> f64 {
        if self.injected == 0 {
            0.0
        } else {
            self.aborted as f64 / self.injected as f64
        }
    }

    /// Fractions of nodes disabled (any cause, fault only) at time `t`,
    /// counting deaths that happened at or before `t`.
    pub fn disabled_fractions_at(&self, t: f64) -> (f64, f64) {
        let mut any = 0usize;
        let mut fault = 0usize;
        for d in self.deaths.iter().take_while(|d| d.time <= t) {
            any += 1;
            if d.cause == DisableCause::Fault {
                fault += 1;
            }
        }
        let n = self.n_nodes.max(1) as f64;
        (any as f64 / n, fault as f64 / n)
    }
}
