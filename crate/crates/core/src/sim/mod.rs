//! Discrete-event engine: random network, cost ledger with decay, overload
//! and fault deaths, opportunistic routing.

pub mod config;
pub mod cost;
pub mod engine;
pub mod network;
pub mod stats;

pub use config::TonConfig;
pub use cost::{subtxn_cost, total_txn_cost, CostLedger};
pub use engine::{
    add_subtxn_cost, run_simulation, run_simulation_with, schedule_faults, ChargeOutcome,
    Simulation, TraceEntry, Transaction, TxnStatus,
};
pub use network::{DisableCause, Network, NodeId, NodeState, Route};
pub use stats::{AbortCounts, AbortReason, DeathRecord, RunStats, WindowRecord};
