//! Simulation invariant checks shared by the property suite and the
//! acceptance target.

#![allow(dead_code)]

use std::collections::{HashMap, HashSet};

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use tonsim::experiments::ChokeCriterion;
use tonsim::sim::{run_simulation, NodeState, Simulation, TonConfig, TraceEntry, TxnStatus};

/// Small random networks with every knob varied, faults on or off.
pub fn small_config() -> impl Strategy<Value = TonConfig> {
    (
        (3usize..40, prop_oneof![Just(0.0), Just(1.0), 0.0f64..1.0], 0.5f64..30.0, 1usize..12),
        (0.1f64..3.0, 0.5f64..1.6, 1.0f64..60.0, 0.0f64..20.0),
        (proptest::option::of(5.0f64..500.0), 20.0f64..300.0, any::<u64>()),
    )
        .prop_map(|((n, d, c, l), (psi0, alpha, h, r), (tf, s, seed))| TonConfig {
            n_nodes: n,
            density: d,
            capacity: c,
            txn_length: l,
            subtxn_time: 1.0,
            sim_duration: s,
            decay_time: h,
            psi0,
            alpha,
            injection_rate: r,
            fault_mean_delay: tf,
            seed,
        })
}

pub fn check_determinism(cfg: &TonConfig) -> Result<(), TestCaseError> {
    prop_assert_eq!(run_simulation(cfg).unwrap(), run_simulation(cfg).unwrap());
    Ok(())
}

/// Step a traced run and check capacity safety, monotone death, routing
/// exclusion, conservation and commit length.
pub fn check_traced_run(cfg: &TonConfig) -> Result<(), TestCaseError> {
    let mut sim = Simulation::new(cfg, &ChokeCriterion::default()).unwrap();
    sim.enable_trace();
    let n = cfg.n_nodes as u32;
    let mut dead: HashSet<u32> = HashSet::new();
    let mut hops: HashMap<u64, u32> = HashMap::new();
    let mut states: Vec<NodeState> = (0..n).map(|v| sim.network().state(v)).collect();
    while sim.step() {
        for entry in sim.drain_trace() {
            match entry {
                TraceEntry::Hop { txn, from, to, .. } => {
                    prop_assert!(!dead.contains(&to), "hop onto disabled node {}", to);
                    if let Some(f) = from {
                        prop_assert_ne!(f, to);
                        prop_assert!(sim.network().neighbors(f).contains(&to));
                    }
                    *hops.entry(txn).or_default() += 1;
                }
                TraceEntry::Death { node, .. } => {
                    prop_assert!(dead.insert(node), "node {} died twice", node);
                }
                _ => {}
            }
        }
        for v in 0..n {
            let now = sim.network().state(v);
            if states[v as usize] != NodeState::Alive {
                prop_assert_eq!(now, states[v as usize]);
            }
            states[v as usize] = now;
            if now == NodeState::Alive {
                prop_assert!(sim.ledger().xi(v as usize) < cfg.capacity);
            }
        }
    }
    let txns = sim.transactions().to_vec();
    let stats = sim.run();
    prop_assert_eq!(stats.injected, stats.committed + stats.aborted + stats.in_flight_at_end);
    for t in &txns {
        match t.status {
            TxnStatus::Committed => {
                prop_assert_eq!(t.completed_subtxns() as usize, cfg.txn_length);
                prop_assert_eq!(hops[&t.id] as usize, cfg.txn_length);
            }
            TxnStatus::Aborted(_) => prop_assert!((t.completed_subtxns() as usize) < cfg.txn_length),
            TxnStatus::InFlight => {}
        }
    }
    Ok(())
}
