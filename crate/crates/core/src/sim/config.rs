use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of one network / cost scenario.
///
/// Time quantities share one unit; by default one subtransaction lasts one
/// unit and the decay time is thirty of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TonConfig {
    pub n_nodes: usize,
    /// Edge probability of the random graph.
    pub density: f64,
    /// Node capacity, in cost units.
    pub capacity: f64,
    /// Subtransactions per master transaction.
    pub txn_length: usize,
    pub subtxn_time: f64,
    pub sim_duration: f64,
    pub decay_time: f64,
    /// Transient cost of one subtransaction.
    pub psi0: f64,
    /// Long-term impact factor.
    pub alpha: f64,
    /// Mean transaction injection rate.
    pub injection_rate: f64,
    /// Mean delay before a node's internal fault; `None` disables faults.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fault_mean_delay: Option<f64>,
    pub seed: u64,
}

impl Default for TonConfig {
    fn default() -> Self {
        TonConfig {
            n_nodes: 1000,
            density: 0.5,
            capacity: 10.0,
            txn_length: 10,
            subtxn_time: 1.0,
            sim_duration: 36_500.0,
            decay_time: 30.0,
            psi0: 1.0,
            alpha: 1.0,
            injection_rate: 1.0,
            fault_mean_delay: None,
            seed: 0,
        }
    }
}

impl TonConfig {
    /// Reduced setting used for desk-scale experiments: 200 nodes, 3,650
    /// time units.
    pub fn desk() -> Self {
        TonConfig {
            n_nodes: 200,
            sim_duration: 3_650.0,
            ..TonConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn positive(name: &'static str, v: f64) -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(name, format!("must be positive and finite, got {v}")))
            }
        }
        if self.n_nodes < 2 {
            return Err(Error::param("n_nodes", format!("must be at least 2, got {}", self.n_nodes)));
        }
        // Zero density is accepted as a degenerate edgeless network.
        if !(0.0..=1.0).contains(&self.density) {
            return Err(Error::param("density", format!("must lie in [0, 1], got {}", self.density)));
        }
        positive("capacity", self.capacity)?;
        if self.txn_length < 1 {
            return Err(Error::param("txn_length", "must be at least 1"));
        }
        positive("subtxn_time", self.subtxn_time)?;
        positive("sim_duration", self.sim_duration)?;
        positive("decay_time", self.decay_time)?;
        if !(self.psi0 >= 0.0 && self.psi0.is_finite()) {
            return Err(Error::param("psi0", format!("must be non-negative, got {}", self.psi0)));
        }
        positive("alpha", self.alpha)?;
        if !(self.injection_rate >= 0.0 && self.injection_rate.is_finite()) {
            return Err(Error::param(
                "injection_rate",
                format!("must be non-negative, got {}", self.injection_rate),
            ));
        }
        if let Some(tf) = self.fault_mean_delay {
            positive("fault_mean_delay", tf)?;
        }
        Ok(())
    }

    /// Total cost charged by one committed transaction.
    pub fn txn_cost(&self) -> f64 {
        super::cost::total_txn_cost(self.psi0, self.alpha, self.txn_length)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        TonConfig::default().validate().unwrap();
        TonConfig::desk().validate().unwrap();
    }

    #[test]
    fn rejects_out_of_range_fields() {
        let bad = [
            TonConfig { n_nodes: 1, ..TonConfig::default() },
            TonConfig { density: 1.5, ..TonConfig::default() },
            TonConfig { capacity: 0.0, ..TonConfig::default() },
            TonConfig { txn_length: 0, ..TonConfig::default() },
            TonConfig { decay_time: -1.0, ..TonConfig::default() },
            TonConfig { psi0: -0.1, ..TonConfig::default() },
            TonConfig { alpha: 0.0, ..TonConfig::default() },
            TonConfig { fault_mean_delay: Some(0.0), ..TonConfig::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn zero_density_and_rate_are_legal() {
        let cfg = TonConfig { density: 0.0, injection_rate: 0.0, ..TonConfig::default() };
        cfg.validate().unwrap();
    }
}
