//! Two-part subtransaction cost model and the exponential decay of a node's
//! accumulated cost.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Cost charged by subtransaction `index` (1-based): the transient part
/// `psi0` plus the long-term overhead `psi0 * (alpha^(index-1) - 1)`.
pub fn subtxn_cost<T: Scalar>(index: usize, len: usize, psi0: T, alpha: T) -> Result<T> {
    if index < 1 || index > len {
        return Err(Error::param(
            "index",
            format!("subtransaction index {index} outside 1..={len}"),
        ));
    }
    Ok(psi0 * alpha.powi((index - 1) as i32))
}

/// Geometric sum of `n` terms of ratio `alpha`, `(alpha^n - 1) / (alpha - 1)`,
/// with the `alpha = 1` limit `n`.
pub fn geometric_sum<T: Scalar>(alpha: T, n: usize) -> T {
    let nf = T::from_usize_lossy(n);
    if alpha == T::one() {
        return nf;
    }
    let d = alpha - T::one();
    if d.abs() >= T::lit(0.01) {
        return (alpha.powi(n as i32) - T::one()) / d;
    }
    // expm1/ln_1p keep precision for alpha close to one.
    (nf * d.ln_1p()).exp_m1() / d
}

/// Total cost of a committed transaction of length `len`.
pub fn total_txn_cost<T: Scalar>(psi0: T, alpha: T, len: usize) -> T {
    psi0 * geometric_sum(alpha, len)
}

/// Decay factor over an interval `dt` with decay time `h`.
pub fn decay_factor<T: Scalar>(dt: T, h: T) -> T {
    (-dt / h).exp()
}

/// Per-node decayed cumulative cost with the timestamp of the last decay.
#[derive(Debug, Clone, PartialEq)]
pub struct CostLedger<T: Scalar = f64> {
    xi: Vec<T>,
    last_decay: Vec<T>,
    decay_time: T,
}

impl<T: Scalar> CostLedger<T> {
    pub fn new(n_nodes: usize, decay_time: T) -> Self {
        CostLedger {
            xi: vec![T::zero(); n_nodes],
            last_decay: vec![T::zero(); n_nodes],
            decay_time,
        }
    }

    /// Build a ledger with preset costs, all last decayed at time zero.
    pub fn with_costs(costs: Vec<T>, decay_time: T) -> Self {
        let n = costs.len();
        CostLedger {
            xi: costs,
            last_decay: vec![T::zero(); n],
            decay_time,
        }
    }

    pub fn xi(&self, node: usize) -> T {
        self.xi[node]
    }

    pub fn last_decay_time(&self, node: usize) -> T {
        self.last_decay[node]
    }

    pub fn decay_time(&self) -> T {
        self.decay_time
    }

    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    /// Bring `node` forward to `now`, returning the decayed cost.
    ///
    /// # Panics
    ///
    /// If `now` precedes the node's last decay time: the clock never runs
    /// backwards.
    pub fn apply_decay(&mut self, node: usize, now: T) -> T {
        let t_d = self.last_decay[node];
        assert!(
            now >= t_d,
            "clock moved backwards at node {node}: {now} < {t_d}"
        );
        if now > t_d {
            self.xi[node] = self.xi[node] * decay_factor(now - t_d, self.decay_time);
            self.last_decay[node] = now;
        }
        self.xi[node]
    }

    /// Decay, then add `cost`. Returns the new cumulative cost.
    pub fn charge(&mut self, node: usize, cost: T, now: T) -> T {
        self.apply_decay(node, now);
        self.xi[node] = self.xi[node] + cost;
        self.xi[node]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn subtxn_cost_examples() {
        assert_eq!(subtxn_cost(1, 10, 2.0, 3.0).unwrap(), 2.0);
        assert_eq!(subtxn_cost(3, 10, 1.0, 2.0).unwrap(), 4.0);
        assert_eq!(subtxn_cost(7, 10, 5.0, 1.0).unwrap(), 5.0);
        assert!(subtxn_cost(0, 10, 1.0, 2.0).is_err());
        assert!(subtxn_cost(11, 10, 1.0, 2.0).is_err());
    }

    #[test]
    fn total_cost_examples() {
        assert_eq!(total_txn_cost(1.0, 1.0, 10), 10.0);
        assert!(rel(total_txn_cost(1.0, 2.0, 3), 7.0) < 1e-12);
        assert!(rel(total_txn_cost(2.0, 0.5, 2), 3.0) < 1e-12);
        assert!(rel(total_txn_cost(1.0f32, 2.0, 3) as f64, 7.0) < 1e-6);
    }

    #[test]
    fn geometric_sum_near_one_is_continuous() {
        let at_one = geometric_sum(1.0, 10);
        for a in [1.0 - 1e-9, 1.0 + 1e-9] {
            assert!(rel(geometric_sum(a, 10), at_one) < 1e-7);
        }
    }

    #[test]
    fn decay_examples() {
        let mut ledger = CostLedger::with_costs(vec![10.0, 7.0, 5.0], 30.0);
        assert!(rel(ledger.apply_decay(0, 30.0), 10.0 * (-1.0f64).exp()) < 1e-12);
        assert_eq!(ledger.apply_decay(1, 0.0), 7.0);
        let v = ledger.apply_decay(2, 300.0);
        assert!(rel(v, 5.0 * (-10.0f64).exp()) < 1e-12);
        assert!((v - 2.27e-4).abs() < 1e-6);
        assert_eq!(ledger.last_decay_time(2), 300.0);
    }

    #[test]
    #[should_panic(expected = "clock moved backwards")]
    fn decay_rejects_backwards_clock() {
        let mut ledger = CostLedger::with_costs(vec![1.0], 30.0);
        ledger.apply_decay(0, 5.0);
        ledger.apply_decay(0, 4.0);
    }

    #[test]
    fn charge_decays_first() {
        let mut ledger = CostLedger::with_costs(vec![10.0], 30.0);
        let v = ledger.charge(0, 1.0, 30.0);
        assert!(rel(v, 10.0 * (-1.0f64).exp() + 1.0) < 1e-12);
    }
}
