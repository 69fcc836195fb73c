//! Deterministic simulator of transaction-oriented networks (TONs) and the
//! experiment harness around it.
//!
//! * [`sim`] runs distributed transactions over an Erdős–Rényi network with a
//!   two-part (transient + long-term) subtransaction cost, exponential cost
//!   decay, overload deaths and internal faults.
//! * [`experiments`] measures the resilience thresholds `r0`, `r1` and the
//!   critical failed-node fraction `m0` by bisection over seeded ensembles.
//! * [`fitting`] fits the empirical resilience laws with Levenberg–Marquardt.
//! * [`flatten`] converts a surcharged or discounted cost model into an
//!   equivalent flat one and locates the most profitable impact factor.
//! * [`cli`] loads experiment specs and writes CSV / JSON records.
//!
//! The numeric layer ([`fitting`], [`flatten`], [`sim::cost`]) is generic over
//! the [`Scalar`] type; the aliases below pin it to `f64`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod experiments;
pub mod fitting;
pub mod flatten;
pub mod rng;
pub mod scalar;
pub mod sim;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision instantiations of the generic numeric types.
pub type SurfaceFit64 = fitting::SurfaceFit<f64>;
pub type CapacityLawFit64 = fitting::CapacityLawFit<f64>;
pub type R0R1Fit64 = fitting::R0R1Fit<f64>;
pub type M0Fit64 = fitting::M0Fit<f64>;
pub type FlatteningResult64 = flatten::FlatteningResult<f64>;
pub type PrimeFactor64 = flatten::PrimeFactor<f64>;
pub type LmFit64 = fitting::LmFit<f64>;
