//! Least-squares fits of the empirical resilience laws.

pub mod linalg;
pub mod lm;
pub mod models;

pub use lm::{lm_fit, r_squared, Bound, LmFit, LmOptions, Model};
pub use models::{
    capacity_law, delta_relation_check, fit_capacity_law, fit_m0_vs_rho0, fit_r0_vs_r1,
    fit_surface, fit_surface_points, m0_from_rho0, ols, predict_ln_r1, r0_from_r1,
    CapacityLawFit, M0Fit, R0R1Fit, SurfaceFit,
};
