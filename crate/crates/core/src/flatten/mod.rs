//! Cost flattening: replace `(alpha, psi0)` by the flat `(1, psi0')` that
//! keeps the critical rate, and locate the most profitable `alpha`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{
    behaviorally_equivalent, r1_rel_diff, resilience_profile, ExperimentOptions, ResilienceProfile,
};
use crate::fitting::{predict_ln_r1, SurfaceFit};
use crate::scalar::Scalar;
use crate::sim::{total_txn_cost, TonConfig};

/// Points in the coarse scan that precedes the golden-section search.
pub const PRESCAN_POINTS: usize = 32;

/// Default relative tolerance of the equivalence check.
pub const DEFAULT_EQUIVALENCE_TOL: f64 = 0.15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatteningResult<T> {
    pub psi0_prime: T,
    pub psi_ratio: T,
    pub alpha: T,
    pub psi0: T,
    pub txn_length: usize,
    pub surface: SurfaceFit<T>,
    pub ln_r1_target: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrimeFactor<T> {
    pub alpha_prime: T,
    pub psi_at_peak: T,
    pub txn_length: usize,
}

/// Flat upfront cost whose network reaches `ln_r1` on the fitted surface.
pub fn flat_cost<T: Scalar>(fit: &SurfaceFit<T>, ln_r1: T) -> Result<T> {
    if !(fit.big_a < T::zero()) {
        return Err(Error::InvalidSurface(format!("A must be negative, got {}", fit.big_a)));
    }
    if fit.b_psi == T::zero() {
        return Err(Error::InvalidSurface("B_psi must be non-zero".into()));
    }
    if ln_r1 > fit.c {
        return Err(Error::InfeasibleRate { ln_r1: ln_r1.to_f64_lossy(), c: fit.c.to_f64_lossy() });
    }
    let denom = -fit.big_a * fit.alpha_factor(T::one());
    Ok(((fit.c - ln_r1) / denom).powf(T::one() / fit.b_psi))
}

/// Ratio of the original total cost to the flat one, `S_L(alpha) psi0 / (L psi0')`.
pub fn flattening_ratio<T: Scalar>(psi0: T, alpha: T, txn_length: usize, psi0_prime: T) -> Result<T> {
    if !(psi0_prime > T::zero()) {
        return Err(Error::param("psi0_prime", format!("must be positive, got {psi0_prime}")));
    }
    if txn_length == 0 {
        return Err(Error::param("txn_length", "must be at least 1"));
    }
    if !(alpha > T::zero()) {
        return Err(Error::param("alpha", format!("must be positive, got {alpha}")));
    }
    Ok(total_txn_cost(psi0, alpha, txn_length) / (T::from_usize_lossy(txn_length) * psi0_prime))
}

/// Flatten `(alpha, psi0)` against `fit`, targeting `ln_r1_target`.
pub fn flatten_to<T: Scalar>(
    fit: &SurfaceFit<T>,
    alpha: T,
    psi0: T,
    txn_length: usize,
    ln_r1_target: T,
) -> Result<FlatteningResult<T>> {
    let psi0_prime = flat_cost(fit, ln_r1_target)?;
    let psi_ratio = flattening_ratio(psi0, alpha, txn_length, psi0_prime)?;
    Ok(FlatteningResult {
        psi0_prime,
        psi_ratio,
        alpha,
        psi0,
        txn_length,
        surface: *fit,
        ln_r1_target,
    })
}

/// Flatten `(alpha, psi0)` using the surface's own prediction as target.
pub fn flatten<T: Scalar>(
    fit: &SurfaceFit<T>,
    alpha: T,
    psi0: T,
    txn_length: usize,
) -> Result<FlatteningResult<T>> {
    flatten_to(fit, alpha, psi0, txn_length, predict_ln_r1(fit, alpha, psi0)?)
}

/// `psi(alpha)` on the fitted surface; `None` where the flat cost is not
/// a positive finite number.
pub fn psi_at<T: Scalar>(fit: &SurfaceFit<T>, psi0: T, txn_length: usize, alpha: T) -> Option<T> {
    let r = flatten(fit, alpha, psi0, txn_length).ok()?;
    (r.psi0_prime > T::zero() && r.psi_ratio.is_finite()).then_some(r.psi_ratio)
}

/// `(alpha, psi)` samples; infeasible points are skipped.
pub fn psi_curve<T: Scalar>(fit: &SurfaceFit<T>, psi0: T, txn_length: usize, alphas: &[T]) -> Vec<(T, T)> {
    alphas
        .iter()
        .filter_map(|&a| psi_at(fit, psi0, txn_length, a).map(|p| (a, p)))
        .collect()
}

/// Maximize `psi(alpha)` over `alpha_range` to within `tol`.
///
/// A coarse scan locates the best grid point; golden-section search then
/// refines inside its two neighbouring cells. Infeasible scan points are
/// dropped from the range.
pub fn prime_impact_factor<T: Scalar>(
    fit: &SurfaceFit<T>,
    psi0: T,
    txn_length: usize,
    alpha_range: (T, T),
    tol: T,
) -> Result<PrimeFactor<T>> {
    let (lo, hi) = alpha_range;
    if !(lo > T::zero() && hi > lo) {
        return Err(Error::EmptyRange(format!("alpha range ({lo}, {hi}) is empty or not positive")));
    }
    if !(tol > T::zero()) {
        return Err(Error::param("tol", "must be positive"));
    }
    let f = |a: T| psi_at(fit, psi0, txn_length, a);
    let step = (hi - lo) / T::from_usize_lossy(PRESCAN_POINTS - 1);
    let grid: Vec<T> = (0..PRESCAN_POINTS)
        .map(|i| if i + 1 == PRESCAN_POINTS { hi } else { lo + step * T::from_usize_lossy(i) })
        .collect();
    let values: Vec<Option<T>> = grid.iter().map(|&a| f(a)).collect();
    let best = values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (i, v)))
        .fold(None, |acc: Option<(usize, T)>, (i, v)| match acc {
            Some((_, bv)) if bv >= v => acc,
            _ => Some((i, v)),
        })
        .ok_or_else(|| Error::EmptyRange("psi is infeasible on the whole alpha range".into()))?;

    let (i, mut best_val) = best;
    let mut best_alpha = grid[i];
    let mut a = grid[i.saturating_sub(1)];
    let mut b = grid[(i + 1).min(PRESCAN_POINTS - 1)];
    let inv_phi = T::lit((5f64.sqrt() - 1.0) / 2.0);
    let eval = |x: T| f(x).unwrap_or(T::neg_infinity());
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = eval(x1);
    let mut f2 = eval(x2);
    while b - a > tol {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = eval(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = eval(x2);
        }
    }
    for (x, v) in [(x1, f1), (x2, f2)] {
        if v > best_val {
            best_val = v;
            best_alpha = x;
        }
    }
    Ok(PrimeFactor { alpha_prime: best_alpha, psi_at_peak: best_val, txn_length })
}

/// Outcome of simulating a network against its flattened counterpart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub original: ResilienceProfile,
    pub flattened: ResilienceProfile,
    pub psi0_prime: f64,
    pub r1_rel_diff: f64,
    pub rel_tol: f64,
    /// `r1` agrees within `rel_tol`.
    pub equivalent: bool,
    /// `r0` and `r1` both agree within `rel_tol`.
    pub profiles_equivalent: bool,
}

/// `config` with `alpha = 1` and `psi0 = psi0_prime`.
pub fn flattened_config(config: &TonConfig, psi0_prime: f64) -> TonConfig {
    TonConfig { alpha: 1.0, psi0: psi0_prime, ..config.clone() }
}

/// Measure both networks and compare them.
pub fn compare_flattened(
    config: &TonConfig,
    psi0_prime: f64,
    opts: &ExperimentOptions,
    rel_tol: f64,
) -> Result<EquivalenceReport> {
    let original = resilience_profile(config, opts, false)?;
    compare_with_profile(config, original, psi0_prime, opts, rel_tol)
}

fn compare_with_profile(
    config: &TonConfig,
    original: ResilienceProfile,
    psi0_prime: f64,
    opts: &ExperimentOptions,
    rel_tol: f64,
) -> Result<EquivalenceReport> {
    let flat = flattened_config(config, psi0_prime);
    let flattened = if flat == *config {
        original.clone()
    } else {
        resilience_profile(&flat, opts, false)?
    };
    let diff = r1_rel_diff(&original, &flattened);
    Ok(EquivalenceReport {
        profiles_equivalent: behaviorally_equivalent(&original, &flattened, rel_tol),
        equivalent: diff <= rel_tol,
        r1_rel_diff: diff,
        original,
        flattened,
        psi0_prime,
        rel_tol,
    })
}

/// Measure `config`, flatten it to the measured `ln r1` through `fit`, and
/// measure the flat network.
pub fn verify_flattening(
    config: &TonConfig,
    fit: &SurfaceFit<f64>,
    opts: &ExperimentOptions,
    rel_tol: f64,
) -> Result<EquivalenceReport> {
    if config.alpha == 1.0 {
        let profile = resilience_profile(config, opts, false)?;
        return compare_with_profile(config, profile, config.psi0, opts, rel_tol);
    }
    let original = resilience_profile(config, opts, false)?;
    if !(original.r1 > 0.0) {
        return Err(Error::SearchFailed("original network has no positive r1".into()));
    }
    let psi0_prime = flat_cost(fit, original.r1.ln())?;
    compare_with_profile(config, original, psi0_prime, opts, rel_tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn surface() -> SurfaceFit<f64> {
        SurfaceFit::new(-0.3, 0.9, 4.0, 1.0, -0.4, 4.0)
    }

    #[test]
    fn flat_cost_inverts_surface_at_unit_alpha() {
        let fit = surface();
        for psi0 in [0.25, 1.0, 3.7] {
            let y = predict_ln_r1(&fit, 1.0, psi0).unwrap();
            assert!((flat_cost(&fit, y).unwrap() - psi0).abs() < 1e-12);
        }
        assert_eq!(flat_cost(&fit, fit.c).unwrap(), 0.0);
    }

    #[test]
    fn flat_cost_errors() {
        let fit = surface();
        assert!(matches!(flat_cost(&fit, fit.c + 0.1), Err(Error::InfeasibleRate { .. })));
        let mut bad = fit;
        bad.big_a = 0.2;
        assert!(matches!(flat_cost(&bad, 1.0), Err(Error::InvalidSurface(_))));
    }

    #[test]
    fn ratio_examples() {
        assert_eq!(flattening_ratio(1.0, 1.0, 10, 1.0).unwrap(), 1.0);
        assert!((flattening_ratio(1.0f64, 2.0, 3, 7.0 / 3.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((flattening_ratio(2.0f64, 1.0, 10, 1.0).unwrap() - 2.0).abs() < 1e-12);
        assert!(flattening_ratio(1.0, 1.0, 10, 0.0).is_err());
    }

    #[test]
    fn ratio_is_continuous_at_unit_alpha() {
        let at_one = flattening_ratio(1.3f64, 1.0, 12, 0.7).unwrap();
        for a in [1.0 - 1e-6, 1.0 + 1e-6] {
            assert!((flattening_ratio(1.3, a, 12, 0.7).unwrap() - at_one).abs() < 1e-4);
        }
    }

    #[test]
    fn psi_is_one_at_unit_alpha() {
        let r = flatten(&surface(), 1.0, 1.5, 10).unwrap();
        assert!((r.psi_ratio - 1.0).abs() < 1e-12);
    }

    /// `d/d alpha ln S_L(alpha)` at `alpha`.
    fn dlog_sum(alpha: f64, l: usize) -> f64 {
        let s: f64 = (0..l).map(|k| alpha.powi(k as i32)).sum();
        let ds: f64 = (1..l).map(|k| k as f64 * alpha.powi(k as i32 - 1)).sum();
        ds / s
    }

    #[test]
    fn golden_section_finds_constructed_peak() {
        // Pick B_alpha so that d ln psi / d alpha vanishes at 0.9.
        let (l, b_psi, gamma, delta): (usize, f64, f64, f64) = (14, 0.9, 1.0, -0.6);
        let target: f64 = 0.9;
        let slope = 2.0 * (target + delta) / ((target + delta).powi(2) + gamma * gamma);
        let b_alpha = b_psi * dlog_sum(target, l) / slope;
        let fit = SurfaceFit::new(-0.3, b_psi, b_alpha, gamma, delta, 4.0);

        let dense: Vec<f64> = (0..=20_000).map(|i| 0.5 + i as f64 * 1e-4 * 0.5).collect();
        let oracle = dense
            .iter()
            .map(|&a| (a, psi_at(&fit, 1.0, l, a).unwrap()))
            .fold((0.0, f64::NEG_INFINITY), |b, p| if p.1 > b.1 { p } else { b });
        assert!((oracle.0 - target).abs() < 1e-3, "{oracle:?} b_alpha={b_alpha}");

        let tol = 1e-6;
        let pf = prime_impact_factor(&fit, 1.0, l, (0.5, 1.5), tol).unwrap();
        assert!((pf.alpha_prime - target).abs() < 1e-4, "{pf:?}");
        assert!(pf.psi_at_peak >= oracle.1 - 1e-12);
        assert!(pf.psi_at_peak >= psi_at(&fit, 1.0, l, 0.5).unwrap());
        assert!(pf.psi_at_peak >= psi_at(&fit, 1.0, l, 1.5).unwrap());
    }

    #[test]
    fn empty_range_is_an_error() {
        assert!(prime_impact_factor(&surface(), 1.0, 10, (1.0, 1.0), 1e-6).is_err());
    }
}
