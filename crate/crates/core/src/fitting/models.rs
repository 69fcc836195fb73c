//! The four empirical resilience laws and their fitters.

use serde::{Deserialize, Serialize};

use super::lm::{lm_fit, Bound, LmFit, LmOptions, Model};
use crate::error::{Error, Result};
use crate::experiments::{GridSample, SearchFlag};
use crate::rng::SimRng;
use crate::scalar::Scalar;

/// `r = A (C - 2)^beta`, fitted as `ln r = ln A + beta ln(C - 2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityLawFit<T> {
    #[serde(rename = "A")]
    pub a_coef: T,
    pub beta: T,
    pub goodness: T,
}

/// `r0 = a (sqrt(b^2 + r1^2) - b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct R0R1Fit<T> {
    pub a: T,
    pub b: T,
    pub goodness: T,
}

/// `m0 = dm - (dm - 1) sqrt(1 + (rho0 / lambda)^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct M0Fit<T> {
    pub delta_m: T,
    pub lambda: T,
    pub goodness: T,
}

/// Generalized hyperbola for the critical rate:
/// `ln r1 = A psi0^B_psi ((alpha + delta)^2 + gamma^2)^B_alpha + c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceFit<T> {
    #[serde(rename = "A")]
    pub big_a: T,
    #[serde(rename = "B_psi")]
    pub b_psi: T,
    #[serde(rename = "B_alpha")]
    pub b_alpha: T,
    pub gamma_alpha: T,
    pub delta_alpha: T,
    pub c: T,
    /// Coefficient of determination of the fit.
    pub goodness: T,
    /// False when no start reached the convergence test.
    pub converged: bool,
}

// ---------------------------------------------------------------------------
// Model forms

pub fn capacity_law<T: Scalar>(a_coef: T, beta: T, capacity: T) -> T {
    a_coef * (capacity - T::lit(2.0)).powf(beta)
}

pub fn r0_from_r1<T: Scalar>(a: T, b: T, r1: T) -> T {
    a * ((b * b + r1 * r1).sqrt() - b.abs())
}

pub fn m0_from_rho0<T: Scalar>(delta_m: T, lambda: T, rho0: T) -> T {
    let q = rho0 / lambda;
    delta_m - (delta_m - T::one()) * (T::one() + q * q).sqrt()
}

/// `(alpha + delta)^2 + gamma^2`.
fn alpha_term<T: Scalar>(alpha: T, gamma: T, delta: T) -> T {
    let s = alpha + delta;
    s * s + gamma * gamma
}

impl<T: Scalar> SurfaceFit<T> {
    pub fn new(big_a: T, b_psi: T, b_alpha: T, gamma_alpha: T, delta_alpha: T, c: T) -> Self {
        SurfaceFit {
            big_a,
            b_psi,
            b_alpha,
            gamma_alpha,
            delta_alpha,
            c,
            goodness: T::nan(),
            converged: true,
        }
    }

    fn from_params(p: &[T]) -> Self {
        Self::new(p[0], p[1], p[2], p[3], p[4], p[5])
    }

    fn params(&self) -> [T; 6] {
        [self.big_a, self.b_psi, self.b_alpha, self.gamma_alpha, self.delta_alpha, self.c]
    }

    /// `((alpha + delta)^2 + gamma^2)^B_alpha`.
    pub fn alpha_factor(&self, alpha: T) -> T {
        alpha_term(alpha, self.gamma_alpha, self.delta_alpha).powf(self.b_alpha)
    }
}

/// Evaluate the fitted surface at `(alpha, psi0)`.
pub fn predict_ln_r1<T: Scalar>(fit: &SurfaceFit<T>, alpha: T, psi0: T) -> Result<T> {
    if !(psi0 > T::zero()) {
        return Err(Error::InvalidDomain(format!("psi0 must be positive, got {psi0}")));
    }
    Ok(fit.big_a * psi0.powf(fit.b_psi) * fit.alpha_factor(alpha) + fit.c)
}

// ---------------------------------------------------------------------------
// Model trait adapters

struct LinearModel;

impl<T: Scalar> Model<T> for LinearModel {
    type X = T;
    fn n_params(&self) -> usize {
        2
    }
    fn eval(&self, x: &T, p: &[T]) -> T {
        p[0] + p[1] * *x
    }
}

struct R0R1Model;

impl<T: Scalar> Model<T> for R0R1Model {
    type X = T;
    fn n_params(&self) -> usize {
        2
    }
    fn eval(&self, x: &T, p: &[T]) -> T {
        r0_from_r1(p[0], p[1], *x)
    }
}

struct M0Model;

impl<T: Scalar> Model<T> for M0Model {
    type X = T;
    fn n_params(&self) -> usize {
        2
    }
    fn eval(&self, x: &T, p: &[T]) -> T {
        m0_from_rho0(p[0], p[1], *x)
    }
    fn canonicalize(&self, p: &mut [T]) {
        p[1] = p[1].abs();
    }
}

struct SurfaceModel;

impl<T: Scalar> Model<T> for SurfaceModel {
    type X = (T, T);
    fn n_params(&self) -> usize {
        6
    }
    fn eval(&self, x: &(T, T), p: &[T]) -> T {
        let (alpha, psi0) = *x;
        p[0] * psi0.powf(p[1]) * alpha_term(alpha, p[3], p[4]).powf(p[2]) + p[5]
    }
    fn canonicalize(&self, p: &mut [T]) {
        p[3] = p[3].abs();
    }
}

// ---------------------------------------------------------------------------
// Fitters

fn pick_best<T: Scalar>(fits: Vec<Result<LmFit<T>>>) -> Result<LmFit<T>> {
    let mut best: Option<LmFit<T>> = None;
    let mut first_err = None;
    for fit in fits {
        match fit {
            Ok(f) => {
                // Strictly lower cost wins; ties keep the earlier start.
                if best.as_ref().is_none_or(|b| f.cost < b.cost) {
                    best = Some(f);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.expect("at least one start"))
}

/// Ordinary least squares slope and intercept of `y` on `x`.
pub fn ols<T: Scalar>(xs: &[T], ys: &[T]) -> Result<(T, T)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::RankDeficient("need at least two points".into()));
    }
    let n = T::from_usize_lossy(xs.len());
    let mx = xs.iter().fold(T::zero(), |a, &x| a + x) / n;
    let my = ys.iter().fold(T::zero(), |a, &y| a + y) / n;
    let sxx = xs.iter().fold(T::zero(), |a, &x| a + (x - mx) * (x - mx));
    let sxy = xs
        .iter()
        .zip(ys)
        .fold(T::zero(), |a, (&x, &y)| a + (x - mx) * (y - my));
    let spread = xs.iter().fold(T::zero(), |a, &x| a.max((x - mx).abs()));
    if !(spread > T::epsilon() * mx.abs().max(T::one())) {
        return Err(Error::RankDeficient("abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Fit `r = A (C - 2)^beta` to `(capacity, rate)` pairs in log-log space.
pub fn fit_capacity_law<T: Scalar>(samples: &[(T, T)]) -> Result<CapacityLawFit<T>> {
    if samples.len() < 3 {
        return Err(Error::RankDeficient(format!(
            "capacity law needs at least 3 samples, got {}",
            samples.len()
        )));
    }
    let two = T::lit(2.0);
    if let Some((c, _)) = samples.iter().find(|(c, _)| !(*c > two)) {
        return Err(Error::InvalidDomain(format!("capacity must exceed 2, got {c}")));
    }
    if let Some((_, r)) = samples.iter().find(|(_, r)| !(*r > T::zero())) {
        return Err(Error::InvalidDomain(format!("rate must be positive, got {r}")));
    }
    let xs: Vec<T> = samples.iter().map(|(c, _)| (*c - two).ln()).collect();
    let ys: Vec<T> = samples.iter().map(|(_, r)| r.ln()).collect();
    let (slope, intercept) = ols(&xs, &ys)?;
    let fit = lm_fit(&LinearModel, &xs, &ys, None, &[intercept, slope], None, &LmOptions::default())?;
    Ok(CapacityLawFit {
        a_coef: fit.params[0].exp(),
        beta: fit.params[1],
        goodness: fit.goodness,
    })
}

/// Fit `r0 = a (sqrt(b^2 + r1^2) - b)` to `(r1, r0)` pairs.
pub fn fit_r0_vs_r1<T: Scalar>(samples: &[(T, T)]) -> Result<R0R1Fit<T>> {
    if samples.len() < 3 {
        return Err(Error::RankDeficient(format!(
            "need at least 3 samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|(r1, r0)| !(*r1 >= T::zero()) || !(*r0 >= T::zero())) {
        return Err(Error::InvalidDomain("rates must be non-negative".into()));
    }
    let xs: Vec<T> = samples.iter().map(|s| s.0).collect();
    let ys: Vec<T> = samples.iter().map(|s| s.1).collect();
    let first = xs[0];
    if xs.iter().all(|&x| x == first) {
        return Err(Error::RankDeficient("all r1 values are equal".into()));
    }
    let scale = xs.iter().fold(T::zero(), |a, &x| a.max(x));
    let bounds = [Bound::free(), Bound::new(T::zero(), T::infinity())];
    let starts = [0.1, 0.3, 1.0, 3.0, 10.0];
    let fits = starts
        .iter()
        .map(|&k| {
            let init = [T::one(), T::lit(k) * scale];
            lm_fit(&R0R1Model, &xs, &ys, None, &init, Some(&bounds), &LmOptions::default())
        })
        .collect();
    let best = pick_best(fits)?;
    Ok(R0R1Fit { a: best.params[0], b: best.params[1], goodness: best.goodness })
}

/// Fit `m0 = dm - (dm - 1) sqrt(1 + (rho0/lambda)^2)` to `(rho0, m0)` pairs.
pub fn fit_m0_vs_rho0<T: Scalar>(samples: &[(T, T)]) -> Result<M0Fit<T>> {
    if samples.len() < 3 {
        return Err(Error::RankDeficient(format!(
            "need at least 3 samples, got {}",
            samples.len()
        )));
    }
    let xs: Vec<T> = samples.iter().map(|s| s.0).collect();
    let ys: Vec<T> = samples.iter().map(|s| s.1).collect();
    if xs.iter().any(|&x| !(T::zero()..=T::one()).contains(&x)) {
        return Err(Error::InvalidDomain("rho0 must lie in [0, 1]".into()));
    }
    let first = xs[0];
    if xs.iter().all(|&x| x == first) {
        return Err(Error::RankDeficient("all rho0 values are equal".into()));
    }
    let mut fits = Vec::new();
    for dm in [1.1, 1.25, 1.5] {
        for lambda in [0.1, 0.2, 0.4] {
            let init = [T::lit(dm), T::lit(lambda)];
            fits.push(lm_fit(&M0Model, &xs, &ys, None, &init, None, &LmOptions::default()));
        }
    }
    let best = pick_best(fits)?;
    Ok(M0Fit { delta_m: best.params[0], lambda: best.params[1], goodness: best.goodness })
}

/// Slope of `m0` against `rho0` by ordinary least squares.
pub fn delta_relation_check<T: Scalar>(samples: &[(T, T)]) -> Result<T> {
    let xs: Vec<T> = samples.iter().map(|s| s.0).collect();
    let ys: Vec<T> = samples.iter().map(|s| s.1).collect();
    Ok(ols(&xs, &ys)?.0)
}

/// Smallest standard error used when weighting grid samples (half the
/// default 1% rate resolution, in log units).
pub const STDERR_FLOOR: f64 = 0.005;

/// Number of multi-start points for the surface fit.
pub const SURFACE_STARTS: usize = 16;

/// Start ranges `(lo, hi)` for `A` (log-uniform in |A|), `B_psi`,
/// `B_alpha`, `gamma`, `delta`, `c`.
const SURFACE_RANGES: [(f64, f64); 6] = [
    (-1.8, -0.0002),
    (0.5, 1.3),
    (1.0, 15.0),
    (0.5, 1.5),
    (-0.8, 0.0),
    (1.3, 5.5),
];

fn latin_hypercube(n: usize, dims: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = SimRng::new(seed);
    let mut out = vec![vec![0.0; dims]; n];
    for d in 0..dims {
        let mut strata: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.index(i + 1);
            strata.swap(i, j);
        }
        for (i, row) in out.iter_mut().enumerate() {
            row[d] = (strata[i] as f64 + rng.unit()) / n as f64;
        }
    }
    out
}

/// Starting points of the surface fit, in parameter order.
pub fn surface_starts(max_ln_r1: f64) -> Vec<[f64; 6]> {
    latin_hypercube(SURFACE_STARTS, 6, 0x5E_ED0F_5EED)
        .into_iter()
        .map(|u| {
            let mut p = [0.0; 6];
            for d in 0..6 {
                let (lo, hi) = SURFACE_RANGES[d];
                p[d] = if d == 0 {
                    -((-lo).ln() + u[d] * ((-hi).ln() - (-lo).ln())).exp()
                } else {
                    lo + u[d] * (hi - lo)
                };
            }
            // The ceiling c has to clear every observed ln r1.
            p[5] = p[5].max(max_ln_r1 + 0.1);
            p
        })
        .collect()
}

/// Fit the critical-rate surface to grid samples.
///
/// Cells whose threshold search hit the rate floor or ceiling carry no
/// located threshold and are left out. Samples are weighted by
/// `1 / max(stderr, STDERR_FLOOR)^2` when every sample carries a positive
/// standard error, uniformly otherwise.
pub fn fit_surface<T: Scalar>(samples: &[GridSample]) -> Result<SurfaceFit<T>> {
    fit_surface_points::<T>(
        &samples
            .iter()
            .filter(|s| !matches!(s.r1_flag, Some(SearchFlag::AlwaysTrue | SearchFlag::NeverTrue)))
            .map(|s| (s.alpha, s.psi0, s.ln_r1, s.stderr))
            .collect::<Vec<_>>(),
    )
}

/// [`fit_surface`] on raw `(alpha, psi0, ln_r1, stderr)` tuples.
pub fn fit_surface_points<T: Scalar>(points: &[(f64, f64, f64, f64)]) -> Result<SurfaceFit<T>> {
    if points.len() < 7 {
        return Err(Error::RankDeficient(format!(
            "surface has 6 parameters and needs at least 7 samples, got {}",
            points.len()
        )));
    }
    let distinct = |f: fn(&(f64, f64, f64, f64)) -> f64| {
        let mut v: Vec<f64> = points.iter().map(f).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v.len()
    };
    if distinct(|p| p.0) < 2 || distinct(|p| p.1) < 2 {
        return Err(Error::RankDeficient("samples must span both alpha and psi0".into()));
    }
    if points.iter().any(|p| !(p.1 > 0.0) || !p.2.is_finite()) {
        return Err(Error::InvalidDomain("psi0 must be positive and ln r1 finite".into()));
    }
    let xs: Vec<(T, T)> = points.iter().map(|p| (T::lit(p.0), T::lit(p.1))).collect();
    let ys: Vec<T> = points.iter().map(|p| T::lit(p.2)).collect();
    let weights: Option<Vec<T>> = if points.iter().all(|p| p.3 > 0.0) {
        Some(points.iter().map(|p| T::lit(1.0 / p.3.max(STDERR_FLOOR).powi(2))).collect())
    } else {
        None
    };
    let bounds = [
        Bound::new(T::lit(-1e6), T::lit(-1e-12)),
        Bound::new(T::lit(1e-3), T::lit(10.0)),
        Bound::new(T::lit(1e-3), T::lit(100.0)),
        Bound::new(T::lit(1e-6), T::lit(10.0)),
        Bound::new(T::lit(-10.0), T::lit(10.0)),
        Bound::new(T::lit(-1e3), T::lit(1e3)),
    ];
    let max_y = points.iter().map(|p| p.2).fold(f64::NEG_INFINITY, f64::max);
    let fits = surface_starts(max_y)
        .iter()
        .map(|s| {
            let init: Vec<T> = s.iter().map(|&v| T::lit(v)).collect();
            lm_fit(
                &SurfaceModel,
                &xs,
                &ys,
                weights.as_deref(),
                &init,
                Some(&bounds),
                &LmOptions::default(),
            )
        })
        .collect();
    let best = pick_best(fits)?;
    let mut fit = SurfaceFit::from_params(&best.params);
    fit.goodness = best.goodness;
    fit.converged = best.converged;
    Ok(fit)
}

impl<T: Scalar> SurfaceFit<T> {
    /// Parameters in `[A, B_psi, B_alpha, gamma, delta, c]` order.
    pub fn to_array(&self) -> [T; 6] {
        self.params()
    }
}
