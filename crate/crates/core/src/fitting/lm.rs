//! Levenberg–Marquardt least squares with a central-difference Jacobian.

use serde::{Deserialize, Serialize};

use super::linalg::{is_rank_deficient, solve};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A parametric model `y = f(x; p)`.
pub trait Model<T: Scalar> {
    type X;

    fn n_params(&self) -> usize;

    fn eval(&self, x: &Self::X, params: &[T]) -> T;

    /// Map raw parameters onto their canonical representative (for
    /// instance the sign of a parameter that only enters squared).
    fn canonicalize(&self, params: &mut [T]) {
        let _ = params;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmOptions<T> {
    pub max_iterations: usize,
    /// Stop once an accepted step lowers the cost by less than this
    /// fraction.
    pub tol: T,
    pub initial_damping: T,
    /// Relative Jacobian step: `h = rel_step * max(1, |p|)`.
    pub rel_step: T,
}

impl<T: Scalar> Default for LmOptions<T> {
    fn default() -> Self {
        LmOptions {
            max_iterations: 200,
            tol: T::lit(1e-10),
            initial_damping: T::lit(1e-3),
            rel_step: T::lit(1e-6),
        }
    }
}

/// Closed box for each parameter; infinite ends are allowed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bound<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Scalar> Bound<T> {
    pub fn free() -> Self {
        Bound { lo: T::neg_infinity(), hi: T::infinity() }
    }

    pub fn new(lo: T, hi: T) -> Self {
        Bound { lo, hi }
    }

    fn clamp(&self, v: T) -> T {
        v.max(self.lo).min(self.hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmFit<T> {
    pub params: Vec<T>,
    /// Weighted sum of squared residuals.
    pub cost: T,
    /// Coefficient of determination, weighted like the residuals.
    pub goodness: T,
    pub iterations: usize,
    pub converged: bool,
}

/// Weighted residuals `sqrt(w) * (y - f(x; p))`.
fn residuals<T: Scalar, M: Model<T>>(
    model: &M,
    xs: &[M::X],
    ys: &[T],
    sqrt_w: &[T],
    p: &[T],
    out: &mut [T],
) {
    for i in 0..ys.len() {
        out[i] = sqrt_w[i] * (ys[i] - model.eval(&xs[i], p));
    }
}

fn sum_sq<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |acc, &r| acc + r * r)
}

/// Jacobian of the model values (not of the residuals), row-major
/// `n_data x n_params`, by central differences.
fn jacobian<T: Scalar, M: Model<T>>(
    model: &M,
    xs: &[M::X],
    sqrt_w: &[T],
    p: &[T],
    rel_step: T,
) -> Vec<T> {
    let n = xs.len();
    let k = p.len();
    let mut jac = vec![T::zero(); n * k];
    let mut probe = p.to_vec();
    let two = T::lit(2.0);
    for j in 0..k {
        let h = rel_step * p[j].abs().max(T::one());
        probe[j] = p[j] + h;
        let plus: Vec<T> = xs.iter().map(|x| model.eval(x, &probe)).collect();
        probe[j] = p[j] - h;
        let minus: Vec<T> = xs.iter().map(|x| model.eval(x, &probe)).collect();
        probe[j] = p[j];
        for i in 0..n {
            jac[i * k + j] = sqrt_w[i] * (plus[i] - minus[i]) / (two * h);
        }
    }
    jac
}

/// Weighted coefficient of determination. A zero total sum of squares
/// yields 1 when the residuals vanish too, 0 otherwise.
pub fn r_squared<T: Scalar>(ys: &[T], fitted: &[T], weights: &[T]) -> T {
    let wsum = weights.iter().fold(T::zero(), |a, &w| a + w);
    let mean = ys
        .iter()
        .zip(weights)
        .fold(T::zero(), |a, (&y, &w)| a + w * y)
        / wsum;
    let mut ss_tot = T::zero();
    let mut ss_res = T::zero();
    for i in 0..ys.len() {
        ss_tot = ss_tot + weights[i] * (ys[i] - mean).powi(2);
        ss_res = ss_res + weights[i] * (ys[i] - fitted[i]).powi(2);
    }
    let scale = ys
        .iter()
        .fold(T::zero(), |a, &y| a.max(y.abs()))
        .max(T::one());
    let tiny = T::epsilon() * T::epsilon() * scale * scale * wsum;
    if ss_tot <= tiny {
        if ss_res <= tiny {
            T::one()
        } else {
            T::zero()
        }
    } else {
        T::one() - ss_res / ss_tot
    }
}

/// Minimize the weighted squared residuals of `model` over `data`.
///
/// `weights` defaults to all ones; `bounds` defaults to unbounded. Errors
/// with [`Error::RankDeficient`] when there are fewer points than
/// parameters or the Jacobian at the starting point has dependent columns.
pub fn lm_fit<T: Scalar, M: Model<T>>(
    model: &M,
    xs: &[M::X],
    ys: &[T],
    weights: Option<&[T]>,
    init: &[T],
    bounds: Option<&[Bound<T>]>,
    opts: &LmOptions<T>,
) -> Result<LmFit<T>> {
    let k = model.n_params();
    let n = ys.len();
    if init.len() != k {
        return Err(Error::param("init", format!("expected {k} parameters, got {}", init.len())));
    }
    if xs.len() != n {
        return Err(Error::param("data", "x and y lengths differ"));
    }
    if n < k {
        return Err(Error::RankDeficient(format!(
            "{n} data points for {k} parameters"
        )));
    }
    let weights: Vec<T> = match weights {
        Some(w) if w.len() == n => w.to_vec(),
        Some(_) => return Err(Error::param("weights", "length differs from data")),
        None => vec![T::one(); n],
    };
    if weights.iter().any(|w| !(*w >= T::zero()) || !w.is_finite()) {
        return Err(Error::param("weights", "must be finite and non-negative"));
    }
    let sqrt_w: Vec<T> = weights.iter().map(|w| w.sqrt()).collect();
    let free = vec![Bound::free(); k];
    let bounds = bounds.unwrap_or(&free);
    if bounds.len() != k {
        return Err(Error::param("bounds", "one bound per parameter required"));
    }

    let mut p: Vec<T> = init.iter().zip(bounds).map(|(&v, b)| b.clamp(v)).collect();
    let mut r = vec![T::zero(); n];
    residuals(model, xs, ys, &sqrt_w, &p, &mut r);
    let mut cost = sum_sq(&r);
    if !cost.is_finite() {
        return Err(Error::InvalidDomain("model is not finite at the initial parameters".into()));
    }
    let mut jac = jacobian(model, xs, &sqrt_w, &p, opts.rel_step);
    let normal = |jac: &[T]| -> Vec<T> {
        let mut a = vec![T::zero(); k * k];
        for i in 0..n {
            let row = &jac[i * k..(i + 1) * k];
            for a_idx in 0..k {
                for b_idx in a_idx..k {
                    a[a_idx * k + b_idx] = a[a_idx * k + b_idx] + row[a_idx] * row[b_idx];
                }
            }
        }
        for a_idx in 0..k {
            for b_idx in 0..a_idx {
                a[a_idx * k + b_idx] = a[b_idx * k + a_idx];
            }
        }
        a
    };
    if is_rank_deficient(&normal(&jac), k, T::lit(1e-10)) {
        return Err(Error::RankDeficient(
            "Jacobian columns are linearly dependent at the starting point".into(),
        ));
    }

    let y_scale = ys.iter().fold(T::zero(), |a, &y| a + y * y).max(T::one());
    let negligible = T::epsilon() * T::epsilon() * y_scale;
    let mut mu = opts.initial_damping;
    let mut converged = false;
    let mut iterations = 0;
    let mut trial_r = vec![T::zero(); n];

    while iterations < opts.max_iterations {
        iterations += 1;
        if cost <= negligible {
            converged = true;
            break;
        }
        let a = normal(&jac);
        let mut g = vec![T::zero(); k];
        for i in 0..n {
            for j in 0..k {
                g[j] = g[j] + jac[i * k + j] * r[i];
            }
        }
        let max_diag = (0..k).fold(T::zero(), |m, j| m.max(a[j * k + j]));
        let floor = max_diag * T::lit(1e-12);
        let mut accepted = false;
        while mu < T::lit(1e16) {
            let mut damped = a.clone();
            for j in 0..k {
                damped[j * k + j] = damped[j * k + j] + mu * a[j * k + j].max(floor);
            }
            let mut rhs = g.clone();
            let step = match solve(&mut damped, &mut rhs) {
                Ok(s) => s,
                Err(_) => {
                    mu = mu * T::lit(10.0);
                    continue;
                }
            };
            let trial: Vec<T> = p
                .iter()
                .zip(&step)
                .zip(bounds)
                .map(|((&v, &d), b)| b.clamp(v + d))
                .collect();
            residuals(model, xs, ys, &sqrt_w, &trial, &mut trial_r);
            let trial_cost = sum_sq(&trial_r);
            if trial_cost.is_finite() && trial_cost < cost {
                let decrease = (cost - trial_cost) / cost;
                p = trial;
                std::mem::swap(&mut r, &mut trial_r);
                cost = trial_cost;
                mu = (mu / T::lit(10.0)).max(T::lit(1e-12));
                accepted = true;
                if decrease < opts.tol {
                    converged = true;
                }
                break;
            }
            mu = mu * T::lit(10.0);
        }
        if !accepted {
            // No downhill step even under heavy damping: stationary point.
            converged = true;
            break;
        }
        if converged {
            break;
        }
        jac = jacobian(model, xs, &sqrt_w, &p, opts.rel_step);
    }

    model.canonicalize(&mut p);
    let fitted: Vec<T> = xs.iter().map(|x| model.eval(x, &p)).collect();
    Ok(LmFit {
        goodness: r_squared(ys, &fitted, &weights),
        params: p,
        cost,
        iterations,
        converged,
    })
}

/// Gradient of the weighted squared error at `p`, by central differences.
pub fn cost_gradient<T: Scalar, M: Model<T>>(
    model: &M,
    xs: &[M::X],
    ys: &[T],
    p: &[T],
    rel_step: T,
) -> Vec<T> {
    let cost = |q: &[T]| {
        xs.iter()
            .zip(ys)
            .fold(T::zero(), |a, (x, &y)| a + (y - model.eval(x, q)).powi(2))
    };
    let mut probe = p.to_vec();
    (0..p.len())
        .map(|j| {
            let h = rel_step * p[j].abs().max(T::one());
            probe[j] = p[j] + h;
            let plus = cost(&probe);
            probe[j] = p[j] - h;
            let minus = cost(&probe);
            probe[j] = p[j];
            (plus - minus) / (T::lit(2.0) * h)
        })
        .collect()
}
