//! Threshold search over the injection rate.
//!
//! The predicate is evaluated on a fixed ensemble at each probed rate. The
//! search first brackets the threshold geometrically around an initial
//! guess, then bisects in log space until the bracket is narrower than the
//! relative resolution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SearchFlag {
    /// Predicate already true at the rate floor; the estimate is 0.
    AlwaysTrue,
    /// Predicate never true up to the rate ceiling; the estimate is the
    /// ceiling.
    NeverTrue,
    /// Predicate false at a rate above the located threshold.
    NonMonotone,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchOptions {
    /// Relative width of the final bracket.
    pub rel_resolution: f64,
    pub rate_floor: f64,
    pub rate_ceiling: f64,
    /// Re-probe at this multiple of the estimate to check monotonicity;
    /// values `<= 1` skip the check.
    pub monotone_check: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            rel_resolution: 0.01,
            rate_floor: 1e-3,
            rate_ceiling: 1e3,
            monotone_check: 2.0,
        }
    }
}

impl SearchOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_resolution > 0.0) {
            return Err(Error::param("rel_resolution", "must be positive"));
        }
        if !(self.rate_floor > 0.0 && self.rate_floor < self.rate_ceiling) {
            return Err(Error::param(
                "rate_floor",
                format!(
                    "need 0 < floor < ceiling, got {} and {}",
                    self.rate_floor, self.rate_ceiling
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub rate: f64,
    pub outcome: bool,
}

/// Located threshold: the predicate is false at `lower` and true at
/// `upper`; `rate` reports `upper` (0 or the ceiling when flagged).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub rate: f64,
    pub lower: f64,
    pub upper: f64,
    pub flag: Option<SearchFlag>,
    pub probes: Vec<Probe>,
}

/// Locate the smallest rate at which `predicate` holds.
pub fn bisect_rate<F>(guess: f64, opts: &SearchOptions, mut predicate: F) -> Result<Threshold>
where
    F: FnMut(f64) -> Result<bool>,
{
    opts.validate()?;
    let mut probes = Vec::new();
    let mut eval = |rate: f64, probes: &mut Vec<Probe>| -> Result<bool> {
        let outcome = predicate(rate)?;
        probes.push(Probe { rate, outcome });
        Ok(outcome)
    };

    let start = guess.clamp(opts.rate_floor, opts.rate_ceiling);
    let (mut lo, mut hi);
    if eval(start, &mut probes)? {
        hi = start;
        loop {
            if hi <= opts.rate_floor {
                return Ok(Threshold {
                    rate: 0.0,
                    lower: 0.0,
                    upper: hi,
                    flag: Some(SearchFlag::AlwaysTrue),
                    probes,
                });
            }
            let r = (hi / 2.0).max(opts.rate_floor);
            if eval(r, &mut probes)? {
                hi = r;
            } else {
                lo = r;
                break;
            }
        }
    } else {
        lo = start;
        loop {
            if lo >= opts.rate_ceiling {
                return Ok(Threshold {
                    rate: opts.rate_ceiling,
                    lower: lo,
                    upper: f64::INFINITY,
                    flag: Some(SearchFlag::NeverTrue),
                    probes,
                });
            }
            let r = (lo * 2.0).min(opts.rate_ceiling);
            if eval(r, &mut probes)? {
                hi = r;
                break;
            }
            lo = r;
        }
    }

    while hi / lo > 1.0 + opts.rel_resolution {
        let mid = (lo * hi).sqrt();
        if eval(mid, &mut probes)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }

    let mut flag = None;
    let k = opts.monotone_check;
    if k > 1.0 && !eval(hi * k, &mut probes)? {
        flag = Some(SearchFlag::NonMonotone);
    }
    Ok(Threshold { rate: hi, lower: lo, upper: hi, flag, probes })
}
