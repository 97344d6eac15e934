//! Alternating maximization of the closed-form lower bound over pilot length
//! and decoding error probability.
//!
//! Each iteration first picks the pilot length from the root of `dΓ/dα`
//! (bisection, then the better of the two neighbouring integers), then the
//! error probability by ternary search in `log₁₀ ε`. Iteration stops once the
//! second half-step improves the objective by at most `gap_tol`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{db_to_linear, Link};
use crate::effcap::{ec_expint, lower_bound_value, SurrogateParams, ALPHA_MAX};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimOptions {
    /// Starting error probability.
    pub eps0: f64,
    /// Stop once `C_E(after ε step) - C_E(after n_t step)` is at most this, bits/block.
    pub gap_tol: f64,
    pub max_iter: usize,
    /// Search window for `log₁₀ ε`.
    pub log10_eps_range: (f64, f64),
    /// Ternary search stops when the bracket is narrower than this, in decades.
    pub eps_bracket: f64,
    /// Bisection width for the pilot fraction.
    pub alpha_width: f64,
}

impl Default for OptimOptions {
    fn default() -> Self {
        OptimOptions {
            eps0: 1e-3,
            gap_tol: 1e-4,
            max_iter: 100,
            log10_eps_range: (-12.0, 0.5f64.log10()),
            eps_bracket: 1e-3,
            alpha_width: 1e-7,
        }
    }
}

/// Where the continuous pilot-fraction maximizer landed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Interior,
    /// `dΓ/dα ≤ 0` already at `α = 1/n`.
    Lower,
    /// `dΓ/dα > 0` at `α = 0.2`; outside the window where concavity is guaranteed.
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaChoice {
    pub alpha_star: f64,
    pub n_t_star: u32,
    pub boundary: Boundary,
}

/// One iteration of the alternating search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub iteration: usize,
    pub n_t: u32,
    /// Error probability in force during the pilot step.
    pub eps_in: f64,
    /// Objective after the pilot-length step.
    pub ec_after_pilot: f64,
    pub eps_out: f64,
    /// Objective after the error-probability step.
    pub ec_after_eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimResult {
    pub n_t_star: u32,
    pub eps_star: f64,
    /// Lower-bound objective at the optimum, bits/block.
    pub ec_star: f64,
    /// Exponential-integral effective capacity re-evaluated at the optimum.
    pub ec_expint: Option<f64>,
    pub boundary: Boundary,
    pub iterations: usize,
    pub trace: Vec<TraceStep>,
}

fn objective(link: &Link, n_t: u32, eps: f64) -> Result<f64> {
    let v = lower_bound_value(&link.with(n_t, eps))?;
    if !v.is_finite() {
        return Err(Error::NonFinite(format!(
            "lower bound is {v} at n_t = {n_t}, eps = {eps}"
        )));
    }
    Ok(v)
}

fn max_pilot(link: &Link) -> u32 {
    ((ALPHA_MAX * link.n as f64).floor() as u32).clamp(1, link.n - 1)
}

/// Best pilot length for fixed `eps` via the root of `dΓ/dα` on `(1/n, 0.2)`.
pub fn optimal_alpha(link: &Link, eps: f64, opts: &OptimOptions) -> Result<AlphaChoice> {
    link.validate()?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::domain(format!("eps must lie in (0, 1), got {eps}")));
    }
    let worst_order = link.theta_prime() * link.n as f64 * (1.0 - ALPHA_MAX);
    if !(worst_order > 1.0) {
        return Err(Error::domain(format!(
            "theta' * n * (1 - {ALPHA_MAX}) = {worst_order} must exceed 1 on the whole pilot window"
        )));
    }
    let sp = SurrogateParams {
        m: link.m,
        gamma0: link.gamma0,
        eps,
        theta: link.theta,
        n: link.n,
    };
    let mut lo = 1.0 / link.n as f64;
    let mut hi = ALPHA_MAX;
    let (alpha_star, boundary) = if sp.slope_unchecked(hi)? > 0.0 {
        (hi, Boundary::Upper)
    } else if sp.slope_unchecked(lo)? <= 0.0 {
        (lo, Boundary::Lower)
    } else {
        while hi - lo > opts.alpha_width {
            let mid = 0.5 * (lo + hi);
            if sp.slope_unchecked(mid)? > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (0.5 * (lo + hi), Boundary::Interior)
    };

    let top = max_pilot(link);
    let x = alpha_star * link.n as f64;
    let below = (x.floor() as u32).clamp(1, top);
    let above = (x.ceil() as u32).clamp(1, top);
    let mut n_t_star = below;
    if above != below {
        let f_below = objective(link, below, eps)?;
        let f_above = objective(link, above, eps)?;
        // ties go to the shorter pilot
        if f_above > f_below + 1e-12 {
            n_t_star = above;
        }
    }
    Ok(AlphaChoice {
        alpha_star,
        n_t_star,
        boundary,
    })
}

/// Error probability maximizing the lower bound at pilot length `n_t`.
pub fn optimal_eps(link: &Link, n_t: u32, opts: &OptimOptions) -> Result<f64> {
    link.validate()?;
    link.with(n_t, 0.5).validate()?;
    let (mut lo, mut hi) = opts.log10_eps_range;
    let f = |le: f64| objective(link, n_t, 10f64.powf(le));
    while hi - lo > opts.eps_bracket {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if f(m1)? < f(m2)? {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    Ok(10f64.powf(0.5 * (lo + hi)))
}

/// Alternating optimization starting from `opts.eps0`.
///
/// A half-step never replaces the incumbent `n_t` or `ε` with a worse one, so
/// the objective along the trace is non-decreasing.
pub fn alternate_optimize(link: &Link, opts: &OptimOptions) -> Result<OptimResult> {
    link.validate()?;
    let mut eps = opts.eps0;
    let mut incumbent: Option<u32> = None;
    let mut trace = Vec::new();

    for iteration in 1..=opts.max_iter {
        let choice = optimal_alpha(link, eps, opts)?;
        let mut n_t = choice.n_t_star;
        let mut ec_pilot = objective(link, n_t, eps)?;
        if let Some(prev) = incumbent {
            let ec_prev = objective(link, prev, eps)?;
            if ec_prev > ec_pilot {
                n_t = prev;
                ec_pilot = ec_prev;
            }
        }

        let eps_in = eps;
        let candidate = optimal_eps(link, n_t, opts)?;
        let ec_candidate = objective(link, n_t, candidate)?;
        let ec_eps = if ec_candidate >= ec_pilot {
            eps = candidate;
            ec_candidate
        } else {
            ec_pilot
        };
        incumbent = Some(n_t);
        trace.push(TraceStep {
            iteration,
            n_t,
            eps_in,
            ec_after_pilot: ec_pilot,
            eps_out: eps,
            ec_after_eps: ec_eps,
        });

        if ec_eps - ec_pilot <= opts.gap_tol {
            let ec_expint = ec_expint(&link.with(n_t, eps)).ok().map(|v| v.value);
            return Ok(OptimResult {
                n_t_star: n_t,
                eps_star: eps,
                ec_star: ec_eps,
                ec_expint,
                boundary: choice.boundary,
                iterations: iteration,
                trace,
            });
        }
    }
    Err(Error::IterationCap {
        iterations: opts.max_iter,
        trace,
    })
}

/// One point of an `m × SNR` optimizer grid.
#[derive(Debug)]
pub struct GridPoint {
    pub m: u32,
    pub snr_db: f64,
    pub result: Result<OptimResult>,
}

/// Runs [`alternate_optimize`] over every `(m, snr_db)` pair, in parallel.
/// Output is ordered by `m`, then SNR.
pub fn optimize_grid(
    base: &Link,
    ms: &[u32],
    snr_dbs: &[f64],
    opts: &OptimOptions,
) -> Vec<GridPoint> {
    let pairs: Vec<(u32, f64)> = ms
        .iter()
        .flat_map(|&m| snr_dbs.iter().map(move |&db| (m, db)))
        .collect();
    pairs
        .into_par_iter()
        .map(|(m, snr_db)| {
            let link = Link {
                m,
                gamma0: db_to_linear(snr_db),
                ..*base
            };
            GridPoint {
                m,
                snr_db,
                result: alternate_optimize(&link, opts),
            }
        })
        .collect()
}
