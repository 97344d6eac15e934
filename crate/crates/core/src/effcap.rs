//! Analytic effective capacity.
//!
//! With i.i.d. exponential sub-channel gains the per-block expectation factors
//! into `E[(1 + G x)^{-θ' n_d}]^m`, which equals `[(1/G) e^{1/G} E_{θ'n_d}(1/G)]^m`.
//! Everything here works with `ln T`, the log of the inner expectation, combined
//! by log-sum-exp so that tiny `ε` with large `m n_d` does not overflow.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::channel::{avg_received_snr, SystemParams, LOG2_E};
use crate::error::{Error, Result};
use crate::specfun::{expint_v_scaled, q_inv, quad_oracle, Tolerance};

/// How an [`EcValue`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Expint,
    LowerBound,
    Quadrature,
    MonteCarlo,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Expint => "expint",
            Method::LowerBound => "lower_bound",
            Method::Quadrature => "quadrature",
            Method::MonteCarlo => "monte_carlo",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "expint" => Ok(Method::Expint),
            "lower_bound" => Ok(Method::LowerBound),
            "quadrature" => Ok(Method::Quadrature),
            "monte_carlo" => Ok(Method::MonteCarlo),
            other => Err(Error::domain(format!(
                "unknown method '{other}' (expected expint, lower_bound, quadrature or monte_carlo)"
            ))),
        }
    }
}

/// Effective capacity in bits/block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EcValue {
    pub value: f64,
    pub method: Method,
    /// Zero for deterministic methods.
    pub ci_halfwidth: f64,
}

impl EcValue {
    fn exact(value: f64, method: Method) -> Self {
        EcValue {
            value,
            method,
            ci_halfwidth: 0.0,
        }
    }

    /// Converts to bits per channel use for a block of `n` uses on `m` sub-channels.
    pub fn per_channel_use(&self, m: u32, n: u32) -> f64 {
        self.value / (m as f64 * n as f64)
    }
}

/// Hard ceiling `-(1/θ) ln ε` of the effective capacity.
pub fn ec_cap(theta: f64, eps: f64) -> f64 {
    -eps.ln() / theta
}

/// Exponential-integral order `θ' n_d`, which must exceed 1.
fn checked_order(params: &SystemParams) -> Result<f64> {
    params.validate()?;
    let order = params.theta_prime() * params.n_d() as f64;
    if !(order > 1.0) {
        return Err(Error::domain(format!(
            "theta' * n_d = {order} must exceed 1 for the exponential-integral form"
        )));
    }
    Ok(order)
}

/// `ln(ε + (1-ε) e^{θ'√(m n_d) Q⁻¹(ε)} B^m)` given `ln B^m`.
fn log_inner(params: &SystemParams, log_bracket_m: f64) -> Result<f64> {
    let eps = params.eps;
    let boost = params.theta_prime() * (params.m as f64 * params.n_d() as f64).sqrt() * q_inv(eps)?;
    let a = eps.ln();
    let b = (-eps).ln_1p() + boost + log_bracket_m;
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    let out = hi + (lo - hi).exp().ln_1p();
    if !out.is_finite() {
        return Err(Error::NonFinite(format!(
            "log of the inner expectation is {out} at {params:?}"
        )));
    }
    Ok(out)
}

/// `ln[(1/G) e^{1/G} E_v(1/G)] = ln E[(1 + G x)^{-v}]`, `x ~ Exp(1)`.
fn log_expint_bracket(order: f64, g: f64) -> Result<f64> {
    let x = 1.0 / g;
    Ok(x.ln() + expint_v_scaled(order, x)?.ln())
}

/// Inner function `T(ε) = E[e^{-θ s}]`, so that `C_E = -(1/θ) ln T`.
pub fn inner_t(params: &SystemParams) -> Result<f64> {
    Ok(log_inner_t(params)?.exp())
}

/// `ln T(ε)`, without the round trip through `exp`.
pub fn log_inner_t(params: &SystemParams) -> Result<f64> {
    let order = checked_order(params)?;
    let bracket = log_expint_bracket(order, params.avg_snr())?;
    log_inner(params, params.m as f64 * bracket)
}

/// Effective capacity via the exponential integral.
pub fn ec_expint(params: &SystemParams) -> Result<EcValue> {
    let lt = log_inner_t(params)?;
    Ok(EcValue::exact(-lt / params.theta, Method::Expint))
}

/// Closed-form lower bound obtained from `E_v(x) ≤ e^{-x}/(v + x - 1)`:
/// `-(1/θ) ln{ε + (1-ε) e^{θ'√(m n_d) Q⁻¹(ε)} [(θ'n_d - 1) G + 1]^{-m}}`.
pub fn ec_lower_bound(params: &SystemParams) -> Result<EcValue> {
    let order = checked_order(params)?;
    if order <= 2.0 {
        log::warn!("theta' * n_d = {order} <= 2: the closed-form lower bound may be loose");
    }
    let lt = lower_bound_log_inner(params, order)?;
    Ok(EcValue::exact(-lt / params.theta, Method::LowerBound))
}

fn lower_bound_log_inner(params: &SystemParams, order: f64) -> Result<f64> {
    let g = params.avg_snr();
    let bracket = -((order - 1.0) * g).ln_1p();
    log_inner(params, params.m as f64 * bracket)
}

/// Lower-bound objective without the looseness warning, for use inside searches.
pub(crate) fn lower_bound_value(params: &SystemParams) -> Result<f64> {
    let order = checked_order(params)?;
    Ok(-lower_bound_log_inner(params, order)? / params.theta)
}

/// Effective capacity with the per-sub-channel expectation `E[(1+Gx)^{-θ'n_d}]`
/// integrated by adaptive quadrature instead of the exponential integral.
pub fn ec_quadrature(params: &SystemParams, tol: Tolerance) -> Result<EcValue> {
    let order = checked_order(params)?;
    let g = params.avg_snr();
    let mean = quad_oracle(|x| (-x).exp() * (-order * (g * x).ln_1p()).exp(), tol)?;
    let lt = log_inner(params, params.m as f64 * mean.ln())?;
    Ok(EcValue::exact(-lt / params.theta, Method::Quadrature))
}

/// Parameters of the pilot-fraction surrogate `Γ(α)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateParams {
    pub m: u32,
    pub gamma0: f64,
    pub eps: f64,
    pub theta: f64,
    pub n: u32,
}

/// Upper end of the pilot-fraction window.
pub const ALPHA_MAX: f64 = 0.2;

impl SurrogateParams {
    fn check(&self, alpha: f64) -> Result<()> {
        if !(alpha > 0.0 && alpha < ALPHA_MAX) {
            return Err(Error::domain(format!(
                "pilot fraction alpha must lie in (0, {ALPHA_MAX}), got {alpha}"
            )));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::domain(format!(
                "eps must lie in (0, 1), got {}",
                self.eps
            )));
        }
        if !(self.theta > 0.0) || !(self.gamma0 > 0.0) || self.m < 1 || self.n < 2 {
            return Err(Error::domain(format!(
                "invalid surrogate parameters {self:?}"
            )));
        }
        let order = self.theta * LOG2_E * self.n as f64 * (1.0 - alpha);
        if !(order > 1.0) {
            return Err(Error::domain(format!(
                "theta' * n * (1 - alpha) = {order} must exceed 1"
            )));
        }
        Ok(())
    }

    /// `(θ' n (1-α) - 1) G(α) + 1`
    fn inner(&self, alpha: f64) -> (f64, f64) {
        let tp = self.theta * LOG2_E;
        let n = self.n as f64;
        let g0 = self.gamma0;
        let g = avg_received_snr(n * alpha, g0);
        let dg = n * g0 * g0 * (1.0 + g0) / (1.0 + g0 + n * alpha * g0).powi(2);
        let k = tp * n * (1.0 - alpha) - 1.0;
        let o = k * g + 1.0;
        let d_o = -tp * n * g + k * dg;
        (o, d_o)
    }

    fn penalty_coeff(&self) -> Result<f64> {
        Ok((self.m as f64 * self.n as f64).sqrt() * q_inv(self.eps)? * LOG2_E)
    }

    pub(crate) fn value_unchecked(&self, alpha: f64) -> Result<f64> {
        let (o, _) = self.inner(alpha);
        Ok(-self.penalty_coeff()? * (1.0 - alpha / 2.0) + self.m as f64 / self.theta * o.ln())
    }

    pub(crate) fn slope_unchecked(&self, alpha: f64) -> Result<f64> {
        let (o, d_o) = self.inner(alpha);
        Ok(self.penalty_coeff()? / 2.0 + self.m as f64 / self.theta * d_o / o)
    }
}

/// Surrogate of the lower bound as a function of the pilot fraction `α = n_t/n`,
/// with `√(m n_d) ≈ √(m n)(1 - α/2)`:
/// `Γ(α) = -√(mn) Q⁻¹(ε) log₂e (1 - α/2) + (m/θ) ln((θ'n(1-α) - 1) G + 1)`.
pub fn gamma_surrogate(p: &SurrogateParams, alpha: f64) -> Result<f64> {
    p.check(alpha)?;
    p.value_unchecked(alpha)
}

/// Analytic `dΓ/dα`.
pub fn gamma_dalpha(p: &SurrogateParams, alpha: f64) -> Result<f64> {
    p.check(alpha)?;
    p.slope_unchecked(alpha)
}

/// Queue operating point for the delay-violation estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelaySpec {
    /// Service rate in bits/block.
    pub mu: f64,
    /// Delay bound in blocks.
    pub d_max: f64,
    /// Probability that the buffer is non-empty.
    pub eta: f64,
}

impl DelaySpec {
    pub fn new(mu: f64, d_max: f64) -> Self {
        DelaySpec {
            mu,
            d_max,
            eta: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu >= 0.0) || !(self.d_max >= 0.0) || !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::domain(format!("invalid delay spec {self:?}")));
        }
        Ok(())
    }
}

/// `P(D > D_max) ≈ η e^{-θ μ D_max}`
pub fn delay_violation(theta: f64, spec: &DelaySpec) -> Result<f64> {
    spec.validate()?;
    Ok((spec.eta * (-theta * spec.mu * spec.d_max).exp()).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{db_to_linear, Link};
    use approx::assert_relative_eq;

    fn params(db: f64, m: u32, n_t: u32, eps: f64) -> SystemParams {
        Link::new(0.01, 300, m, db_to_linear(db)).with(n_t, eps)
    }

    #[test]
    fn eps_near_one_gives_zero() {
        let p = params(6.0, 5, 20, 1.0 - 1e-12);
        assert!(ec_expint(&p).unwrap().value.abs() < 1e-6);
        assert!(ec_lower_bound(&p).unwrap().value.abs() < 1e-6);
        assert_relative_eq!(inner_t(&p).unwrap(), 1.0, max_relative = 1e-9);
    }

    #[test]
    fn fig3_point_below_cap() {
        let p = params(3.0, 5, 19, 4.33e-6);
        let cap = ec_cap(0.01, 4.33e-6);
        assert_relative_eq!(cap, -(4.33e-6f64).ln() / 0.01, max_relative = 1e-15);
        let v = ec_expint(&p).unwrap().value;
        assert!(v > 0.0 && v < cap, "ec = {v}, cap = {cap}");
    }

    #[test]
    fn order_must_exceed_one() {
        // θ' n_d = 0.001·log₂e·200 < 1
        let p = Link::new(0.001, 300, 5, 2.0).with(100, 1e-3);
        let err = ec_expint(&p).unwrap_err();
        assert!(err.to_string().contains("theta' * n_d"), "{err}");
        assert!(ec_lower_bound(&p).is_err());
        assert!(inner_t(&p).is_err());
    }

    #[test]
    fn lower_bound_below_expint() {
        for db in [3.0, 6.0, 9.0] {
            for m in 1..=10 {
                for n_t in 5..=40 {
                    let p = params(db, m, n_t, 1e-5);
                    let lb = ec_lower_bound(&p).unwrap().value;
                    let ex = ec_expint(&p).unwrap().value;
                    assert!(lb <= ex, "db={db} m={m} n_t={n_t}: {lb} > {ex}");
                }
            }
        }
    }

    #[test]
    fn expint_matches_quadrature() {
        let p = params(6.0, 5, 20, 1e-4);
        let a = ec_expint(&p).unwrap().value;
        let b = ec_quadrature(&p, Tolerance::default()).unwrap().value;
        assert_relative_eq!(a, b, max_relative = 1e-10);
    }

    #[test]
    fn huge_boost_does_not_overflow() {
        // e^{θ'√(m n_d) Q⁻¹(ε)} alone would be far beyond f64 here
        let p = Link::new(1.0, 2000, 40, 100.0).with(40, 1e-12);
        let v = ec_expint(&p).unwrap().value;
        assert!(v.is_finite());
        assert!(v <= ec_cap(1.0, 1e-12) + 1e-9);
    }

    #[test]
    fn surrogate_examples() {
        let sp = SurrogateParams {
            m: 5,
            gamma0: db_to_linear(6.0),
            eps: 0.5,
            theta: 0.01,
            n: 300,
        };
        let alpha = 0.07;
        let o = ((0.01 * LOG2_E * 300.0 * (1.0 - alpha) - 1.0)
            * avg_received_snr(300.0 * alpha, sp.gamma0)
            + 1.0)
            .ln();
        assert_relative_eq!(
            gamma_surrogate(&sp, alpha).unwrap(),
            5.0 / 0.01 * o,
            max_relative = 1e-14
        );
        assert!(gamma_surrogate(&sp, 0.0).is_err());
        assert!(gamma_surrogate(&sp, 0.2).is_err());
        assert!(gamma_dalpha(&sp, 0.25).is_err());
    }

    #[test]
    fn surrogate_slope_matches_finite_differences() {
        let sp = SurrogateParams {
            m: 5,
            gamma0: db_to_linear(6.0),
            eps: 7.92e-5,
            theta: 0.01,
            n: 300,
        };
        let h = 1e-6;
        for alpha in [0.02, 0.05, 0.09, 0.13, 0.18] {
            let fd = (gamma_surrogate(&sp, alpha + h).unwrap()
                - gamma_surrogate(&sp, alpha - h).unwrap())
                / (2.0 * h);
            let an = gamma_dalpha(&sp, alpha).unwrap();
            assert!(
                (an - fd).abs() <= 1e-5 * an.abs().max(1.0),
                "alpha={alpha}: {an} vs {fd}"
            );
        }
    }

    #[test]
    fn surrogate_slope_single_sign_change() {
        let sp = SurrogateParams {
            m: 5,
            gamma0: db_to_linear(6.0),
            eps: 7.92e-5,
            theta: 0.01,
            n: 300,
        };
        let slopes: Vec<f64> = (1..200)
            .map(|i| gamma_dalpha(&sp, i as f64 * 1e-3).unwrap())
            .collect();
        let changes = slopes
            .windows(2)
            .filter(|w| (w[0] > 0.0) != (w[1] > 0.0))
            .count();
        assert_eq!(changes, 1);
        assert!(slopes.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn delay_examples() {
        assert_eq!(
            delay_violation(
                0.01,
                &DelaySpec {
                    mu: 300.0,
                    d_max: 5.0,
                    eta: 0.0
                }
            )
            .unwrap(),
            0.0
        );
        assert_eq!(
            delay_violation(
                0.01,
                &DelaySpec {
                    mu: 300.0,
                    d_max: 0.0,
                    eta: 0.3
                }
            )
            .unwrap(),
            0.3
        );
        let p = delay_violation(0.01, &DelaySpec::new(300.0, 5.0)).unwrap();
        assert_relative_eq!(p, (-15f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(p, 3.059e-7, max_relative = 1e-3);
        assert!(delay_violation(
            0.01,
            &DelaySpec {
                mu: 1.0,
                d_max: 1.0,
                eta: 1.5
            }
        )
        .is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in [
            Method::Expint,
            Method::LowerBound,
            Method::Quadrature,
            Method::MonteCarlo,
        ] {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("shannon".parse::<Method>().is_err());
    }
}
