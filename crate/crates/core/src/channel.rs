//! Physical-layer model: MMSE channel estimation from a pilot of `n_t` symbols,
//! the effective average SNR it leaves behind, and the normal-approximation
//! rate achieved by coding across `m` parallel Rayleigh sub-channels.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specfun::q_inv;

/// `log₂ e`
pub const LOG2_E: f64 = std::f64::consts::LOG2_E;

/// Converts an SNR in dB to linear scale.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Link parameters that stay fixed while pilot length and error probability
/// are optimized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Link {
    /// QoS exponent θ, 1/bit.
    pub theta: f64,
    /// Blocklength in channel uses.
    pub n: u32,
    /// Number of parallel sub-channels.
    pub m: u32,
    /// Transmit SNR `p/σ²`, linear.
    pub gamma0: f64,
    /// Noise power. Only the ratio `gamma0` enters the model.
    pub sigma2: f64,
}

impl Link {
    pub fn new(theta: f64, n: u32, m: u32, gamma0: f64) -> Self {
        Link {
            theta,
            n,
            m,
            gamma0,
            sigma2: 1.0,
        }
    }

    pub fn with(&self, n_t: u32, eps: f64) -> SystemParams {
        SystemParams {
            theta: self.theta,
            n: self.n,
            n_t,
            m: self.m,
            gamma0: self.gamma0,
            sigma2: self.sigma2,
            eps,
        }
    }

    /// `θ' = θ log₂ e`
    pub fn theta_prime(&self) -> f64 {
        self.theta * LOG2_E
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(Error::domain(format!(
                "theta must be > 0, got {}",
                self.theta
            )));
        }
        if self.n < 2 {
            return Err(Error::domain(format!("n must be >= 2, got {}", self.n)));
        }
        if self.m < 1 {
            return Err(Error::domain("m must be >= 1"));
        }
        if !(self.gamma0 > 0.0 && self.gamma0.is_finite()) {
            return Err(Error::domain(format!(
                "gamma0 must be > 0, got {}",
                self.gamma0
            )));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::domain(format!(
                "sigma2 must be > 0, got {}",
                self.sigma2
            )));
        }
        Ok(())
    }
}

/// Full parameter set of one operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub theta: f64,
    pub n: u32,
    /// Pilot length in channel uses.
    pub n_t: u32,
    pub m: u32,
    pub gamma0: f64,
    pub sigma2: f64,
    /// Block decoding error probability.
    pub eps: f64,
}

impl SystemParams {
    pub fn link(&self) -> Link {
        Link {
            theta: self.theta,
            n: self.n,
            m: self.m,
            gamma0: self.gamma0,
            sigma2: self.sigma2,
        }
    }

    /// Data symbols per block, `n - n_t`.
    pub fn n_d(&self) -> u32 {
        self.n.saturating_sub(self.n_t)
    }

    pub fn theta_prime(&self) -> f64 {
        self.theta * LOG2_E
    }

    /// Effective average received SNR `G` at this pilot length.
    pub fn avg_snr(&self) -> f64 {
        avg_received_snr(self.n_t as f64, self.gamma0)
    }

    pub fn validate(&self) -> Result<()> {
        self.link().validate()?;
        if self.n_t < 1 || self.n_t > self.n - 1 {
            return Err(Error::domain(format!(
                "n_t must satisfy 1 <= n_t <= n - 1 = {}, got {}",
                self.n - 1,
                self.n_t
            )));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::domain(format!(
                "eps must lie in (0, 1), got {}",
                self.eps
            )));
        }
        Ok(())
    }
}

/// Effective average SNR after MMSE estimation with `n_t` pilot symbols,
/// `G = n_t γ0² / (1 + γ0 + n_t γ0)`.
///
/// `n_t` is real so the pilot fraction can be treated as continuous.
pub fn avg_received_snr(n_t: f64, gamma0: f64) -> f64 {
    n_t * gamma0 * gamma0 / (1.0 + gamma0 + n_t * gamma0)
}

/// One block's fading realization on `m` sub-channels.
#[derive(Debug, Clone, PartialEq)]
pub struct FadingDraw {
    /// Unit-mean exponential gains `|ĥ_i|²` normalized by their variance.
    pub x: Vec<f64>,
    /// Instantaneous SNRs `γ̂_i = G x_i`.
    pub snr_hat: Vec<f64>,
}

impl FadingDraw {
    pub fn from_gains(x: Vec<f64>, g: f64) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::domain(
                "a fading draw needs at least one sub-channel",
            ));
        }
        if let Some(bad) = x.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::domain(format!(
                "fading gains must be finite and >= 0, got {bad}"
            )));
        }
        if !(g >= 0.0) {
            return Err(Error::domain(format!("average SNR must be >= 0, got {g}")));
        }
        let snr_hat = x.iter().map(|xi| g * xi).collect();
        Ok(FadingDraw { x, snr_hat })
    }

    /// Draws from instantaneous SNRs directly, with `G = 1`.
    pub fn from_snrs(snr_hat: Vec<f64>) -> Result<Self> {
        Self::from_gains(snr_hat, 1.0)
    }

    pub fn sample<R: Rng + ?Sized>(m: usize, g: f64, rng: &mut R) -> Self {
        let x: Vec<f64> = (0..m).map(|_| unit_exponential(rng)).collect();
        let snr_hat = x.iter().map(|xi| g * xi).collect();
        FadingDraw { x, snr_hat }
    }

    pub fn m(&self) -> usize {
        self.x.len()
    }
}

/// `-ln U` with `U` uniform on `(0, 1]`.
pub fn unit_exponential<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.gen();
    -(1.0 - u).ln()
}

/// `CN(0, var)`
fn complex_normal<R: Rng + ?Sized>(var: f64, rng: &mut R) -> Complex64 {
    let s = (0.5 * var).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// True channel, its MMSE estimate, and the estimation error for one sub-channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateSample {
    pub h: Complex64,
    pub h_hat: Complex64,
    pub z: Complex64,
}

/// Simulates pilot-based MMSE estimation of one `CN(0,1)` coefficient.
///
/// The received pilot, projected on the unit-norm pilot sequence, is
/// `y = √(n_t γ0) h + w` with `w ~ CN(0,1)` in SNR units. The estimate is
/// `ĥ = √(n_t γ0) / (1 + n_t γ0) · y`. `h` is stored as `ĥ + z` so the
/// decomposition holds exactly in floating point.
pub fn mmse_sample<R: Rng + ?Sized>(n_t: u32, gamma0: f64, rng: &mut R) -> Result<EstimateSample> {
    if n_t < 1 {
        return Err(Error::domain("MMSE estimation needs n_t >= 1"));
    }
    if !(gamma0 > 0.0) {
        return Err(Error::domain(format!("gamma0 must be > 0, got {gamma0}")));
    }
    let snr_pilot = n_t as f64 * gamma0;
    let h = complex_normal(1.0, rng);
    let w = complex_normal(1.0, rng);
    let y = h * snr_pilot.sqrt() + w;
    let h_hat = y * (snr_pilot.sqrt() / (1.0 + snr_pilot));
    let z = h - h_hat;
    Ok(EstimateSample {
        h: h_hat + z,
        h_hat,
        z,
    })
}

/// Rate penalty `log₂e · Q⁻¹(ε) / √(n_d m)` of the normal approximation.
pub fn rate_penalty(eps: f64, n_d: u32, m: usize) -> Result<f64> {
    if n_d < 1 {
        return Err(Error::domain("n_d must be >= 1"));
    }
    Ok(LOG2_E * q_inv(eps)? / ((n_d as f64) * (m as f64)).sqrt())
}

/// Normal-approximation rate in bits per channel use, with the channel
/// dispersion replaced by its upper bound `log₂²e`:
/// `R = (1/m) Σ log₂(1 + γ̂_i) - log₂e · Q⁻¹(ε) / √(n_d m)`.
///
/// Negative values are returned as is.
pub fn fbl_rate(draw: &FadingDraw, eps: f64, n_d: u32) -> Result<f64> {
    let m = draw.m();
    let penalty = rate_penalty(eps, n_d, m)?;
    Ok(shannon_mean(&draw.snr_hat) - penalty)
}

/// `(1/m) Σ log₂(1 + γ̂_i)`
pub(crate) fn shannon_mean(snr_hat: &[f64]) -> f64 {
    let s: f64 = snr_hat.iter().map(|g| g.ln_1p()).sum();
    s * LOG2_E / snr_hat.len() as f64
}

/// Exact channel dispersion `(1/m) Σ (1 - (1+γ̂_i)^{-2}) log₂²e`.
pub fn exact_dispersion(draw: &FadingDraw) -> f64 {
    let m = draw.m() as f64;
    let s: f64 = draw.snr_hat.iter().map(|g| 1.0 - (1.0 + g).powi(-2)).sum();
    s / m * LOG2_E * LOG2_E
}

/// Service in bits delivered by one block: zero when decoding fails
/// (probability `eps`), otherwise `m n_d R`.
///
/// With `clamp_rate`, negative rates are served as zero.
pub fn service_sample<R: Rng + ?Sized>(
    params: &SystemParams,
    draw: &FadingDraw,
    clamp_rate: bool,
    rng: &mut R,
) -> Result<f64> {
    params.validate()?;
    if draw.m() != params.m as usize {
        return Err(Error::domain(format!(
            "fading draw has {} sub-channels, params say m = {}",
            draw.m(),
            params.m
        )));
    }
    let failed = rng.gen::<f64>() < params.eps;
    let rate = fbl_rate(draw, params.eps, params.n_d())?;
    if failed {
        return Ok(0.0);
    }
    let rate = if clamp_rate { rate.max(0.0) } else { rate };
    Ok(params.m as f64 * params.n_d() as f64 * rate)
}
