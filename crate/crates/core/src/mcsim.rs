//! Seeded Monte-Carlo estimate of the effective capacity from its definition,
//! `-(1/θ) ln E[e^{-θ s}]`.
//!
//! Blocks are i.i.d., so the estimator averages one-block terms. By default the
//! decoding-error coin is integrated out analytically: each fading draw
//! contributes `ε + (1-ε) e^{-θ m n_d R}`. [`McMode::Literal`] flips the coin
//! instead and estimates the same quantity with more variance.
//!
//! Fading draws come from an importance-sampling law by default: each
//! normalized gain `x = γ̂/G` is drawn from a Lomax density proportional to
//! `(1 + G x)^{-θ' n_d}` and reweighted by the likelihood ratio against
//! `Exp(1)`. The weighted one-block term is then bounded, so the sample
//! variance (and the reported standard error) is trustworthy even when the
//! direct average is dominated by rare deep fades. [`McSampler::Direct`] draws
//! `x ~ Exp(1)` and averages without weights.
//!
//! Samples are split into fixed-size batches. Batch `b` draws from a ChaCha8
//! stream seeded by `seed` with stream id `b`, and batch summaries are merged
//! in a fixed pairwise order, so the result depends on `(seed, batch)` but not
//! on the number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{rate_penalty, unit_exponential, SystemParams, LOG2_E};
use crate::effcap::{EcValue, Method};
use crate::error::{Error, Result};

/// Generator family, recorded in run metadata.
pub const RNG_FAMILY: &str =
    "ChaCha8Rng (rand_chacha 0.3): seed_from_u64(seed), set_stream(batch index)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum McMode {
    /// Average `ε + (1-ε) e^{-θ m n_d R}` over fading draws.
    #[default]
    Marginalized,
    /// Sample the decoding error as well and average `e^{-θ s}`.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum McSampler {
    /// Lomax proposal with shape `θ' n_d` and likelihood-ratio weights.
    /// Falls back to direct draws when `θ' n_d <= 1`.
    #[default]
    Importance,
    /// Gains drawn from their own exponential law.
    Direct,
}

impl McSampler {
    pub fn as_str(&self) -> &'static str {
        match self {
            McSampler::Importance => "importance",
            McSampler::Direct => "direct",
        }
    }
}

impl std::str::FromStr for McSampler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "importance" => Ok(McSampler::Importance),
            "direct" => Ok(McSampler::Direct),
            other => Err(Error::domain(format!(
                "unknown sampler '{other}' (expected importance or direct)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub samples: u64,
    pub seed: u64,
    pub batch: u64,
    #[serde(default)]
    pub mode: McMode,
    #[serde(default)]
    pub sampler: McSampler,
    /// Serve negative instantaneous rates as zero.
    #[serde(default)]
    pub clamp_rate: bool,
}

impl McConfig {
    pub fn new(samples: u64, seed: u64) -> Self {
        McConfig {
            samples,
            seed,
            batch: 65_536,
            mode: McMode::Marginalized,
            sampler: McSampler::Importance,
            clamp_rate: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples < 1 {
            return Err(Error::domain("Monte-Carlo samples must be >= 1"));
        }
        if self.batch < 1 {
            return Err(Error::domain("Monte-Carlo batch must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    /// Effective capacity, bits/block.
    pub value: f64,
    /// Delta-method standard error of `value`, bits/block.
    pub stderr: f64,
    pub samples_used: u64,
}

impl McEstimate {
    /// As an [`EcValue`] with a 95% normal confidence half-width.
    pub fn to_ec_value(&self) -> EcValue {
        EcValue {
            value: self.value,
            method: Method::MonteCarlo,
            ci_halfwidth: 1.96 * self.stderr,
        }
    }
}

/// Running mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, y: f64) {
        self.count += 1;
        let delta = y - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (y - self.mean);
    }

    fn merge(a: Moments, b: Moments) -> Moments {
        if a.count == 0 {
            return b;
        }
        if b.count == 0 {
            return a;
        }
        let count = a.count + b.count;
        let delta = b.mean - a.mean;
        let wb = b.count as f64 / count as f64;
        Moments {
            count,
            mean: a.mean + delta * wb,
            m2: a.m2 + b.m2 + delta * delta * a.count as f64 * wb,
        }
    }
}

fn merge_pairwise(parts: &[Moments]) -> Moments {
    match parts.len() {
        0 => Moments::default(),
        1 => parts[0],
        n => {
            let (l, r) = parts.split_at(n / 2);
            Moments::merge(merge_pairwise(l), merge_pairwise(r))
        }
    }
}

struct BlockModel {
    m: usize,
    g: f64,
    eps: f64,
    /// `θ m n_d`
    scale: f64,
    penalty: f64,
    clamp: bool,
    mode: McMode,
    /// Lomax shape of the proposal, `None` for direct draws.
    shape: Option<f64>,
}

impl BlockModel {
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let mut log_sum = 0.0;
        let mut log_weight = 0.0;
        for _ in 0..self.m {
            match self.shape {
                None => log_sum += (self.g * unit_exponential(rng)).ln_1p(),
                Some(s) => {
                    // inverse survival of (1 + G x)^{-(s-1)}
                    let u: f64 = 1.0 - rng.gen::<f64>();
                    let l = -u.ln() / (s - 1.0);
                    let x = l.exp_m1() / self.g;
                    log_sum += l;
                    log_weight += -x + s * l - ((s - 1.0) * self.g).ln();
                }
            }
        }
        let mut rate = log_sum * LOG2_E / self.m as f64 - self.penalty;
        if self.clamp {
            rate = rate.max(0.0);
        }
        let success = (log_weight - self.scale * rate).exp();
        match self.mode {
            McMode::Marginalized => self.eps + (1.0 - self.eps) * success,
            McMode::Literal => {
                if rng.gen::<f64>() < self.eps {
                    1.0
                } else {
                    success
                }
            }
        }
    }
}

/// Monte-Carlo effective capacity. Has no restriction on `θ' n_d`.
pub fn ec_monte_carlo(params: &SystemParams, cfg: &McConfig) -> Result<McEstimate> {
    params.validate()?;
    cfg.validate()?;
    let m = params.m as usize;
    let n_d = params.n_d();
    let model = BlockModel {
        m,
        g: params.avg_snr(),
        eps: params.eps,
        scale: params.theta * m as f64 * n_d as f64,
        penalty: rate_penalty(params.eps, n_d, m)?,
        clamp: cfg.clamp_rate,
        mode: cfg.mode,
        shape: match cfg.sampler {
            McSampler::Importance if params.theta_prime() * n_d as f64 > 1.0 => {
                Some(params.theta_prime() * n_d as f64)
            }
            _ => None,
        },
    };

    let batches = cfg.samples.div_ceil(cfg.batch);
    let parts: Vec<Moments> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(b);
            let count = cfg.batch.min(cfg.samples - b * cfg.batch);
            let mut acc = Moments::default();
            for _ in 0..count {
                acc.push(model.sample(&mut rng));
            }
            acc
        })
        .collect();
    let total = merge_pairwise(&parts);

    if !total.mean.is_finite() || !total.m2.is_finite() {
        return Err(Error::NonFinite(format!(
            "Monte-Carlo mean of e^(-theta s) is {} at {params:?}",
            total.mean
        )));
    }
    let n = total.count as f64;
    let var = if total.count > 1 {
        total.m2 / (n - 1.0)
    } else {
        0.0
    };
    let se_mean = (var / n).sqrt();
    Ok(McEstimate {
        value: -total.mean.ln() / params.theta,
        stderr: se_mean / (params.theta * total.mean),
        samples_used: total.count,
    })
}
