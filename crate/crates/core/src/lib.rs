//! Effective capacity of finite-blocklength transmission over `m` parallel
//! Rayleigh sub-channels with pilot-based (MMSE) channel estimates.
//!
//! - [`specfun`]: `Q`, `Q⁻¹`, real-order `E_v(x)`, adaptive quadrature.
//! - [`channel`]: estimation statistics, effective SNR, normal-approximation rate.
//! - [`effcap`]: exponential-integral capacity, closed-form lower bound, pilot surrogate.
//! - [`mcsim`]: seeded Monte-Carlo estimate from the definition.
//! - [`optim`]: alternating pilot-length / error-probability optimization.
//! - [`sweep`], [`output`]: experiment grids and their CSV/JSON files.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod effcap;
pub mod error;
pub mod mcsim;
pub mod optim;
pub mod output;
pub mod specfun;
pub mod sweep;

pub use channel::{db_to_linear, FadingDraw, Link, SystemParams};
pub use effcap::{ec_expint, ec_lower_bound, ec_quadrature, EcValue, Method};
pub use error::{Error, Result};
pub use mcsim::{ec_monte_carlo, McConfig, McEstimate, McMode, McSampler};
pub use optim::{alternate_optimize, OptimOptions, OptimResult};
pub use sweep::{SweepSpec, SweptField};
