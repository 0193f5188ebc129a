//! Discovery probability under a two-parameter Poisson-Dirichlet model.
//!
//! Given the frequency of frequencies of `n` observations over `j` species,
//! `(σ̂, θ̂)` maximize the partition likelihood and
//!
//! ```text
//! U(n+0) = (θ̂ + jσ̂) / (θ̂ + n)
//! U(n+m) = U(n+0) · (θ̂+n+σ̂)_m / (θ̂+n+1)_m
//! ```
//!
//! estimate the probability that the next observation (after `m` more) is a
//! species not yet seen.

mod fit;
mod gamma;
mod likelihood;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::species::FrequencyVector;

pub use fit::{fit_py, fit_py_with, FitConfig, TracePoint};
pub use gamma::{ln_gamma, log_asc_factorial};
pub use likelihood::{
    in_region, is_feasible, log_likelihood, penalized_objective, penalty_distance, projection,
};

/// Margin of the search region `R` from the edges of `(0, 1)` in σ.
pub const DELTA: f64 = 0.01;
/// Upper bound on θ in `R`.
pub const THETA_MAX: f64 = 1000.0;
/// Offset of the projection target line `θ + σ = ε`.
pub const EPSILON: f64 = 0.001;

#[derive(Debug, Error, PartialEq)]
pub enum DiscoveryError {
    #[error("ascending factorial needs a positive base, got {0}")]
    NonPositiveArgument(f64),
    #[error("(sigma, theta) = ({sigma}, {theta}) violates sigma in (0,1), theta > -sigma")]
    Infeasible { sigma: f64, theta: f64 },
    #[error("(sigma, theta) = ({sigma}, {theta}) lies outside the search region")]
    OutsideRegion { sigma: f64, theta: f64 },
    #[error("{n} observation(s) are not enough to estimate sigma and theta")]
    InsufficientData { n: u64 },
    #[error("need 1 <= j <= n, got n = {n}, j = {j}")]
    BadCounts { n: u64, j: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PYParams {
    pub sigma: f64,
    pub theta: f64,
}

impl PYParams {
    /// Requires `σ ∈ (0, 1)` and `θ > -σ`.
    pub fn new(sigma: f64, theta: f64) -> Result<Self, DiscoveryError> {
        if !is_feasible(sigma, theta) || !theta.is_finite() {
            return Err(DiscoveryError::Infeasible { sigma, theta });
        }
        Ok(Self { sigma, theta })
    }
}

/// `n`, `j`, and the nonzero `(r, l_r)` pairs of a frequency vector.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionCounts {
    pub n: u64,
    pub j: u64,
    pub pairs: Vec<(u64, u64)>,
}

impl From<&FrequencyVector> for PartitionCounts {
    fn from(fv: &FrequencyVector) -> Self {
        Self {
            n: fv.n(),
            j: fv.j(),
            pairs: fv.nonzero(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PYEstimate {
    pub params: PYParams,
    /// Unpenalized log-likelihood (up to parameter-free terms) at `params`.
    pub log_lik: f64,
    pub u_now: f64,
    pub n: u64,
    pub j: u64,
    /// Local optimum reached from each start, in start order.
    pub trace: Vec<TracePoint>,
}

impl PYEstimate {
    pub fn forecast(&self, m: u64) -> f64 {
        discovery_future(self.params, self.n, self.j, m)
    }
}

/// Probability that observation `n + 1` is a new species.
pub fn discovery_now(params: PYParams, n: u64, j: u64) -> f64 {
    (params.theta + j as f64 * params.sigma) / (params.theta + n as f64)
}

/// Probability that observation `n + m + 1` is a species unseen among the
/// first `n + m`. `m = 0` reduces to [`discovery_now`].
pub fn discovery_future(params: PYParams, n: u64, j: u64, m: u64) -> f64 {
    let now = discovery_now(params, n, j);
    if m == 0 {
        return now;
    }
    let base = params.theta + n as f64;
    // both bases are positive for feasible params and n >= 1
    let num = log_asc_factorial(base + params.sigma, m).expect("positive base");
    let den = log_asc_factorial(base + 1.0, m).expect("positive base");
    now * (num - den).exp()
}

/// Checks `1 <= j <= n` before evaluating [`discovery_now`].
pub fn checked_discovery_now(params: PYParams, n: u64, j: u64) -> Result<f64, DiscoveryError> {
    if j == 0 || j > n {
        return Err(DiscoveryError::BadCounts { n, j });
    }
    Ok(discovery_now(params, n, j))
}
