//! Barry–Hartigan product-partition changepoint model for one time series.
//!
//! Observations are normal with block-constant means. Conditional on all
//! other indicators, the odds of a changepoint at position `i + 1` factor
//! into an integral over the changepoint probability `p ∈ (0, γ)` and an
//! integral over the variance ratio `w ∈ (0, λ)`; see [`integrals`]. The
//! sampler performs systematic-scan Gibbs sweeps over the indicators and
//! reports the fraction of retained sweeps in which each indicator is set.

pub mod integrals;
mod oracle;
mod partition;
mod sample;
mod sampler;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use integrals::{incomplete_beta_ratio, variance_ratio_integral, QuadratureRule};
pub use oracle::{exact_stationary, MAX_EXACT_LEN};
pub use partition::{block_sums, Block, PartitionState};
pub use sample::TimeSeriesSample;
pub use sampler::{conditional_change_odds, gibbs_pass, run_bcp, BcpResult, BcpSampler};

/// How several channels share one changepoint model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelMode {
    /// Exactly one channel.
    #[default]
    Single,
    /// Standardized channels share one partition; `W` and `B` are summed, the
    /// denominator exponent becomes `d (n - 1) / 2` and the `w` power is
    /// multiplied by `d`.
    Pooled,
    /// Independent univariate chains per channel; elementwise maximum of the
    /// change probabilities.
    PerChannelMax,
}

/// Tuning parameters of the sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BcpConfig {
    /// Upper bound of the uniform prior on the changepoint probability.
    pub gamma: f64,
    /// Upper bound of the uniform prior on the variance ratio `w`.
    pub lambda: f64,
    /// Retained sweeps after burn-in.
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub channel_mode: ChannelMode,
    /// Series whose total sum of squares is below this are treated as
    /// carrying no evidence of change.
    pub zero_variance_epsilon: f64,
    /// Gauss–Legendre nodes per quadrature panel.
    pub quadrature_nodes: usize,
}

impl Default for BcpConfig {
    fn default() -> Self {
        Self {
            gamma: 0.2,
            lambda: 0.2,
            iterations: 500,
            burn_in: 50,
            seed: 0,
            channel_mode: ChannelMode::Single,
            zero_variance_epsilon: 1e-12,
            quadrature_nodes: 64,
        }
    }
}

impl BcpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Parameter(format!(
                "gamma = {} must lie in (0, 1]",
                self.gamma
            )));
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::Parameter(format!(
                "lambda = {} must lie in (0, 1]",
                self.lambda
            )));
        }
        if self.iterations == 0 {
            return Err(Error::Parameter("iterations must be positive".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::Parameter(format!(
                "burn_in = {} must be smaller than iterations = {}",
                self.burn_in, self.iterations
            )));
        }
        if self.zero_variance_epsilon.is_nan() || self.zero_variance_epsilon < 0.0 {
            return Err(Error::Parameter(
                "zero_variance_epsilon must be non-negative".into(),
            ));
        }
        if self.quadrature_nodes < 2 {
            return Err(Error::Parameter(
                "quadrature_nodes must be at least 2".into(),
            ));
        }
        Ok(())
    }
}
