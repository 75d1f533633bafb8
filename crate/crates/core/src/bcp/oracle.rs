//! Exact long-run marginals of the systematic-scan sampler for short series.

use crate::error::{Error, Result};

use super::integrals::{combine_log_odds, QuadratureRule};
use super::sample::TimeSeriesSample;
use super::sampler::{probability, ChangeModel};
use super::{BcpConfig, ChannelMode};

/// Longest series accepted by [`exact_stationary`] (`2^15` indicator states).
pub const MAX_EXACT_LEN: usize = 16;

const RESIDUAL_TOLERANCE: f64 = 1e-12;
const MAX_POWER_ITERATIONS: usize = 1_000_000;

/// Marginal `P(U_i = 1)` under the stationary distribution of one full
/// Gibbs sweep, found by power iteration from the all-false state.
///
/// The sweep kernel is the product of the `n - 1` single-site update
/// matrices over all `2^(n-1)` indicator configurations.
pub fn exact_stationary(sample: &TimeSeriesSample, config: &BcpConfig) -> Result<Vec<f64>> {
    config.validate()?;
    let (compact, _) = sample.compact();
    let n = compact.len();
    if n < 2 {
        return Err(Error::InsufficientData { valid: n });
    }
    if n > MAX_EXACT_LEN {
        return Err(Error::TooLarge {
            n,
            max: MAX_EXACT_LEN,
        });
    }
    let rule = QuadratureRule::new(config.quadrature_nodes)?;
    match config.channel_mode {
        ChannelMode::Single => {
            if compact.channels() != 1 {
                return Err(Error::Contract(format!(
                    "single-channel mode given {} channels",
                    compact.channels()
                )));
            }
            marginals(&ChangeModel::new(&compact, false, config, &rule)?, n)
        }
        ChannelMode::Pooled => marginals(&ChangeModel::new(&compact, true, config, &rule)?, n),
        ChannelMode::PerChannelMax => {
            let mut best = vec![0.0f64; n - 1];
            for c in 0..compact.channels() {
                let model = ChangeModel::new(&compact.channel(c), false, config, &rule)?;
                for (b, v) in best.iter_mut().zip(marginals(&model, n)?) {
                    *b = b.max(v);
                }
            }
            Ok(best)
        }
    }
}

fn marginals(model: &ChangeModel<'_>, n: usize) -> Result<Vec<f64>> {
    let m = n - 1;
    if model.is_zero_variance() {
        return Ok(vec![0.0; m]);
    }
    let states = 1usize << m;
    let indicators = |s: usize| -> Vec<bool> { (0..m).map(|i| s >> i & 1 == 1).collect() };

    let mut ln_integral = Vec::with_capacity(states);
    for s in 0..states {
        let blocks = s.count_ones() as usize + 1;
        ln_integral.push(model.ln_partition_integral(&indicators(s), blocks)?);
    }

    // p_set[i][s] for states s with bit i clear.
    let p_set: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let bit = 1usize << i;
            (0..states)
                .map(|s| {
                    if s & bit != 0 {
                        return f64::NAN;
                    }
                    let merged_blocks = s.count_ones() as usize + 1;
                    let lo = combine_log_odds(
                        model.log_beta(merged_blocks),
                        ln_integral[s | bit],
                        ln_integral[s],
                    );
                    probability(lo)
                })
                .collect()
        })
        .collect();

    let mut pi = vec![0.0f64; states];
    pi[0] = 1.0;
    let mut next = pi.clone();
    for _ in 0..MAX_POWER_ITERATIONS {
        next.copy_from_slice(&pi);
        for (i, p_i) in p_set.iter().enumerate() {
            let bit = 1usize << i;
            for s in 0..states {
                if s & bit != 0 {
                    continue;
                }
                let mass = next[s] + next[s | bit];
                let p = p_i[s];
                next[s] = mass * (1.0 - p);
                next[s | bit] = mass * p;
            }
        }
        let residual: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut pi, &mut next);
        if residual < RESIDUAL_TOLERANCE {
            return Ok((0..m)
                .map(|i| (0..states).filter(|s| s >> i & 1 == 1).map(|s| pi[s]).sum())
                .collect());
        }
    }
    Err(Error::Convergence(format!(
        "stationary distribution did not settle within {MAX_POWER_ITERATIONS} sweeps"
    )))
}
