use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashMap;

use crate::error::{Error, Result};

use super::integrals::{beta_ratio_table, combine_log_odds, log_w_integral, QuadratureRule};
use super::partition::{model_columns, within_between, PartitionState};
use super::sample::TimeSeriesSample;
use super::{BcpConfig, ChannelMode};

/// `W` at or below this fraction of the model-domain total sum of squares is
/// rounding noise from exactly constant blocks and is taken as zero.
const WITHIN_ZERO_FRACTION: f64 = 1e-12;

/// Posterior summaries of one sampler run.
#[derive(Debug, Clone, PartialEq)]
pub struct BcpResult {
    /// `P(U_i = 1)` for each of the `n - 1` positions of the compacted series.
    pub change_probability: Vec<f64>,
    /// Average over retained sweeps of the mean of each step's block, `n × d`.
    pub posterior_mean: Array2<f64>,
    pub sweeps_used: usize,
    /// Index in the input sample of each retained (valid) time step.
    pub kept_indices: Vec<usize>,
}

/// Conditional odds of one series under a fixed configuration.
pub(crate) struct ChangeModel<'a> {
    columns: Vec<Vec<f64>>,
    power: f64,
    channels: u32,
    log_beta: Vec<f64>,
    lambda: f64,
    rule: &'a QuadratureRule,
    within_floor: f64,
    zero_variance: bool,
}

type IntegralCache = FxHashMap<Vec<u64>, f64>;

impl<'a> ChangeModel<'a> {
    /// `sample` must be fully valid with at least two steps.
    pub(crate) fn new(
        sample: &TimeSeriesSample,
        pooled: bool,
        config: &BcpConfig,
        rule: &'a QuadratureRule,
    ) -> Result<Self> {
        let n = sample.len();
        let d = sample.channels();
        let columns = model_columns(sample, pooled && d > 1);
        let model_tss: f64 = columns.iter().flatten().map(|x| x * x).sum();
        let zero_variance =
            sample.total_sum_of_squares() < config.zero_variance_epsilon || model_tss == 0.0;
        Ok(Self {
            columns,
            power: (d * (n - 1)) as f64 / 2.0,
            channels: d as u32,
            log_beta: beta_ratio_table(n, config.gamma)?,
            lambda: config.lambda,
            rule,
            within_floor: WITHIN_ZERO_FRACTION * model_tss,
            zero_variance,
        })
    }

    pub(crate) fn is_zero_variance(&self) -> bool {
        self.zero_variance
    }

    /// `ln ∫_0^λ w^{d(b-1)/2} / (W + B w)^k dw` for the partition `indicators`
    /// with `blocks` blocks. Each channel contributes its own `w^{(b-1)/2}`.
    pub(crate) fn ln_partition_integral(&self, indicators: &[bool], blocks: usize) -> Result<f64> {
        let (within, between) = within_between(&self.columns, indicators);
        let within = if within <= self.within_floor {
            0.0
        } else {
            within
        };
        log_w_integral(
            within,
            between,
            self.power,
            (blocks - 1) as u32 * self.channels,
            self.lambda,
            self.rule,
        )
    }

    pub(crate) fn log_beta(&self, merged_blocks: usize) -> f64 {
        self.log_beta[merged_blocks]
    }

    fn integral_for(
        &self,
        state: &mut PartitionState,
        i: usize,
        value: bool,
        blocks: usize,
        cache: Option<&mut IntegralCache>,
    ) -> Result<f64> {
        state.with_probe(i, value, |indicators, words| match cache {
            Some(cache) => {
                if let Some(v) = cache.get(words) {
                    return Ok(*v);
                }
                let v = self.ln_partition_integral(indicators, blocks)?;
                cache.insert(words.to_vec(), v);
                Ok(v)
            }
            None => self.ln_partition_integral(indicators, blocks),
        })
    }

    fn log_odds(
        &self,
        i: usize,
        state: &mut PartitionState,
        mut cache: Option<&mut IntegralCache>,
    ) -> Result<f64> {
        if self.zero_variance {
            return Ok(f64::NEG_INFINITY);
        }
        let merged_blocks = state.block_count() - usize::from(state.indicators()[i]);
        let ln_merged = self.integral_for(state, i, false, merged_blocks, cache.as_deref_mut())?;
        let ln_split = self.integral_for(state, i, true, merged_blocks + 1, cache)?;
        Ok(combine_log_odds(
            self.log_beta(merged_blocks),
            ln_split,
            ln_merged,
        ))
    }

    fn sweep<R: Rng>(
        &self,
        sample: &TimeSeriesSample,
        state: &mut PartitionState,
        rng: &mut R,
        mut cache: Option<&mut IntegralCache>,
    ) -> Result<()> {
        for i in 0..state.indicators().len() {
            let lo = self.log_odds(i, state, cache.as_deref_mut())?;
            let p = probability(lo);
            let u: f64 = rng.random();
            state.set(i, u < p, sample);
        }
        Ok(())
    }
}

pub(crate) fn probability(log_odds: f64) -> f64 {
    1.0 / (1.0 + (-log_odds).exp())
}

fn check_sample(sample: &TimeSeriesSample, partition: &PartitionState) -> Result<()> {
    if sample.len() < 2 {
        return Err(Error::InsufficientData {
            valid: sample.valid_count(),
        });
    }
    if partition.indicators().len() + 1 != sample.len() {
        return Err(Error::Contract(format!(
            "partition of length {} does not match series of length {}",
            partition.indicators().len(),
            sample.len()
        )));
    }
    if !sample.is_fully_valid() {
        return Err(Error::Contract("series contains invalid time steps".into()));
    }
    Ok(())
}

/// Log conditional odds `ln(p_i / (1 - p_i))` of a changepoint after step
/// `i` (0-based indicator index), given the other indicators of `partition`.
///
/// Returns `−∞` for series under the zero-variance rule. In
/// [`ChannelMode::PerChannelMax`] the largest per-channel value is returned.
pub fn conditional_change_odds(
    i: usize,
    sample: &TimeSeriesSample,
    partition: &PartitionState,
    config: &BcpConfig,
) -> Result<f64> {
    config.validate()?;
    check_sample(sample, partition)?;
    if i >= partition.indicators().len() {
        return Err(Error::Contract(format!("position {i} out of range")));
    }
    let rule = QuadratureRule::new(config.quadrature_nodes)?;
    let mut state = partition.clone();
    match config.channel_mode {
        ChannelMode::Single | ChannelMode::Pooled => {
            check_channels(sample, config.channel_mode)?;
            let model = ChangeModel::new(
                sample,
                config.channel_mode == ChannelMode::Pooled,
                config,
                &rule,
            )?;
            model.log_odds(i, &mut state, None)
        }
        ChannelMode::PerChannelMax => {
            let mut best = f64::NEG_INFINITY;
            for c in 0..sample.channels() {
                let sub = sample.channel(c);
                let model = ChangeModel::new(&sub, false, config, &rule)?;
                best = best.max(model.log_odds(i, &mut state, None)?);
            }
            Ok(best)
        }
    }
}

/// One systematic-scan Gibbs sweep over `i = 0..n-1`, drawing each `U_i`
/// from its full conditional given the current values of the others.
pub fn gibbs_pass<R: Rng>(
    sample: &TimeSeriesSample,
    partition: &mut PartitionState,
    config: &BcpConfig,
    rng: &mut R,
) -> Result<()> {
    config.validate()?;
    check_sample(sample, partition)?;
    if config.channel_mode == ChannelMode::PerChannelMax && sample.channels() > 1 {
        return Err(Error::Contract(
            "per-channel-max runs independent chains; sweep each channel separately".into(),
        ));
    }
    let pooled = config.channel_mode == ChannelMode::Pooled;
    if !pooled {
        check_channels(sample, ChannelMode::Single)?;
    }
    let rule = QuadratureRule::new(config.quadrature_nodes)?;
    let model = ChangeModel::new(sample, pooled, config, &rule)?;
    model.sweep(sample, partition, rng, None)
}

fn check_channels(sample: &TimeSeriesSample, mode: ChannelMode) -> Result<()> {
    if mode == ChannelMode::Single && sample.channels() != 1 {
        return Err(Error::Contract(format!(
            "single-channel mode given {} channels",
            sample.channels()
        )));
    }
    Ok(())
}

/// Reusable sampler: validated configuration plus quadrature rule.
///
/// Immutable once built; share it across threads and call [`BcpSampler::run_with_seed`]
/// with a per-series seed.
#[derive(Debug, Clone)]
pub struct BcpSampler {
    config: BcpConfig,
    rule: QuadratureRule,
}

impl BcpSampler {
    pub fn new(config: BcpConfig) -> Result<Self> {
        config.validate()?;
        let rule = QuadratureRule::new(config.quadrature_nodes)?;
        Ok(Self { config, rule })
    }

    pub fn config(&self) -> &BcpConfig {
        &self.config
    }

    pub fn run(&self, sample: &TimeSeriesSample) -> Result<BcpResult> {
        self.run_with_seed(sample, self.config.seed)
    }

    /// Drops invalid steps, then runs `burn_in` discarded sweeps followed by
    /// `iterations` retained sweeps from the all-false partition.
    pub fn run_with_seed(&self, sample: &TimeSeriesSample, seed: u64) -> Result<BcpResult> {
        let (compact, kept_indices) = sample.compact();
        if compact.len() < 2 {
            return Err(Error::InsufficientData {
                valid: compact.len(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = compact.len();
        let d = compact.channels();
        let (counts, posterior_mean) = match self.config.channel_mode {
            ChannelMode::Single => {
                check_channels(&compact, ChannelMode::Single)?;
                self.chain(&compact, false, &mut rng)?
            }
            ChannelMode::Pooled => self.chain(&compact, true, &mut rng)?,
            ChannelMode::PerChannelMax => {
                let mut counts = vec![0u64; n - 1];
                let mut means = Array2::zeros((n, d));
                for c in 0..d {
                    let (cc, mc) = self.chain(&compact.channel(c), false, &mut rng)?;
                    for (best, v) in counts.iter_mut().zip(cc) {
                        *best = (*best).max(v);
                    }
                    means.column_mut(c).assign(&mc.column(0));
                }
                (counts, means)
            }
        };
        let sweeps = self.config.iterations as f64;
        Ok(BcpResult {
            change_probability: counts.iter().map(|&k| k as f64 / sweeps).collect(),
            posterior_mean,
            sweeps_used: self.config.iterations,
            kept_indices,
        })
    }

    fn chain<R: Rng>(
        &self,
        sample: &TimeSeriesSample,
        pooled: bool,
        rng: &mut R,
    ) -> Result<(Vec<u64>, Array2<f64>)> {
        let n = sample.len();
        let d = sample.channels();
        let model = ChangeModel::new(sample, pooled, &self.config, &self.rule)?;
        let mut state = PartitionState::new(sample);
        let mut counts = vec![0u64; n - 1];
        let mut mean_acc = Array2::<f64>::zeros((n, d));

        if model.is_zero_variance() {
            // Every draw is U_i = 0, so the chain never leaves the single block.
            let block = &state.blocks()[0];
            for c in 0..d {
                mean_acc.column_mut(c).fill(block.mean(c));
            }
            return Ok((counts, mean_acc));
        }

        let mut cache = IntegralCache::default();
        for _ in 0..self.config.burn_in {
            model.sweep(sample, &mut state, rng, Some(&mut cache))?;
        }
        for _ in 0..self.config.iterations {
            model.sweep(sample, &mut state, rng, Some(&mut cache))?;
            for (k, &u) in counts.iter_mut().zip(state.indicators()) {
                *k += u64::from(u);
            }
            for block in state.blocks() {
                for c in 0..d {
                    let m = block.mean(c);
                    for t in block.start..block.end {
                        mean_acc[[t, c]] += m;
                    }
                }
            }
        }
        mean_acc /= self.config.iterations as f64;
        Ok((counts, mean_acc))
    }
}

/// Runs the sampler on `sample` with `config.seed`.
pub fn run_bcp(sample: &TimeSeriesSample, config: &BcpConfig) -> Result<BcpResult> {
    BcpSampler::new(config.clone())?.run(sample)
}
