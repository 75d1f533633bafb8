use crate::error::{Error, Result};

use super::sample::TimeSeriesSample;

/// Contiguous run of time steps `start..end` with cached per-channel sums.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub start: usize,
    pub end: usize,
    pub sums: Vec<f64>,
    pub sq_sums: Vec<f64>,
}

impl Block {
    fn from_range(sample: &TimeSeriesSample, start: usize, end: usize) -> Self {
        let d = sample.channels();
        let mut sums = vec![0.0; d];
        let mut sq_sums = vec![0.0; d];
        for t in start..end {
            for c in 0..d {
                let x = sample.value(t, c);
                sums[c] += x;
                sq_sums[c] += x * x;
            }
        }
        Self {
            start,
            end,
            sums,
            sq_sums,
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    pub fn mean(&self, channel: usize) -> f64 {
        self.sums[channel] / self.len() as f64
    }
}

/// Changepoint indicators `U` plus the block structure they induce.
///
/// `indicators[i]` is true when a new block starts at step `i + 1`. The
/// block list and a packed bit mask are kept in sync with the indicators.
#[derive(Debug, Clone)]
pub struct PartitionState {
    indicators: Vec<bool>,
    words: Vec<u64>,
    blocks: Vec<Block>,
}

impl PartitionState {
    /// All-false partition (a single block) over `sample`.
    pub fn new(sample: &TimeSeriesSample) -> Self {
        let m = sample.len().saturating_sub(1);
        Self {
            indicators: vec![false; m],
            words: vec![0; m.div_ceil(64)],
            blocks: vec![Block::from_range(sample, 0, sample.len())],
        }
    }

    /// Partition with the given indicators; caches are computed from scratch.
    pub fn from_indicators(sample: &TimeSeriesSample, indicators: &[bool]) -> Result<Self> {
        if indicators.len() + 1 != sample.len() {
            return Err(Error::Contract(format!(
                "{} indicators for a series of length {}",
                indicators.len(),
                sample.len()
            )));
        }
        let mut words = vec![0u64; indicators.len().div_ceil(64)];
        let mut blocks = Vec::new();
        let mut start = 0;
        for (i, &u) in indicators.iter().enumerate() {
            if u {
                words[i / 64] |= 1 << (i % 64);
                blocks.push(Block::from_range(sample, start, i + 1));
                start = i + 1;
            }
        }
        blocks.push(Block::from_range(sample, start, sample.len()));
        Ok(Self {
            indicators: indicators.to_vec(),
            words,
            blocks,
        })
    }

    pub fn indicators(&self) -> &[bool] {
        &self.indicators
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    #[cfg(test)]
    pub(crate) fn words(&self) -> &[u64] {
        &self.words
    }

    fn block_of(&self, t: usize) -> usize {
        self.blocks.partition_point(|b| b.end <= t)
    }

    fn set_bit(&mut self, i: usize, value: bool) {
        self.indicators[i] = value;
        let mask = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    /// Sets `U_i`, splitting or merging the affected blocks.
    pub fn set(&mut self, i: usize, value: bool, sample: &TimeSeriesSample) {
        if self.indicators[i] == value {
            return;
        }
        self.set_bit(i, value);
        if value {
            let k = self.block_of(i);
            let Block { start, end, .. } = self.blocks[k];
            self.blocks[k] = Block::from_range(sample, start, i + 1);
            self.blocks
                .insert(k + 1, Block::from_range(sample, i + 1, end));
        } else {
            let k = self.block_of(i);
            let right = self.blocks.remove(k + 1);
            let left = &mut self.blocks[k];
            left.end = right.end;
            for c in 0..left.sums.len() {
                left.sums[c] += right.sums[c];
                left.sq_sums[c] += right.sq_sums[c];
            }
        }
    }

    /// Evaluates `f` with `U_i` temporarily forced to `value`; block caches
    /// are not touched.
    pub(crate) fn with_probe<T>(
        &mut self,
        i: usize,
        value: bool,
        f: impl FnOnce(&[bool], &[u64]) -> T,
    ) -> T {
        let current = self.indicators[i];
        self.set_bit(i, value);
        let out = f(&self.indicators, &self.words);
        self.set_bit(i, current);
        out
    }

    /// Largest relative discrepancy between cached block sums and sums
    /// recomputed from scratch.
    pub fn max_cache_error(&self, sample: &TimeSeriesSample) -> f64 {
        let fresh = match PartitionState::from_indicators(sample, &self.indicators) {
            Ok(p) => p,
            Err(_) => return f64::INFINITY,
        };
        if fresh.blocks.len() != self.blocks.len() {
            return f64::INFINITY;
        }
        let rel = |a: f64, b: f64| {
            let scale = a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
            if a == b {
                0.0
            } else {
                (a - b).abs() / scale
            }
        };
        let mut worst = 0.0f64;
        for (a, b) in self.blocks.iter().zip(&fresh.blocks) {
            if a.start != b.start || a.end != b.end {
                return f64::INFINITY;
            }
            for c in 0..a.sums.len() {
                worst = worst.max(rel(a.sums[c], b.sums[c]));
                worst = worst.max(rel(a.sq_sums[c], b.sq_sums[c]));
            }
        }
        worst
    }
}

/// Model-domain columns: centered for one channel, standardized (population
/// variance, zero-variance channels set to 0) when pooling several.
pub(crate) fn model_columns(sample: &TimeSeriesSample, standardize: bool) -> Vec<Vec<f64>> {
    sample
        .values()
        .columns()
        .into_iter()
        .map(|col| {
            let n = col.len() as f64;
            let mean = col.sum() / n;
            let centered: Vec<f64> = col.iter().map(|x| x - mean).collect();
            if !standardize {
                return centered;
            }
            let var = centered.iter().map(|x| x * x).sum::<f64>() / n;
            if var > 0.0 {
                let sd = var.sqrt();
                centered.iter().map(|x| x / sd).collect()
            } else {
                vec![0.0; centered.len()]
            }
        })
        .collect()
}

/// Within- and between-block sums of squares, summed over columns.
pub(crate) fn within_between(columns: &[Vec<f64>], indicators: &[bool]) -> (f64, f64) {
    let mut within = 0.0;
    let mut between = 0.0;
    for col in columns {
        let n = col.len();
        let grand = col.iter().sum::<f64>() / n as f64;
        let mut add_block = |s: usize, e: usize| {
            let block = &col[s..e];
            let mean = block.iter().sum::<f64>() / block.len() as f64;
            within += block.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
            between += block.len() as f64 * (mean - grand) * (mean - grand);
        };
        let mut start = 0;
        for (i, &u) in indicators.iter().enumerate() {
            if u {
                add_block(start, i + 1);
                start = i + 1;
            }
        }
        add_block(start, n);
    }
    (within, between)
}

/// Within-block (`W`) and between-block (`B`) sums of squares of `sample`
/// under `partition`.
///
/// With more than one channel each channel is standardized first and the
/// per-channel sums are added. `W + B` equals the total sum of squares.
pub fn block_sums(sample: &TimeSeriesSample, partition: &PartitionState) -> Result<(f64, f64)> {
    if partition.indicators().len() + 1 != sample.len() {
        return Err(Error::Contract(format!(
            "partition of length {} does not match series of length {}",
            partition.indicators().len(),
            sample.len()
        )));
    }
    if !sample.is_fully_valid() {
        return Err(Error::Contract(
            "block sums require every time step to be valid".into(),
        ));
    }
    let columns = model_columns(sample, sample.channels() > 1);
    Ok(within_between(&columns, partition.indicators()))
}
