use ndarray::{Array2, ArrayView1, Axis};

use crate::error::{Error, Result};

/// One pixel's ordered backscatter observations, `n` time steps by `d` channels.
///
/// All channels share the time axis and a single validity flag per step.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesSample {
    values: Array2<f64>,
    valid: Vec<bool>,
}

impl TimeSeriesSample {
    /// Builds a sample from an `n × d` matrix and per-step validity flags.
    ///
    /// Valid steps must hold finite values in every channel.
    pub fn new(values: Array2<f64>, valid: Vec<bool>) -> Result<Self> {
        if values.nrows() != valid.len() {
            return Err(Error::Contract(format!(
                "{} rows of values but {} validity flags",
                values.nrows(),
                valid.len()
            )));
        }
        if values.ncols() == 0 {
            return Err(Error::Contract("sample needs at least one channel".into()));
        }
        for (t, row) in values.axis_iter(Axis(0)).enumerate() {
            if valid[t] && row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Contract(format!(
                    "time step {t} is flagged valid but holds a non-finite value"
                )));
            }
        }
        Ok(Self { values, valid })
    }

    /// Single-channel sample; non-finite values are marked invalid.
    pub fn univariate(values: &[f64]) -> Self {
        let valid = values.iter().map(|v| v.is_finite()).collect();
        let values = Array2::from_shape_vec((values.len(), 1), values.to_vec())
            .expect("shape matches length");
        Self { values, valid }
    }

    /// Multi-channel sample from equal-length channel slices. A step is
    /// invalid if any channel is non-finite there.
    pub fn from_channels(channels: &[&[f64]]) -> Result<Self> {
        let d = channels.len();
        if d == 0 {
            return Err(Error::Contract("sample needs at least one channel".into()));
        }
        let n = channels[0].len();
        if channels.iter().any(|c| c.len() != n) {
            return Err(Error::Contract("channels differ in length".into()));
        }
        let values = Array2::from_shape_fn((n, d), |(t, c)| channels[c][t]);
        let valid = (0..n)
            .map(|t| channels.iter().all(|c| c[t].is_finite()))
            .collect();
        Ok(Self { values, valid })
    }

    pub fn len(&self) -> usize {
        self.valid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valid.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn value(&self, t: usize, c: usize) -> f64 {
        self.values[[t, c]]
    }

    pub fn column(&self, c: usize) -> ArrayView1<'_, f64> {
        self.values.column(c)
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn is_fully_valid(&self) -> bool {
        self.valid.iter().all(|v| *v)
    }

    /// Drops invalid steps. Returns the compacted sample and, for each kept
    /// step, its index in the original sample.
    pub fn compact(&self) -> (TimeSeriesSample, Vec<usize>) {
        let kept: Vec<usize> = (0..self.len()).filter(|&t| self.valid[t]).collect();
        let values = self.values.select(Axis(0), &kept);
        let valid = vec![true; kept.len()];
        (TimeSeriesSample { values, valid }, kept)
    }

    /// Single-channel view of channel `c` with the shared validity flags.
    pub fn channel(&self, c: usize) -> TimeSeriesSample {
        let values = self.values.select(Axis(1), &[c]);
        TimeSeriesSample {
            values,
            valid: self.valid.clone(),
        }
    }

    /// Total sum of squares about the per-channel means, summed over channels.
    pub fn total_sum_of_squares(&self) -> f64 {
        self.values
            .columns()
            .into_iter()
            .map(|col| {
                let mean = col.mean().unwrap_or(0.0);
                col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>()
            })
            .sum()
    }
}
