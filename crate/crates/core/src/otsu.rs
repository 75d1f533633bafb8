//! Single-image baseline: Lee filter, histogram equalization and Otsu's
//! threshold, with flood taken as the dark class.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::digest::stack_digest;
use crate::error::{Error, Result};
use crate::postproc::{FloodMask, MaskProvenance};
use crate::raster::RasterStack;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum OtsuChannel {
    #[default]
    #[serde(rename = "VV", alias = "vv")]
    Vv,
    #[serde(rename = "VH", alias = "vh")]
    Vh,
}

impl OtsuChannel {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Vv => "VV",
            Self::Vh => "VH",
        }
    }

    /// Method identifier used in metrics tables, e.g. `otsu-vv`.
    pub fn method_id(&self) -> String {
        format!("otsu-{}", self.name().to_ascii_lowercase())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OtsuConfig {
    pub bins: usize,
    pub lee_window: usize,
    pub equalize: bool,
    pub channel: OtsuChannel,
}

impl Default for OtsuConfig {
    fn default() -> Self {
        Self {
            bins: 256,
            lee_window: 7,
            equalize: true,
            channel: OtsuChannel::Vv,
        }
    }
}

impl OtsuConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bins < 2 {
            return Err(Error::Parameter(format!(
                "need at least 2 bins, got {}",
                self.bins
            )));
        }
        if self.lee_window == 0 || self.lee_window.is_multiple_of(2) {
            return Err(Error::Parameter(format!(
                "Lee window must be odd and positive, got {}",
                self.lee_window
            )));
        }
        Ok(())
    }
}

/// Local mean and variance over the finite cells of each clipped window.
fn local_moments(image: &Array2<f64>, window: usize) -> (Array2<f64>, Array2<f64>) {
    let (h, w) = image.dim();
    let half = window / 2;
    let mut mean = Array2::from_elem((h, w), f64::NAN);
    let mut var = Array2::from_elem((h, w), f64::NAN);
    for r in 0..h {
        for c in 0..w {
            if !image[[r, c]].is_finite() {
                continue;
            }
            let (mut n, mut s) = (0.0, 0.0);
            let rows = r.saturating_sub(half)..(r + half + 1).min(h);
            let cols = c.saturating_sub(half)..(c + half + 1).min(w);
            for rr in rows.clone() {
                for cc in cols.clone() {
                    let v = image[[rr, cc]];
                    if v.is_finite() {
                        n += 1.0;
                        s += v;
                    }
                }
            }
            let m = s / n;
            let mut ss = 0.0;
            for rr in rows.clone() {
                for cc in cols.clone() {
                    let v = image[[rr, cc]];
                    if v.is_finite() {
                        ss += (v - m) * (v - m);
                    }
                }
            }
            mean[[r, c]] = m;
            var[[r, c]] = ss / n;
        }
    }
    (mean, var)
}

/// Additive Lee filter: `m + k (x - m)` with `k = max(0, (v - v_noise) / v)`,
/// where `m`, `v` are the local mean and variance and `v_noise` is the mean
/// local variance over the scene. NaN cells stay NaN.
pub fn lee_filter(image: &Array2<f64>, window: usize) -> Result<Array2<f64>> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::Parameter(format!(
            "Lee window must be odd, got {window}"
        )));
    }
    let (mean, var) = local_moments(image, window);
    let finite: Vec<f64> = var.iter().copied().filter(|v| v.is_finite()).collect();
    let noise = if finite.is_empty() {
        0.0
    } else {
        finite.iter().sum::<f64>() / finite.len() as f64
    };
    let mut out = image.clone();
    for ((x, &m), &v) in out.iter_mut().zip(&mean).zip(&var) {
        if !x.is_finite() {
            continue;
        }
        let gain = if v > 0.0 {
            ((v - noise) / v).max(0.0)
        } else {
            0.0
        };
        *x = m + gain * (*x - m);
    }
    Ok(out)
}

/// Counts of finite values in `bins` equal-width bins over `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub counts: Vec<u64>,
    pub lo: f64,
    pub hi: f64,
}

impl Histogram {
    pub fn from_values<'a>(
        values: impl IntoIterator<Item = &'a f64> + Clone,
        bins: usize,
    ) -> Result<Self> {
        if bins < 2 {
            return Err(Error::Parameter(format!(
                "need at least 2 bins, got {bins}"
            )));
        }
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in values.clone().into_iter().filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if lo > hi {
            return Err(Error::DegenerateHistogram("no finite values".into()));
        }
        let mut h = Self {
            counts: vec![0; bins],
            lo,
            hi,
        };
        for &v in values.into_iter().filter(|v| v.is_finite()) {
            let b = h.bin_of(v);
            h.counts[b] += 1;
        }
        Ok(h)
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bins() as f64
    }

    pub fn bin_of(&self, v: f64) -> usize {
        if self.hi <= self.lo {
            return self.bins() - 1;
        }
        let b = ((v - self.lo) / (self.hi - self.lo) * self.bins() as f64).floor();
        (b.max(0.0) as usize).min(self.bins() - 1)
    }

    /// Lower edge of bin `k` (`k == bins` gives the upper bound).
    pub fn edge(&self, k: usize) -> f64 {
        if k == self.bins() {
            self.hi
        } else {
            self.lo + k as f64 * self.width()
        }
    }

    pub fn center(&self, k: usize) -> f64 {
        self.lo + (k as f64 + 0.5) * self.width()
    }
}

/// Maps each finite value to the empirical CDF of its bin, in `(0, 1]`.
pub fn histogram_equalization(image: &Array2<f64>, bins: usize) -> Result<Array2<f64>> {
    let hist = Histogram::from_values(image.iter(), bins)?;
    let total: u64 = hist.counts.iter().sum();
    let mut cdf = Vec::with_capacity(hist.bins());
    let mut acc = 0u64;
    for &c in &hist.counts {
        acc += c;
        cdf.push(acc as f64 / total as f64);
    }
    Ok(image.mapv(|v| {
        if v.is_finite() {
            cdf[hist.bin_of(v)]
        } else {
            f64::NAN
        }
    }))
}

/// Interior edge index `k ∈ 1..bins` minimizing the within-class variance
/// `ω₀σ₀² + ω₁σ₁²` of bins `< k` against bins `≥ k`, using bin centres.
/// Ties go to the smaller `k`.
pub fn otsu_bin(hist: &Histogram) -> Result<usize> {
    let total: u64 = hist.counts.iter().sum();
    if total == 0 || hist.hi <= hist.lo {
        return Err(Error::DegenerateHistogram(
            "all values equal; no threshold separates them".into(),
        ));
    }
    let n = total as f64;
    let bins = hist.bins();
    // moments[k] = (weight, sum, square sum) of bin k alone
    let moments: Vec<[f64; 3]> = (0..bins)
        .map(|k| {
            let (p, x) = (hist.counts[k] as f64 / n, hist.center(k));
            if p > 0.0 {
                [p, p * x, p * x * x]
            } else {
                [0.0; 3]
            }
        })
        .collect();
    let mut upper = vec![[0.0; 3]; bins + 1];
    for k in (0..bins).rev() {
        for j in 0..3 {
            upper[k][j] = upper[k + 1][j] + moments[k][j];
        }
    }
    let class_var = |m: [f64; 3]| {
        if m[0] > 0.0 {
            m[2] - m[1] * m[1] / m[0]
        } else {
            0.0
        }
    };
    let mut lower = [0.0; 3];
    let mut best = (f64::INFINITY, 1);
    for k in 1..bins {
        for j in 0..3 {
            lower[j] += moments[k - 1][j];
        }
        let within = class_var(lower) + class_var(upper[k]);
        if within < best.0 {
            best = (within, k);
        }
    }
    Ok(best.1)
}

/// Otsu threshold of the finite values of `image` as a value on its scale.
pub fn otsu_threshold(image: &Array2<f64>, bins: usize) -> Result<f64> {
    let hist = Histogram::from_values(image.iter(), bins)?;
    Ok(hist.edge(otsu_bin(&hist)?))
}

/// Lee filter, optional equalization and Otsu on the event-date image of
/// the configured channel; flood where the processed value is below the
/// threshold.
pub fn otsu_flood_mask(stack: &RasterStack, config: &OtsuConfig) -> Result<FloodMask> {
    config.validate()?;
    let name = config.channel.name();
    let channel = stack.channel_index(name).ok_or_else(|| {
        Error::Input(format!(
            "channel {name} not in stack (has {})",
            stack.channels().join(", ")
        ))
    })?;
    let mut image = lee_filter(&stack.event_image(channel), config.lee_window)?;
    if config.equalize {
        image = histogram_equalization(&image, config.bins)?;
    }
    let threshold = otsu_threshold(&image, config.bins)?;
    Ok(FloodMask {
        mask: image.mapv(|v| v.is_finite().then_some(v < threshold)),
        georef: *stack.georef(),
        provenance: MaskProvenance {
            method: config.channel.method_id(),
            threshold: Some(threshold),
            window: Some(config.lee_window),
            input_digest: stack_digest(stack),
        },
    })
}
