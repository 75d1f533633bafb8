//! Per-pixel changepoint analysis of a raster stack.

use std::str::FromStr;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bcp::{BcpConfig, BcpSampler, ChannelMode};
use crate::digest::{json_digest, stack_digest};
use crate::error::{Error, Result};
use crate::raster::{Georeference, RasterStack};

/// Which channels feed the per-pixel model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelSelection {
    #[default]
    Vv,
    Vh,
    /// VV and VH pooled into one partition.
    Vvvh,
    /// Independent VV and VH chains, elementwise maximum.
    PerChannelMax,
}

impl ChannelSelection {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Vv => "vv",
            Self::Vh => "vh",
            Self::Vvvh => "vvvh",
            Self::PerChannelMax => "per-channel-max",
        }
    }

    /// Channel indices in `stack` and the model mode they imply.
    pub fn resolve(&self, stack: &RasterStack) -> Result<(Vec<usize>, ChannelMode)> {
        let find = |name: &str| {
            stack.channel_index(name).ok_or_else(|| {
                Error::Input(format!(
                    "channel {name} not in stack (has {})",
                    stack.channels().join(", ")
                ))
            })
        };
        Ok(match self {
            Self::Vv => (vec![find("VV")?], ChannelMode::Single),
            Self::Vh => (vec![find("VH")?], ChannelMode::Single),
            Self::Vvvh => (vec![find("VV")?, find("VH")?], ChannelMode::Pooled),
            Self::PerChannelMax => (vec![find("VV")?, find("VH")?], ChannelMode::PerChannelMax),
        })
    }
}

impl FromStr for ChannelSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vv" => Ok(Self::Vv),
            "vh" => Ok(Self::Vh),
            "vvvh" | "vv-vh" => Ok(Self::Vvvh),
            "per-channel-max" => Ok(Self::PerChannelMax),
            other => Err(Error::Parameter(format!(
                "unknown channel selection {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_digest: String,
    pub stack_digest: String,
}

/// Posterior change probability at the event date, NaN where NoData.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityRaster {
    pub values: Array2<f64>,
    pub georef: Georeference,
    pub provenance: Provenance,
}

impl ProbabilityRaster {
    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the chain at `(row, col)`; depends only on its arguments.
pub fn pixel_seed(seed: u64, row: usize, col: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ row as u64) ^ col as u64)
}

#[derive(Serialize)]
struct RunIdentity<'a> {
    config: &'a BcpConfig,
    channels: &'a str,
}

/// Runs the sampler on every pixel and keeps `P(U = 1)` between the last
/// two valid observations. Pixels with fewer than two valid dates, or with
/// the event date missing, are NoData.
///
/// `workers` of 0 uses the available parallelism. Results do not depend on
/// the worker count.
pub fn run_stack(
    stack: &RasterStack,
    config: &BcpConfig,
    selection: ChannelSelection,
    workers: usize,
) -> Result<ProbabilityRaster> {
    let (channels, mode) = selection.resolve(stack)?;
    let config = BcpConfig {
        channel_mode: mode,
        ..config.clone()
    };
    let sampler = BcpSampler::new(config.clone())?;
    let (h, w) = (stack.height(), stack.width());
    let event = stack.len_dates() - 1;

    let pixel = |r: usize, c: usize| -> Result<f64> {
        let sample = stack.pixel_series(r, c, &channels);
        if sample.valid_count() < 2 || !sample.valid()[event] {
            return Ok(f64::NAN);
        }
        let result = sampler.run_with_seed(&sample, pixel_seed(config.seed, r, c))?;
        Ok(*result
            .change_probability
            .last()
            .expect("two valid observations give one indicator"))
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Parameter(format!("cannot start {workers} workers: {e}")))?;
    let rows: Vec<Result<Vec<f64>>> = pool.install(|| {
        (0..h)
            .into_par_iter()
            .map(|r| (0..w).map(|c| pixel(r, c)).collect())
            .collect()
    });
    let mut values = Array2::from_elem((h, w), f64::NAN);
    for (r, row) in rows.into_iter().enumerate() {
        for (c, v) in row?.into_iter().enumerate() {
            values[[r, c]] = v;
        }
    }
    Ok(ProbabilityRaster {
        values,
        georef: *stack.georef(),
        provenance: Provenance {
            config_digest: json_digest(&RunIdentity {
                config: &config,
                channels: selection.as_str(),
            }),
            stack_digest: stack_digest(stack),
        },
    })
}
