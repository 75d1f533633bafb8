//! Training-free flood mapping from SAR backscatter time series.
//!
//! Each pixel's backscatter history is modelled with the Barry–Hartigan
//! product-partition changepoint model and sampled by systematic-scan Gibbs.
//! The posterior probability of a change at the final (event) observation is
//! smoothed with a NoData-aware moving window, thresholded into a flood mask,
//! and scored against a reference map. An Otsu thresholding baseline is
//! included for comparison.
//!
//! Module map:
//!
//! - [`bcp`]: single-series changepoint model, sampler, and exact small-n oracle.
//! - [`raster`]: raster stacks, manifests, GeoTIFF I/O, aggregation, synthetic scenes.
//! - [`engine`]: parallel per-pixel application of the sampler.
//! - [`postproc`]: box filter, thresholding, and the window/threshold sweep.
//! - [`otsu`]: Lee filter, histogram equalization, and Otsu thresholding.
//! - [`metrics`]: confusion counts, precision/recall/F1/IoU, signed-rank test.

pub mod bcp;
pub mod digest;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod otsu;
pub mod postproc;
pub mod raster;

pub use error::{Error, ErrorCategory, Result};
