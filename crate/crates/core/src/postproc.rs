//! Window averaging, thresholding and the window/threshold sweep.

use std::path::Path;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::engine::ProbabilityRaster;
use crate::error::{Error, Result};
use crate::metrics::{confusion_counts, metrics, ClassScope, MetricsRecord, OtherClass};
use crate::raster::geotiff::write_u8;
use crate::raster::{Georeference, ReferenceMap};

/// Window sizes covered by the sweep.
pub const SWEEP_WINDOWS: [usize; 7] = [3, 5, 7, 9, 11, 13, 15];

/// Thresholds covered by the sweep: 0.1 to 0.9 in steps of 0.1.
pub fn sweep_thresholds() -> [f64; 9] {
    std::array::from_fn(|k| (k + 1) as f64 / 10.0)
}

/// Mask value written for NoData.
pub const MASK_NODATA: u8 = 255;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PostprocParams {
    pub window: usize,
    pub threshold: f64,
}

impl Default for PostprocParams {
    fn default() -> Self {
        Self {
            window: 9,
            threshold: 0.2,
        }
    }
}

impl PostprocParams {
    pub fn validate(&self) -> Result<()> {
        check_window(self.window)?;
        check_threshold(self.threshold)
    }
}

fn check_window(w: usize) -> Result<()> {
    if w == 0 || w.is_multiple_of(2) {
        return Err(Error::Parameter(format!(
            "window must be odd and positive, got {w}"
        )));
    }
    Ok(())
}

fn check_threshold(t: f64) -> Result<()> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::Parameter(format!(
            "threshold must lie in (0, 1), got {t}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskProvenance {
    pub method: String,
    pub threshold: Option<f64>,
    pub window: Option<usize>,
    pub input_digest: String,
}

/// Binary flood map; `None` marks NoData.
#[derive(Debug, Clone, PartialEq)]
pub struct FloodMask {
    pub mask: Array2<Option<bool>>,
    pub georef: Georeference,
    pub provenance: MaskProvenance,
}

impl FloodMask {
    pub fn flood_count(&self) -> usize {
        self.mask.iter().filter(|m| **m == Some(true)).count()
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|m| m.is_some()).count()
    }

    /// 0 dry, 1 flood, 255 NoData.
    pub fn to_u8(&self) -> Array2<u8> {
        self.mask.mapv(|m| match m {
            Some(true) => 1,
            Some(false) => 0,
            None => MASK_NODATA,
        })
    }

    pub fn write_geotiff(&self, path: &Path) -> Result<()> {
        write_u8(path, &self.to_u8(), &self.georef, Some(MASK_NODATA))
    }
}

/// Mean over the finite cells of the `w × w` window centred on each cell.
///
/// Windows are clipped at the border; NaN input cells stay NaN and are
/// skipped by their neighbours.
pub fn box_filter(values: &Array2<f64>, w: usize) -> Result<Array2<f64>> {
    check_window(w)?;
    let (h, wd) = values.dim();
    let half = w / 2;
    // Row pass: windowed sums and valid counts along x.
    let mut sums = Array2::<f64>::zeros((h, wd));
    let mut counts = Array2::<u32>::zeros((h, wd));
    for r in 0..h {
        for c in 0..wd {
            let (mut s, mut n) = (0.0, 0u32);
            for cc in c.saturating_sub(half)..(c + half + 1).min(wd) {
                let v = values[[r, cc]];
                if v.is_finite() {
                    s += v;
                    n += 1;
                }
            }
            sums[[r, c]] = s;
            counts[[r, c]] = n;
        }
    }
    Ok(Array2::from_shape_fn((h, wd), |(r, c)| {
        if !values[[r, c]].is_finite() {
            return f64::NAN;
        }
        let (mut s, mut n) = (0.0, 0u32);
        for rr in r.saturating_sub(half)..(r + half + 1).min(h) {
            s += sums[[rr, c]];
            n += counts[[rr, c]];
        }
        s / f64::from(n)
    }))
}

pub fn box_filter_raster(prob: &ProbabilityRaster, w: usize) -> Result<ProbabilityRaster> {
    Ok(ProbabilityRaster {
        values: box_filter(&prob.values, w)?,
        georef: prob.georef,
        provenance: prob.provenance.clone(),
    })
}

/// `value > t`, NoData preserved.
pub fn threshold_values(values: &Array2<f64>, t: f64) -> Result<Array2<Option<bool>>> {
    check_threshold(t)?;
    Ok(values.mapv(|v| v.is_finite().then_some(v > t)))
}

pub fn threshold_mask(prob: &ProbabilityRaster, t: f64) -> Result<FloodMask> {
    Ok(FloodMask {
        mask: threshold_values(&prob.values, t)?,
        georef: prob.georef,
        provenance: MaskProvenance {
            method: "threshold".into(),
            threshold: Some(t),
            window: None,
            input_digest: prob.provenance.stack_digest.clone(),
        },
    })
}

/// Box filter followed by thresholding.
pub fn detect(
    prob: &ProbabilityRaster,
    params: &PostprocParams,
    method: &str,
) -> Result<FloodMask> {
    params.validate()?;
    let smoothed = box_filter(&prob.values, params.window)?;
    Ok(FloodMask {
        mask: threshold_values(&smoothed, params.threshold)?,
        georef: prob.georef,
        provenance: MaskProvenance {
            method: method.to_string(),
            threshold: Some(params.threshold),
            window: Some(params.window),
            input_digest: prob.provenance.stack_digest.clone(),
        },
    })
}

fn check_grid(values: &Array2<f64>, reference: &ReferenceMap) -> Result<()> {
    if values.dim() != reference.dim() {
        return Err(Error::Geometry(format!(
            "probability raster is {:?} but reference is {:?}",
            values.dim(),
            reference.dim()
        )));
    }
    Ok(())
}

/// Overall-scope metrics for all 63 window/threshold combinations, ordered
/// by threshold, then window.
pub fn parameter_sweep(
    prob: &ProbabilityRaster,
    reference: &ReferenceMap,
    site: &str,
    method: &str,
) -> Result<Vec<MetricsRecord>> {
    check_grid(&prob.values, reference)?;
    let smoothed: Vec<Array2<f64>> = SWEEP_WINDOWS
        .iter()
        .map(|&w| box_filter(&prob.values, w))
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(63);
    for t in sweep_thresholds() {
        for (&w, filtered) in SWEEP_WINDOWS.iter().zip(&smoothed) {
            let mask = threshold_values(filtered, t)?;
            let counts = confusion_counts(
                &mask,
                reference.labels(),
                ClassScope::Overall,
                OtherClass::Ignore,
            )?;
            rows.push(MetricsRecord::new(
                site,
                method,
                ClassScope::Overall,
                Some(t),
                Some(w),
                counts,
            ));
        }
    }
    Ok(rows)
}

/// Overall F1 on each `chip × chip` tile (row-major, partial tiles at the
/// right and bottom edges included) after filtering the whole raster.
pub fn chip_f1(
    prob: &ProbabilityRaster,
    reference: &ReferenceMap,
    params: &PostprocParams,
    chip: usize,
) -> Result<Vec<f64>> {
    params.validate()?;
    check_grid(&prob.values, reference)?;
    if chip == 0 {
        return Err(Error::Parameter("chip size must be positive".into()));
    }
    let mask = threshold_values(&box_filter(&prob.values, params.window)?, params.threshold)?;
    let (h, w) = mask.dim();
    let mut out = Vec::new();
    for r in (0..h).step_by(chip) {
        for c in (0..w).step_by(chip) {
            let (r1, c1) = ((r + chip).min(h), (c + chip).min(w));
            let counts = confusion_counts(
                &mask.slice(s![r..r1, c..c1]).to_owned(),
                &reference.labels().slice(s![r..r1, c..c1]).to_owned(),
                ClassScope::Overall,
                OtherClass::Ignore,
            )?;
            out.push(metrics(&counts).f1);
        }
    }
    Ok(out)
}
