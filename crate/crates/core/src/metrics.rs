//! Confusion counts, segmentation scores and paired significance.

use std::ops::{Add, AddAssign};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::postproc::FloodMask;
use crate::raster::ReferenceMap;

/// Which reference pixels count as positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassScope {
    /// Labels 1 and 2.
    Overall,
    /// Label 1.
    Open,
    /// Label 2.
    Urban,
}

/// Treatment of the other flood class under a per-class scope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OtherClass {
    /// Excluded from all counts.
    #[default]
    Ignore,
    /// Counted as a negative.
    Negative,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

/// Reference truth of one label under `scope`; `None` means ignored.
fn truth(label: u8, scope: ClassScope, other: OtherClass) -> Option<bool> {
    let target = match scope {
        ClassScope::Overall => return Some(label != 0),
        ClassScope::Open => 1,
        ClassScope::Urban => 2,
    };
    match label {
        0 => Some(false),
        l if l == target => Some(true),
        _ => match other {
            OtherClass::Ignore => None,
            OtherClass::Negative => Some(false),
        },
    }
}

/// Counts over pixels where the prediction is not NoData and the label is
/// not ignored under `scope`.
pub fn confusion_counts(
    pred: &Array2<Option<bool>>,
    labels: &Array2<u8>,
    scope: ClassScope,
    other: OtherClass,
) -> Result<ConfusionCounts> {
    if pred.dim() != labels.dim() {
        return Err(Error::Geometry(format!(
            "prediction is {:?} but reference is {:?}",
            pred.dim(),
            labels.dim()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (p, &l) in pred.iter().zip(labels) {
        let (Some(p), Some(t)) = (*p, truth(l, scope, other)) else {
            continue;
        };
        match (p, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

pub fn confusion(
    pred: &FloodMask,
    reference: &ReferenceMap,
    scope: ClassScope,
    other: OtherClass,
) -> Result<ConfusionCounts> {
    confusion_counts(&pred.mask, reference.labels(), scope, other)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean of precision and recall, 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Precision, recall, F1 and IoU with every 0/0 taken as 0.
pub fn metrics(c: &ConfusionCounts) -> Scores {
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    Scores {
        precision,
        recall,
        f1: f1_score(precision, recall),
        iou: ratio(c.tp, c.tp + c.fp + c.fn_),
    }
}

/// One evaluation row. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub site: String,
    pub method: String,
    pub class: ClassScope,
    pub t: Option<f64>,
    pub w: Option<usize>,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou: f64,
}

impl MetricsRecord {
    pub fn new(
        site: &str,
        method: &str,
        class: ClassScope,
        t: Option<f64>,
        w: Option<usize>,
        counts: ConfusionCounts,
    ) -> Self {
        let s = metrics(&counts);
        Self {
            site: site.to_string(),
            method: method.to_string(),
            class,
            t,
            w,
            tp: counts.tp,
            fp: counts.fp,
            fn_: counts.fn_,
            tn: counts.tn,
            precision: s.precision,
            recall: s.recall,
            f1: s.f1,
            iou: s.iou,
        }
    }

    pub fn counts(&self) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.tp,
            fp: self.fp,
            fn_: self.fn_,
            tn: self.tn,
        }
    }
}

/// Writes records as CSV with a header row.
pub fn write_records_csv(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_records_csv(path: &Path) -> Result<Vec<MetricsRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .map(|rec| rec.map_err(Error::from))
        .collect()
}

const EXACT_MAX: usize = 25;

/// Two-sided paired Wilcoxon signed-rank p-value for `a - b`.
///
/// Zero differences are dropped. Exact null distribution for up to 25
/// non-zero pairs (mid-ranks for ties), otherwise the normal approximation
/// with tie-corrected variance and continuity correction. Returns 1.0 when
/// every difference is zero.
pub fn paired_significance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 5 {
        return Err(Error::Parameter(format!(
            "paired test needs equal lengths of at least 5, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Parameter(
            "paired test given a non-finite score".into(),
        ));
    }
    let mut diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    if diffs.is_empty() {
        return Ok(1.0);
    }
    diffs.sort_by(|x, y| x.abs().total_cmp(&y.abs()));
    let n = diffs.len();

    // Doubled mid-ranks stay integral.
    let mut doubled = vec![0u64; n];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && diffs[j + 1].abs() == diffs[i].abs() {
            j += 1;
        }
        let r2 = (i + 1 + j + 1) as u64;
        for d in &mut doubled[i..=j] {
            *d = r2;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let w2: u64 = diffs
        .iter()
        .zip(&doubled)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();

    if n <= EXACT_MAX {
        let total: u64 = doubled.iter().sum();
        let mut ways = vec![0f64; total as usize + 1];
        ways[0] = 1.0;
        for &r in &doubled {
            for s in (r as usize..=total as usize).rev() {
                ways[s] += ways[s - r as usize];
            }
        }
        let all = 2f64.powi(n as i32);
        let lower: f64 = ways[..=w2 as usize].iter().sum::<f64>() / all;
        let upper: f64 = ways[w2 as usize..].iter().sum::<f64>() / all;
        return Ok((2.0 * lower.min(upper)).min(1.0));
    }

    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let dev = (w2 as f64 / 2.0 - mean).abs() - 0.5;
    if dev <= 0.0 || var <= 0.0 {
        return Ok(1.0);
    }
    let z = dev / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok((2.0 * (1.0 - normal.cdf(z))).min(1.0))
}
