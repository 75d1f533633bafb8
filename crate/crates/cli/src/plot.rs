use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use bcpflood_core::metrics::MetricsRecord;
use bcpflood_core::postproc::{sweep_thresholds, SWEEP_WINDOWS};

const CELL: u32 = 32;

/// Blue-to-yellow ramp for `v ∈ [0, 1]`.
fn ramp(v: f64) -> [u8; 3] {
    const LO: [f64; 3] = [40.0, 30.0, 110.0];
    const HI: [f64; 3] = [250.0, 230.0, 40.0];
    let v = if v.is_finite() {
        v.clamp(0.0, 1.0)
    } else {
        0.0
    };
    std::array::from_fn(|i| (LO[i] + v * (HI[i] - LO[i])).round() as u8)
}

/// F1 heatmap with thresholds as rows (0.1 at the top) and windows as
/// columns (3 at the left).
pub fn write_heatmap(path: &Path, rows: &[MetricsRecord]) -> std::io::Result<()> {
    let thresholds = sweep_thresholds();
    let (nt, nw) = (thresholds.len() as u32, SWEEP_WINDOWS.len() as u32);
    let (width, height) = (nw * CELL, nt * CELL);
    let mut pixels = vec![0u8; (width * height * 3) as usize];
    for rec in rows {
        let (Some(t), Some(w)) = (rec.t, rec.w) else {
            continue;
        };
        let Some(ti) = thresholds.iter().position(|x| (x - t).abs() < 1e-9) else {
            continue;
        };
        let Some(wi) = SWEEP_WINDOWS.iter().position(|x| *x == w) else {
            continue;
        };
        let color = ramp(rec.f1);
        for y in ti as u32 * CELL..(ti as u32 + 1) * CELL {
            for x in wi as u32 * CELL..(wi as u32 + 1) * CELL {
                let at = ((y * width + x) * 3) as usize;
                pixels[at..at + 3].copy_from_slice(&color);
            }
        }
    }
    let file = File::create(path)?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width, height);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(std::io::Error::other)?;
    writer
        .write_image_data(&pixels)
        .map_err(std::io::Error::other)
}
