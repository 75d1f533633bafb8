use ndarray::{Array2, Array4, Axis};

use super::{RasterStack, ReferenceMap};
use crate::error::Result;

/// Mean of each 2×2 block over its finite cells; NaN when none are finite.
///
/// Odd dimensions are padded with NoData, so the output is
/// `ceil(H/2) × ceil(W/2)`.
pub fn aggregate_2x2(raster: &Array2<f64>) -> Array2<f64> {
    let (h, w) = raster.dim();
    Array2::from_shape_fn((h.div_ceil(2), w.div_ceil(2)), |(r, c)| {
        let mut sum = 0.0;
        let mut count = 0u32;
        for rr in 2 * r..(2 * r + 2).min(h) {
            for cc in 2 * c..(2 * c + 2).min(w) {
                let v = raster[[rr, cc]];
                if v.is_finite() {
                    sum += v;
                    count += 1;
                }
            }
        }
        if count == 0 {
            f64::NAN
        } else {
            sum / f64::from(count)
        }
    })
}

/// Aggregates every date and channel; pixel size doubles.
pub fn aggregate_stack(stack: &RasterStack) -> Result<RasterStack> {
    let (t, c, h, w) = stack.data().dim();
    let mut out = Array4::from_elem((t, c, h.div_ceil(2), w.div_ceil(2)), f64::NAN);
    for ti in 0..t {
        for ci in 0..c {
            let plane = stack
                .data()
                .index_axis(Axis(0), ti)
                .index_axis(Axis(0), ci)
                .to_owned();
            out.index_axis_mut(Axis(0), ti)
                .index_axis_mut(Axis(0), ci)
                .assign(&aggregate_2x2(&plane));
        }
    }
    RasterStack::new(
        stack.dates().to_vec(),
        stack.channels().to_vec(),
        out,
        stack.georef().coarsened(2.0),
        stack.unit(),
    )
}

/// Most frequent label of each 2×2 block (ties go to the larger label),
/// on the same grid as [`aggregate_stack`].
pub fn aggregate_reference(reference: &ReferenceMap) -> Result<ReferenceMap> {
    let labels = reference.labels();
    let (h, w) = labels.dim();
    let out = Array2::from_shape_fn((h.div_ceil(2), w.div_ceil(2)), |(r, c)| {
        let mut votes = [0u8; 3];
        for rr in 2 * r..(2 * r + 2).min(h) {
            for cc in 2 * c..(2 * c + 2).min(w) {
                votes[usize::from(labels[[rr, cc]])] += 1;
            }
        }
        (0..3u8)
            .max_by_key(|&l| (votes[usize::from(l)], l))
            .unwrap_or(0)
    });
    ReferenceMap::new(out, reference.georef().coarsened(2.0))
}
