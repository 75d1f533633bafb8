use chrono::{Datelike, Duration, NaiveDate};
use ndarray::{Array2, Array4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Georeference, RasterStack, ReferenceMap, Unit};
use crate::error::{Error, Result};

/// Closed polygon in pixel coordinates, vertices as `[x, y]` = `[col, row]`.
///
/// A pixel belongs to the polygon when its centre `(col + 0.5, row + 0.5)`
/// lies inside (even-odd rule).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polygon(pub Vec<[f64; 2]>);

impl Polygon {
    pub fn area(&self) -> f64 {
        let v = &self.0;
        let n = v.len();
        (0..n)
            .map(|i| {
                let (a, b) = (v[i], v[(i + 1) % n]);
                a[0] * b[1] - b[0] * a[1]
            })
            .sum::<f64>()
            .abs()
            / 2.0
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let v = &self.0;
        let mut inside = false;
        let mut j = v.len() - 1;
        for i in 0..v.len() {
            let (xi, yi) = (v[i][0], v[i][1]);
            let (xj, yj) = (v[j][0], v[j][1]);
            if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
                inside = !inside;
            }
            j = i;
        }
        inside
    }

    fn mask(&self, height: usize, width: usize, what: &str) -> Result<Array2<bool>> {
        if self.0.len() < 3 || self.0.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::SceneSpec(format!(
                "{what} polygon needs at least 3 finite vertices"
            )));
        }
        if self.area() == 0.0 {
            return Err(Error::SceneSpec(format!("{what} polygon has zero area")));
        }
        let mask = Array2::from_shape_fn((height, width), |(r, c)| {
            self.contains(c as f64 + 0.5, r as f64 + 0.5)
        });
        if !mask.iter().any(|&m| m) {
            return Err(Error::SceneSpec(format!(
                "{what} polygon covers no pixel of the {height}x{width} grid"
            )));
        }
        Ok(mask)
    }
}

/// Mean land and open-water backscatter of one channel, in dB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub name: String,
    pub mean_db: f64,
    pub water_db: f64,
}

fn default_channels() -> Vec<ChannelSpec> {
    vec![
        ChannelSpec {
            name: "VV".into(),
            mean_db: -9.0,
            water_db: -22.0,
        },
        ChannelSpec {
            name: "VH".into(),
            mean_db: -16.0,
            water_db: -28.0,
        },
    ]
}

/// Parameters of a synthetic flood scene.
///
/// Every pixel follows `mean + texture + seasonal + noise`, with a
/// per-pixel static texture offset, a scene-wide annual sinusoid and i.i.d.
/// Gaussian noise. Pixels inside `flood_polygon` get `flood_drop_db` added at
/// the final date (negative values darken). Optional permanent water holds
/// the channel's water level on every date; optional flooded-urban pixels
/// change by `urban_change_db` at the final date and are labelled 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    pub n_dates: usize,
    pub seasonal_amplitude_db: f64,
    pub speckle_sigma_db: f64,
    pub texture_sigma_db: f64,
    pub flood_polygon: Polygon,
    pub flood_drop_db: f64,
    pub permanent_water: Option<Polygon>,
    pub urban_polygon: Option<Polygon>,
    pub urban_change_db: f64,
    pub channels: Vec<ChannelSpec>,
    pub seed: u64,
    pub start_date: NaiveDate,
    pub revisit_days: u32,
    pub resolution_m: f64,
    pub origin: [f64; 2],
    pub epsg: u16,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            n_dates: 12,
            seasonal_amplitude_db: 1.0,
            speckle_sigma_db: 1.0,
            texture_sigma_db: 0.5,
            flood_polygon: Polygon(vec![
                [0.0, 0.0],
                [26.0, 0.0],
                [30.0, 20.0],
                [24.0, 40.0],
                [29.0, 64.0],
                [0.0, 64.0],
            ]),
            flood_drop_db: -8.0,
            permanent_water: None,
            urban_polygon: None,
            urban_change_db: 3.0,
            channels: default_channels(),
            seed: 42,
            start_date: NaiveDate::from_ymd_opt(2020, 8, 1).expect("valid date"),
            revisit_days: 30,
            resolution_m: 20.0,
            origin: [500_000.0, 3_900_000.0],
            epsg: 32650,
        }
    }
}

impl SceneSpec {
    /// Default scene with no injected change.
    pub fn negative_control() -> Self {
        Self {
            flood_drop_db: 0.0,
            ..Self::default()
        }
    }

    /// Default scene plus a static dark water body away from the flood.
    pub fn with_permanent_water() -> Self {
        Self {
            permanent_water: Some(Polygon(vec![
                [42.0, 10.0],
                [58.0, 10.0],
                [58.0, 30.0],
                [42.0, 30.0],
            ])),
            ..Self::default()
        }
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        (0..self.n_dates)
            .map(|i| self.start_date + Duration::days(i64::from(self.revisit_days) * i as i64))
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::SceneSpec("grid must be non-empty".into()));
        }
        if self.n_dates < 2 {
            return Err(Error::SceneSpec("at least 2 dates required".into()));
        }
        if self.revisit_days == 0 {
            return Err(Error::SceneSpec("revisit_days must be positive".into()));
        }
        if self.channels.is_empty() {
            return Err(Error::SceneSpec("at least one channel required".into()));
        }
        let finite = [
            self.seasonal_amplitude_db,
            self.flood_drop_db,
            self.urban_change_db,
            self.origin[0],
            self.origin[1],
        ];
        if finite.iter().any(|v| !v.is_finite())
            || !(self.speckle_sigma_db >= 0.0 && self.speckle_sigma_db.is_finite())
            || !(self.texture_sigma_db >= 0.0 && self.texture_sigma_db.is_finite())
            || !(self.resolution_m > 0.0 && self.resolution_m.is_finite())
        {
            return Err(Error::SceneSpec(
                "non-finite or negative scale parameter".into(),
            ));
        }
        Ok(())
    }
}

/// Generates the stack and reference map described by `spec`.
///
/// Values are rounded to `f32` so a save/load round trip is exact.
pub fn synth_scene(spec: &SceneSpec) -> Result<(RasterStack, ReferenceMap)> {
    spec.validate()?;
    let (h, w) = (spec.height, spec.width);
    let flood = spec.flood_polygon.mask(h, w, "flood")?;
    let water = match &spec.permanent_water {
        Some(p) => Some(p.mask(h, w, "permanent water")?),
        None => None,
    };
    let urban = match &spec.urban_polygon {
        Some(p) => Some(p.mask(h, w, "urban")?),
        None => None,
    };
    let label = Array2::from_shape_fn((h, w), |ix| {
        if urban.as_ref().is_some_and(|u| u[ix]) {
            2u8
        } else if flood[ix] {
            1
        } else {
            0
        }
    });
    let is_water = |ix: (usize, usize)| label[ix] == 0 && water.as_ref().is_some_and(|m| m[ix]);

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.speckle_sigma_db)
        .map_err(|e| Error::SceneSpec(format!("speckle sigma: {e}")))?;
    let texture_dist = Normal::new(0.0, spec.texture_sigma_db)
        .map_err(|e| Error::SceneSpec(format!("texture sigma: {e}")))?;
    let texture: Vec<Array2<f64>> = spec
        .channels
        .iter()
        .map(|_| Array2::from_shape_simple_fn((h, w), || texture_dist.sample(&mut rng)))
        .collect();

    let dates = spec.dates();
    let last = dates.len() - 1;
    let c = spec.channels.len();
    let mut data = Array4::zeros((dates.len(), c, h, w));
    for (t, date) in dates.iter().enumerate() {
        let phase = 2.0 * std::f64::consts::PI * f64::from(date.ordinal0()) / 365.25;
        let seasonal = spec.seasonal_amplitude_db * phase.sin();
        for (ci, ch) in spec.channels.iter().enumerate() {
            for r in 0..h {
                for col in 0..w {
                    let ix = (r, col);
                    let eps = noise.sample(&mut rng);
                    let mut v = if is_water(ix) {
                        ch.water_db + eps
                    } else {
                        ch.mean_db + texture[ci][ix] + seasonal + eps
                    };
                    if t == last {
                        match label[ix] {
                            1 => v += spec.flood_drop_db,
                            2 => v += spec.urban_change_db,
                            _ => {}
                        }
                    }
                    data[[t, ci, r, col]] = f64::from(v as f32);
                }
            }
        }
    }
    let georef =
        Georeference::north_up(spec.origin[0], spec.origin[1], spec.resolution_m, spec.epsg);
    let stack = RasterStack::new(
        dates,
        spec.channels.iter().map(|c| c.name.clone()).collect(),
        data,
        georef,
        Unit::Db,
    )?;
    Ok((stack, ReferenceMap::new(label, georef)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polygon_membership_and_area() {
        let sq = Polygon(vec![[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]]);
        assert_eq!(sq.area(), 4.0);
        assert!(sq.contains(0.5, 1.5));
        assert!(!sq.contains(2.5, 0.5));
    }

    #[test]
    fn invalid_polygons() {
        let flat = SceneSpec {
            flood_polygon: Polygon(vec![[0.0, 0.0], [5.0, 5.0], [10.0, 10.0]]),
            ..SceneSpec::default()
        };
        assert!(matches!(synth_scene(&flat), Err(Error::SceneSpec(_))));
        let outside = SceneSpec {
            flood_polygon: Polygon(vec![[100.0, 100.0], [110.0, 100.0], [110.0, 110.0]]),
            ..SceneSpec::default()
        };
        assert!(matches!(synth_scene(&outside), Err(Error::SceneSpec(_))));
    }

    #[test]
    fn labels_and_dates() {
        let spec = SceneSpec::with_permanent_water();
        let (stack, reference) = synth_scene(&spec).unwrap();
        assert_eq!(stack.data().dim(), (12, 2, 64, 64));
        assert_eq!(reference.labels()[[5, 2]], 1);
        assert_eq!(reference.labels()[[20, 50]], 0);
        assert_eq!(reference.labels()[[5, 60]], 0);
        assert_eq!(stack.dates()[1] - stack.dates()[0], Duration::days(30));
        // permanent water sits at the channel's water level on every date
        let vv: Vec<f64> = (0..12).map(|t| stack.data()[[t, 0, 20, 50]]).collect();
        assert!(vv.iter().all(|v| (v + 22.0).abs() < 6.0));
    }

    #[test]
    fn negative_control_has_no_step() {
        let (a, ref_a) = synth_scene(&SceneSpec::negative_control()).unwrap();
        let (b, ref_b) = synth_scene(&SceneSpec::default()).unwrap();
        assert_eq!(ref_a, ref_b);
        // identical draws, so the stacks differ only inside the polygon at the last date
        let last = a.len_dates() - 1;
        for ((t, c, r, col), v) in a.data().indexed_iter() {
            let other = b.data()[[t, c, r, col]];
            if t == last && ref_a.labels()[[r, col]] == 1 {
                assert!((other - v + 8.0).abs() < 1e-5);
            } else {
                assert_eq!(*v, other);
            }
        }
    }
}
