//! Multi-date raster stacks: types, GeoTIFF I/O, manifests, aggregation and
//! the synthetic scene generator.

mod aggregate;
pub mod geotiff;
mod manifest;
mod synth;

use chrono::NaiveDate;
use ndarray::{Array2, Array3, Array4, Axis};
use serde::{Deserialize, Serialize};

use crate::bcp::TimeSeriesSample;
use crate::error::{Error, Result};

pub use aggregate::{aggregate_2x2, aggregate_reference, aggregate_stack};
pub use manifest::{load_stack, save_stack, BandRef, ManifestEntry, StackManifest};
pub use synth::{synth_scene, ChannelSpec, Polygon, SceneSpec};

/// Affine pixel-to-map transform in GDAL order plus an EPSG code.
///
/// `x = t[0] + col * t[1] + row * t[2]`, `y = t[3] + col * t[4] + row * t[5]`,
/// with `(col, row)` the top-left corner of a pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Georeference {
    pub transform: [f64; 6],
    pub epsg: u16,
}

impl Georeference {
    pub fn north_up(origin_x: f64, origin_y: f64, pixel_size: f64, epsg: u16) -> Self {
        Self {
            transform: [origin_x, pixel_size, 0.0, origin_y, 0.0, -pixel_size],
            epsg,
        }
    }

    /// Ground size of one pixel along x.
    pub fn pixel_width(&self) -> f64 {
        self.transform[1].hypot(self.transform[4])
    }

    /// Same origin with every pixel `factor` times larger.
    pub fn coarsened(&self, factor: f64) -> Self {
        let mut t = self.transform;
        for i in [1, 2, 4, 5] {
            t[i] *= factor;
        }
        Self {
            transform: t,
            epsg: self.epsg,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Platform {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orbit {
    Ascending,
    Descending,
}

/// Backscatter scale of the stored values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    #[default]
    Db,
    Linear,
}

/// `T × C × H × W` backscatter with a shared grid; the last date is the event.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterStack {
    dates: Vec<NaiveDate>,
    channels: Vec<String>,
    data: Array4<f64>,
    nodata: Array3<bool>,
    georef: Georeference,
    unit: Unit,
}

impl RasterStack {
    /// A pixel-date is NoData when any channel holds a non-finite value there.
    pub fn new(
        dates: Vec<NaiveDate>,
        channels: Vec<String>,
        mut data: Array4<f64>,
        georef: Georeference,
        unit: Unit,
    ) -> Result<Self> {
        let (t, c, h, w) = data.dim();
        if t != dates.len() || c != channels.len() {
            return Err(Error::Contract(format!(
                "data is {t}x{c}x{h}x{w} but {} dates and {} channels were given",
                dates.len(),
                channels.len()
            )));
        }
        if t < 2 {
            return Err(Error::Manifest(format!(
                "stack needs at least 2 dates, got {t}"
            )));
        }
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::Geometry(format!("empty grid {c}x{h}x{w}")));
        }
        if let Some(pair) = dates.windows(2).find(|p| p[0] >= p[1]) {
            return Err(Error::Manifest(format!(
                "dates not strictly increasing: {} then {}",
                pair[0], pair[1]
            )));
        }
        for (i, name) in channels.iter().enumerate() {
            if channels[..i].contains(name) {
                return Err(Error::Manifest(format!("duplicate channel {name}")));
            }
        }
        let mut nodata = Array3::from_elem((t, h, w), false);
        for ((ti, _, r, col), v) in data.indexed_iter() {
            if !v.is_finite() {
                nodata[[ti, r, col]] = true;
            }
        }
        for ((ti, _, r, col), v) in data.indexed_iter_mut() {
            if nodata[[ti, r, col]] {
                *v = f64::NAN;
            }
        }
        Ok(Self {
            dates,
            channels,
            data,
            nodata,
            georef,
            unit,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn event_date(&self) -> NaiveDate {
        *self.dates.last().expect("stack holds at least two dates")
    }

    pub fn channels(&self) -> &[String] {
        &self.channels
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channels
            .iter()
            .position(|c| c.eq_ignore_ascii_case(name))
    }

    /// `T × C × H × W`; NoData cells hold NaN.
    pub fn data(&self) -> &Array4<f64> {
        &self.data
    }

    /// `T × H × W`, true where the pixel-date is NoData.
    pub fn nodata(&self) -> &Array3<bool> {
        &self.nodata
    }

    pub fn georef(&self) -> &Georeference {
        &self.georef
    }

    pub fn resolution_m(&self) -> f64 {
        self.georef.pixel_width()
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn len_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn height(&self) -> usize {
        self.data.dim().2
    }

    pub fn width(&self) -> usize {
        self.data.dim().3
    }

    /// Time series at one pixel for the selected channel indices.
    pub fn pixel_series(&self, row: usize, col: usize, channels: &[usize]) -> TimeSeriesSample {
        let t = self.len_dates();
        let values = Array2::from_shape_fn((t, channels.len()), |(ti, k)| {
            self.data[[ti, channels[k], row, col]]
        });
        let valid = (0..t).map(|ti| !self.nodata[[ti, row, col]]).collect();
        TimeSeriesSample::new(values, valid).expect("NoData cells hold NaN and are flagged invalid")
    }

    /// One channel at one date, NaN where NoData.
    pub fn image(&self, date: usize, channel: usize) -> Array2<f64> {
        self.data
            .index_axis(Axis(0), date)
            .index_axis(Axis(0), channel)
            .to_owned()
    }

    /// Event-date image of `channel`.
    pub fn event_image(&self, channel: usize) -> Array2<f64> {
        self.image(self.len_dates() - 1, channel)
    }
}

/// Reference labels: 0 non-flooded, 1 flooded open, 2 flooded urban.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceMap {
    labels: Array2<u8>,
    georef: Georeference,
}

impl ReferenceMap {
    pub fn new(labels: Array2<u8>, georef: Georeference) -> Result<Self> {
        if let Some(v) = labels.iter().find(|v| **v > 2) {
            return Err(Error::Input(format!(
                "reference label {v} outside {{0,1,2}}"
            )));
        }
        Ok(Self { labels, georef })
    }

    pub fn labels(&self) -> &Array2<u8> {
        &self.labels
    }

    pub fn georef(&self) -> &Georeference {
        &self.georef
    }

    pub fn dim(&self) -> (usize, usize) {
        self.labels.dim()
    }
}
