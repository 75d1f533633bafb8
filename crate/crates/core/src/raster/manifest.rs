use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use ndarray::{Array4, Axis};
use serde::{Deserialize, Serialize};

use super::geotiff::{read_band, write_f32};
use super::{Georeference, Orbit, Platform, RasterStack, Unit};
use crate::error::{Error, Result};

/// A channel file, either a plain path (band 0) or a path plus band index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BandRef {
    Path(PathBuf),
    Band { path: PathBuf, band: usize },
}

impl BandRef {
    pub fn path(&self) -> &Path {
        match self {
            BandRef::Path(p) | BandRef::Band { path: p, .. } => p,
        }
    }

    pub fn band(&self) -> usize {
        match self {
            BandRef::Path(_) => 0,
            BandRef::Band { band, .. } => *band,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub date: NaiveDate,
    pub platform: Platform,
    pub orbit: Orbit,
    pub channel_files: BTreeMap<String, BandRef>,
}

/// JSON description of a stack. `platform` and `orbit` act as a filter that
/// every entry must satisfy; relative paths resolve against the manifest's
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackManifest {
    pub platform: Platform,
    pub orbit: Orbit,
    pub event_date: NaiveDate,
    #[serde(default)]
    pub unit: Unit,
    /// Channel order in the loaded stack; defaults to sorted channel names.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channels: Option<Vec<String>>,
    pub dates: Vec<ManifestEntry>,
}

impl StackManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    /// Checks ordering, the event date, the platform/orbit filter and that
    /// every entry lists every channel. Returns the channel order.
    pub fn validate(&self) -> Result<Vec<String>> {
        let Some(last) = self.dates.last() else {
            return Err(Error::Manifest("no dates listed".into()));
        };
        if let Some(pair) = self.dates.windows(2).find(|p| p[0].date >= p[1].date) {
            return Err(Error::Manifest(format!(
                "dates not strictly increasing: {} then {}",
                pair[0].date, pair[1].date
            )));
        }
        if last.date != self.event_date {
            return Err(Error::Manifest(format!(
                "event date {} is not the last listed date {}",
                self.event_date, last.date
            )));
        }
        for e in &self.dates {
            if e.platform != self.platform || e.orbit != self.orbit {
                return Err(Error::Manifest(format!(
                    "entry {} is {:?}/{:?}, filter is {:?}/{:?}",
                    e.date, e.platform, e.orbit, self.platform, self.orbit
                )));
            }
        }
        let channels = match &self.channels {
            Some(c) if c.is_empty() => return Err(Error::Manifest("empty channel list".into())),
            Some(c) => c.clone(),
            None => last.channel_files.keys().cloned().collect(),
        };
        for e in &self.dates {
            for c in &channels {
                if !e.channel_files.contains_key(c) {
                    return Err(Error::Manifest(format!("entry {} has no {c} file", e.date)));
                }
            }
        }
        if self.dates.len() < 2 {
            return Err(Error::Manifest(format!(
                "stack needs at least 2 dates, got {}",
                self.dates.len()
            )));
        }
        Ok(channels)
    }

    /// Loads the rasters, resolving relative paths against `base`.
    pub fn load(&self, base: &Path) -> Result<RasterStack> {
        let channels = self.validate()?;
        let mut grid: Option<(usize, usize, Option<Georeference>, PathBuf)> = None;
        let mut data: Option<Array4<f64>> = None;
        for (ti, entry) in self.dates.iter().enumerate() {
            for (ci, name) in channels.iter().enumerate() {
                let r = &entry.channel_files[name];
                let path = base.join(r.path());
                let band = read_band(&path, r.band())?;
                let (h, w) = band.values.dim();
                match &grid {
                    None => grid = Some((h, w, band.georef, path.clone())),
                    Some((gh, gw, gg, first)) => {
                        if (h, w) != (*gh, *gw) || !same_georef(gg.as_ref(), band.georef.as_ref()) {
                            return Err(Error::Geometry(format!(
                                "{} ({h}x{w}) does not match the grid of {} ({gh}x{gw})",
                                path.display(),
                                first.display()
                            )));
                        }
                    }
                }
                let cube = data.get_or_insert_with(|| {
                    Array4::from_elem((self.dates.len(), channels.len(), h, w), f64::NAN)
                });
                cube.index_axis_mut(Axis(0), ti)
                    .index_axis_mut(Axis(0), ci)
                    .assign(&band.values);
            }
        }
        let (_, _, georef, first) = grid.expect("validated manifest lists files");
        let georef = georef.ok_or_else(|| {
            Error::Geometry(format!("{} carries no georeference", first.display()))
        })?;
        RasterStack::new(
            self.dates.iter().map(|e| e.date).collect(),
            channels,
            data.expect("at least one file read"),
            georef,
            self.unit,
        )
    }
}

fn same_georef(a: Option<&Georeference>, b: Option<&Georeference>) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(a), Some(b)) => {
            let tol = 1e-6 * a.pixel_width().max(1e-12);
            a.epsg == b.epsg
                && a.transform
                    .iter()
                    .zip(&b.transform)
                    .all(|(x, y)| (x - y).abs() <= tol)
        }
        _ => false,
    }
}

/// Reads the manifest at `path` and loads its stack.
pub fn load_stack(path: &Path) -> Result<RasterStack> {
    let manifest = StackManifest::read(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    manifest.load(base)
}

/// Writes one float GeoTIFF per date and channel plus `manifest.json` into
/// `dir`, returning the manifest path. Values are stored as `f32`.
pub fn save_stack(
    stack: &RasterStack,
    dir: &Path,
    platform: Platform,
    orbit: Orbit,
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut dates = Vec::with_capacity(stack.len_dates());
    for (ti, date) in stack.dates().iter().enumerate() {
        let mut files = BTreeMap::new();
        for (ci, name) in stack.channels().iter().enumerate() {
            let file = format!("{}_{}.tif", date.format("%Y%m%d"), name);
            write_f32(&dir.join(&file), &stack.image(ti, ci), stack.georef())?;
            files.insert(name.clone(), BandRef::Path(PathBuf::from(file)));
        }
        dates.push(ManifestEntry {
            date: *date,
            platform,
            orbit,
            channel_files: files,
        });
    }
    let manifest = StackManifest {
        platform,
        orbit,
        event_date: stack.event_date(),
        unit: stack.unit(),
        channels: Some(stack.channels().to_vec()),
        dates,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&path, e))?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
