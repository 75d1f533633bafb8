//! Minimal GeoTIFF reading and writing: float and byte grids with a north-up
//! or affine georeference, EPSG code and GDAL NoData tag.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use ndarray::Array2;
use tiff::decoder::{Decoder, DecodingResult, Limits};
use tiff::encoder::{colortype, TiffEncoder};
use tiff::tags::{PlanarConfiguration, Tag};

use super::Georeference;
use crate::error::{Error, Result};

const KEY_MODEL_TYPE: u16 = 1024;
const KEY_RASTER_TYPE: u16 = 1025;
const KEY_GEOGRAPHIC_TYPE: u16 = 2048;
const KEY_PROJECTED_CS_TYPE: u16 = 3072;
const MODEL_PROJECTED: u16 = 1;
const MODEL_GEOGRAPHIC: u16 = 2;
const RASTER_PIXEL_IS_AREA: u16 = 1;

/// One band of a GeoTIFF converted to `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    /// NaN where the file's NoData value (or NaN) occurs.
    pub values: Array2<f64>,
    pub georef: Option<Georeference>,
    pub nodata: Option<f64>,
}

fn is_geographic(epsg: u16) -> bool {
    (4000..5000).contains(&epsg)
}

fn open(path: &Path) -> Result<Decoder<BufReader<File>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Decoder::new(BufReader::new(file))
        .map(|d| d.with_limits(Limits::unlimited()))
        .map_err(|e| Error::tiff(path, e))
}

fn to_f64(result: DecodingResult) -> Vec<f64> {
    match result {
        DecodingResult::U8(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::U16(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::U32(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::U64(v) => v.into_iter().map(|x| x as f64).collect(),
        DecodingResult::I8(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::I16(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::I32(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::I64(v) => v.into_iter().map(|x| x as f64).collect(),
        DecodingResult::F16(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::F32(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::F64(v) => v,
    }
}

fn read_georef(dec: &mut Decoder<BufReader<File>>, path: &Path) -> Result<Option<Georeference>> {
    let tiff_err = |e| Error::tiff(path, e);
    let epsg = match dec.find_tag(Tag::GeoKeyDirectoryTag).map_err(tiff_err)? {
        Some(v) => {
            let keys = v.into_u16_vec().map_err(tiff_err)?;
            keys.get(4..)
                .unwrap_or_default()
                .chunks_exact(4)
                .find(|k| {
                    (k[0] == KEY_PROJECTED_CS_TYPE || k[0] == KEY_GEOGRAPHIC_TYPE) && k[1] == 0
                })
                .map(|k| k[3])
                .unwrap_or(0)
        }
        None => 0,
    };
    if let Some(v) = dec
        .find_tag(Tag::ModelTransformationTag)
        .map_err(tiff_err)?
    {
        let m = v.into_f64_vec().map_err(tiff_err)?;
        if m.len() < 8 {
            return Err(Error::Input(format!(
                "{}: ModelTransformationTag has {} values",
                path.display(),
                m.len()
            )));
        }
        return Ok(Some(Georeference {
            transform: [m[3], m[0], m[1], m[7], m[4], m[5]],
            epsg,
        }));
    }
    let scale = dec.find_tag(Tag::ModelPixelScaleTag).map_err(tiff_err)?;
    let tie = dec.find_tag(Tag::ModelTiepointTag).map_err(tiff_err)?;
    match (scale, tie) {
        (Some(s), Some(t)) => {
            let s = s.into_f64_vec().map_err(tiff_err)?;
            let t = t.into_f64_vec().map_err(tiff_err)?;
            if s.len() < 2 || t.len() < 6 {
                return Err(Error::Input(format!(
                    "{}: malformed georeference tags",
                    path.display()
                )));
            }
            let (sx, sy) = (s[0], s[1]);
            Ok(Some(Georeference {
                transform: [t[3] - t[0] * sx, sx, 0.0, t[4] + t[1] * sy, 0.0, -sy],
                epsg,
            }))
        }
        _ => Ok(None),
    }
}

fn read_nodata(dec: &mut Decoder<BufReader<File>>, path: &Path) -> Result<Option<f64>> {
    let Some(v) = dec
        .find_tag(Tag::GdalNodata)
        .map_err(|e| Error::tiff(path, e))?
    else {
        return Ok(None);
    };
    let text = v.into_string().map_err(|e| Error::tiff(path, e))?;
    let text = text.trim_matches(|c: char| c == '\0' || c.is_whitespace());
    text.parse::<f64>().map(Some).map_err(|_| {
        Error::Input(format!(
            "{}: unreadable NoData value {text:?}",
            path.display()
        ))
    })
}

/// Number of bands (samples per pixel) in the first image of `path`.
pub fn band_count(path: &Path) -> Result<usize> {
    let mut dec = open(path)?;
    let ct = dec.colortype().map_err(|e| Error::tiff(path, e))?;
    Ok(usize::from(ct.num_samples()))
}

/// Reads band `band` (0-based) of the first image in `path`.
pub fn read_band(path: &Path, band: usize) -> Result<Band> {
    let mut dec = open(path)?;
    let tiff_err = |e| Error::tiff(path, e);
    let (w, h) = dec.dimensions().map_err(tiff_err)?;
    let samples = usize::from(dec.colortype().map_err(tiff_err)?.num_samples());
    if band >= samples {
        return Err(Error::Input(format!(
            "{}: band {band} requested but the file has {samples}",
            path.display()
        )));
    }
    let planar = dec
        .find_tag_unsigned::<u16>(Tag::PlanarConfiguration)
        .map_err(tiff_err)?
        .unwrap_or(PlanarConfiguration::Chunky.to_u16());
    if samples > 1 && planar != PlanarConfiguration::Chunky.to_u16() {
        return Err(Error::Input(format!(
            "{}: band-sequential (planar) layout is not supported",
            path.display()
        )));
    }
    let georef = read_georef(&mut dec, path)?;
    let nodata = read_nodata(&mut dec, path)?;
    let raw = to_f64(dec.read_image().map_err(tiff_err)?);
    let (w, h) = (w as usize, h as usize);
    if raw.len() < w * h * samples {
        return Err(Error::Input(format!(
            "{}: truncated image data",
            path.display()
        )));
    }
    let values = Array2::from_shape_fn((h, w), |(r, c)| {
        let v = raw[(r * w + c) * samples + band];
        match nodata {
            Some(nd) if v == nd => f64::NAN,
            _ => v,
        }
    });
    Ok(Band {
        values,
        georef,
        nodata,
    })
}

fn georef_tags<W: std::io::Write + std::io::Seek, K: tiff::encoder::TiffKind>(
    dir: &mut tiff::encoder::DirectoryEncoder<'_, W, K>,
    georef: &Georeference,
) -> tiff::TiffResult<()> {
    let t = georef.transform;
    if t[2] == 0.0 && t[4] == 0.0 {
        dir.write_tag(Tag::ModelPixelScaleTag, &[t[1], -t[5], 0.0][..])?;
        dir.write_tag(Tag::ModelTiepointTag, &[0.0, 0.0, 0.0, t[0], t[3], 0.0][..])?;
    } else {
        let m = [
            t[1], t[2], 0.0, t[0], t[4], t[5], 0.0, t[3], 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0,
        ];
        dir.write_tag(Tag::ModelTransformationTag, &m[..])?;
    }
    let (model, key) = if is_geographic(georef.epsg) {
        (MODEL_GEOGRAPHIC, KEY_GEOGRAPHIC_TYPE)
    } else {
        (MODEL_PROJECTED, KEY_PROJECTED_CS_TYPE)
    };
    let keys = [
        1,
        1,
        0,
        3,
        KEY_MODEL_TYPE,
        0,
        1,
        model,
        KEY_RASTER_TYPE,
        0,
        1,
        RASTER_PIXEL_IS_AREA,
        key,
        0,
        1,
        georef.epsg,
    ];
    dir.write_tag(Tag::GeoKeyDirectoryTag, &keys[..])
}

fn create(path: &Path) -> Result<TiffEncoder<BufWriter<File>>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    TiffEncoder::new(BufWriter::new(file)).map_err(|e| Error::tiff(path, e))
}

/// Writes a single-band 32-bit float GeoTIFF; non-finite cells are NoData.
pub fn write_f32(path: &Path, values: &Array2<f64>, georef: &Georeference) -> Result<()> {
    let (h, w) = values.dim();
    let data: Vec<f32> = values
        .iter()
        .map(|&v| if v.is_finite() { v as f32 } else { f32::NAN })
        .collect();
    let mut enc = create(path)?;
    let tiff_err = |e| Error::tiff(path, e);
    let mut img = enc
        .new_image::<colortype::Gray32Float>(w as u32, h as u32)
        .map_err(tiff_err)?;
    georef_tags(img.encoder(), georef).map_err(tiff_err)?;
    img.encoder()
        .write_tag(Tag::GdalNodata, "nan")
        .map_err(tiff_err)?;
    img.write_data(&data).map_err(tiff_err)
}

/// Writes a single-band 8-bit GeoTIFF with an optional NoData value.
pub fn write_u8(
    path: &Path,
    values: &Array2<u8>,
    georef: &Georeference,
    nodata: Option<u8>,
) -> Result<()> {
    let (h, w) = values.dim();
    let data: Vec<u8> = values.iter().copied().collect();
    let mut enc = create(path)?;
    let tiff_err = |e| Error::tiff(path, e);
    let mut img = enc
        .new_image::<colortype::Gray8>(w as u32, h as u32)
        .map_err(tiff_err)?;
    georef_tags(img.encoder(), georef).map_err(tiff_err)?;
    if let Some(nd) = nodata {
        img.encoder()
            .write_tag(Tag::GdalNodata, nd.to_string().as_str())
            .map_err(tiff_err)?;
    }
    img.write_data(&data).map_err(tiff_err)
}

/// Reads the first band of an 8-bit GeoTIFF without NoData substitution.
pub fn read_u8(path: &Path) -> Result<(Array2<u8>, Option<Georeference>)> {
    let mut dec = open(path)?;
    let tiff_err = |e| Error::tiff(path, e);
    let (w, h) = dec.dimensions().map_err(tiff_err)?;
    let samples = usize::from(dec.colortype().map_err(tiff_err)?.num_samples());
    let georef = read_georef(&mut dec, path)?;
    let DecodingResult::U8(raw) = dec.read_image().map_err(tiff_err)? else {
        return Err(Error::Input(format!(
            "{}: expected 8-bit unsigned samples",
            path.display()
        )));
    };
    let (w, h) = (w as usize, h as usize);
    if raw.len() < w * h * samples {
        return Err(Error::Input(format!(
            "{}: truncated image data",
            path.display()
        )));
    }
    let values = Array2::from_shape_fn((h, w), |(r, c)| raw[(r * w + c) * samples]);
    Ok((values, georef))
}
