use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use bcpflood_core::digest::{file_digest, stack_digest};
use bcpflood_core::engine::{run_stack, ChannelSelection, ProbabilityRaster};
use bcpflood_core::metrics::{
    confusion, metrics, paired_significance, read_records_csv, write_records_csv, ClassScope,
    MetricsRecord, OtherClass,
};
use bcpflood_core::otsu::{otsu_flood_mask, OtsuChannel};
use bcpflood_core::postproc::{chip_f1, detect, parameter_sweep, FloodMask, MaskProvenance};
use bcpflood_core::raster::geotiff::{read_u8, write_f32, write_u8};
use bcpflood_core::raster::{
    aggregate_reference, aggregate_stack, load_stack, save_stack, synth_scene, Orbit, Platform,
    RasterStack, ReferenceMap, SceneSpec,
};
use bcpflood_core::{Error, ErrorCategory};
use serde::Serialize;

use crate::manifest::RunManifest;
use crate::plot::write_heatmap;

/// Analysis grid spacing; finer stacks are aggregated 2×2 first.
const TARGET_RESOLUTION_M: f64 = 20.0;

#[derive(Debug)]
pub struct CommandError {
    stage: &'static str,
    source: Error,
}

impl CommandError {
    pub fn category(&self) -> ErrorCategory {
        self.source.category()
    }
}

impl fmt::Display for CommandError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.stage, self.source)
    }
}

type CmdResult<T> = Result<T, CommandError>;

trait Stage<T> {
    fn stage(self, stage: &'static str) -> CmdResult<T>;
}

impl<T> Stage<T> for bcpflood_core::Result<T> {
    fn stage(self, stage: &'static str) -> CmdResult<T> {
        self.map_err(|source| CommandError { stage, source })
    }
}

fn io_stage<T>(r: std::io::Result<T>, path: &Path, stage: &'static str) -> CmdResult<T> {
    r.map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })
    .stage(stage)
}

#[derive(Debug, Clone, Copy)]
pub enum ScenePreset {
    Default,
    NegativeControl,
    PermanentWater,
}

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub gamma: Option<f64>,
    pub lambda: Option<f64>,
    pub iterations: Option<usize>,
    pub burn_in: Option<usize>,
    pub window: Option<usize>,
    pub threshold: Option<f64>,
    pub channels: Option<ChannelSelection>,
    pub workers: Option<usize>,
    pub no_aggregate: bool,
}

impl Overrides {
    fn apply(&self, m: &mut RunManifest) {
        if let Some(v) = self.seed {
            m.bcp.seed = v;
        }
        if let Some(v) = self.gamma {
            m.bcp.gamma = v;
        }
        if let Some(v) = self.lambda {
            m.bcp.lambda = v;
        }
        if let Some(v) = self.iterations {
            m.bcp.iterations = v;
        }
        if let Some(v) = self.burn_in {
            m.bcp.burn_in = v;
        }
        if let Some(v) = self.window {
            m.postproc.window = v;
        }
        if let Some(v) = self.threshold {
            m.postproc.threshold = v;
        }
        if let Some(v) = self.channels {
            m.channels = v;
        }
        if let Some(v) = self.workers {
            m.workers = Some(v);
        }
        if self.no_aggregate {
            m.aggregate = false;
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CmdResult<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Json {
            path: path.into(),
            source: e,
        })
        .stage("write")?;
    io_stage(std::fs::write(path, text + "\n"), path, "write")
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

pub fn synth(
    spec: Option<&Path>,
    preset: ScenePreset,
    seed: Option<u64>,
    out: &Path,
) -> CmdResult<()> {
    let mut scene = match preset {
        ScenePreset::Default => SceneSpec::default(),
        ScenePreset::NegativeControl => SceneSpec::negative_control(),
        ScenePreset::PermanentWater => SceneSpec::with_permanent_water(),
    };
    if let Some(path) = spec {
        let text = io_stage(std::fs::read_to_string(path), path, "scene spec")?;
        // Fields left out of the file keep the preset's values.
        let mut merged = serde_json::to_value(&scene).expect("scene spec serializes");
        let patch: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| Error::SceneSpec(format!("{}: {e}", path.display())))
            .stage("scene spec")?;
        let serde_json::Value::Object(fields) = patch else {
            return Err(Error::SceneSpec(format!(
                "{}: expected a JSON object",
                path.display()
            )))
            .stage("scene spec");
        };
        for (k, v) in fields {
            merged[k] = v;
        }
        scene = serde_json::from_value(merged)
            .map_err(|e| Error::SceneSpec(format!("{}: {e}", path.display())))
            .stage("scene spec")?;
    }
    if let Some(s) = seed {
        scene.seed = s;
    }
    let (stack, reference) = synth_scene(&scene).stage("synthesize")?;
    let manifest =
        save_stack(&stack, &out.join("stack"), Platform::A, Orbit::Ascending).stage("write")?;
    let reference_path = out.join("reference.tif");
    write_u8(
        &reference_path,
        reference.labels(),
        reference.georef(),
        None,
    )
    .stage("write")?;
    write_json(&out.join("scene.json"), &scene)?;
    let job = RunManifest::new(
        PathBuf::from("stack/manifest.json"),
        Some(PathBuf::from("reference.tif")),
        PathBuf::from("results"),
    );
    write_json(
        &out.join("run.json"),
        &RunManifest {
            site: "synthetic".into(),
            ..job
        },
    )?;
    println!("stack_digest {}", stack_digest(&stack));
    println!(
        "manifest_digest {}",
        file_digest(&manifest).stage("digest")?
    );
    println!(
        "reference_digest {}",
        file_digest(&reference_path).stage("digest")?
    );
    println!(
        "scene {}x{} pixels, {} dates, {} flood pixels",
        scene.height,
        scene.width,
        scene.n_dates,
        reference.labels().iter().filter(|l| **l > 0).count()
    );
    Ok(())
}

struct Job {
    manifest: RunManifest,
    stack: RasterStack,
    reference: Option<ReferenceMap>,
    aggregated: bool,
}

fn prepare(path: &Path, overrides: &Overrides) -> CmdResult<Job> {
    let mut manifest = RunManifest::read(path).stage("run manifest")?;
    overrides.apply(&mut manifest);
    manifest.bcp.validate().stage("run manifest")?;
    manifest.postproc.validate().stage("run manifest")?;
    let native = load_stack(&manifest.stack_manifest).stage("load")?;
    let aggregated =
        manifest.aggregate && native.resolution_m() <= TARGET_RESOLUTION_M / 2.0 + 1e-9;
    let stack = if aggregated {
        aggregate_stack(&native).stage("aggregate")?
    } else {
        native.clone()
    };
    let reference = match &manifest.reference {
        Some(p) if p.exists() => {
            let (labels, georef) = read_u8(p).stage("reference")?;
            let mut r =
                ReferenceMap::new(labels, georef.unwrap_or(*native.georef())).stage("reference")?;
            if aggregated && r.dim() == (native.height(), native.width()) {
                r = aggregate_reference(&r).stage("aggregate")?;
            }
            if r.dim() != (stack.height(), stack.width()) {
                return Err(Error::Geometry(format!(
                    "reference is {:?} but the analysis grid is {:?}",
                    r.dim(),
                    (stack.height(), stack.width())
                )))
                .stage("reference");
            }
            Some(r)
        }
        Some(p) => {
            eprintln!(
                "warning: reference map {} not found; skipping evaluation",
                p.display()
            );
            None
        }
        None => {
            eprintln!("warning: no reference map given; skipping evaluation");
            None
        }
    };
    let out = &manifest.output_dir;
    io_stage(std::fs::create_dir_all(out), out, "output")?;
    Ok(Job {
        manifest,
        stack,
        reference,
        aggregated,
    })
}

fn probability(job: &Job) -> CmdResult<ProbabilityRaster> {
    run_stack(
        &job.stack,
        &job.manifest.bcp,
        job.manifest.channels,
        job.manifest.workers.unwrap_or(0),
    )
    .stage("pixel engine")
}

fn bcp_method(job: &Job) -> String {
    format!("bcp-{}", job.manifest.channels.as_str())
}

fn class_records(
    mask: &FloodMask,
    reference: &ReferenceMap,
    site: &str,
    method: &str,
    other: OtherClass,
) -> CmdResult<Vec<MetricsRecord>> {
    let (t, w) = (mask.provenance.threshold, mask.provenance.window);
    [ClassScope::Overall, ClassScope::Open, ClassScope::Urban]
        .into_iter()
        .map(|scope| {
            let counts = confusion(mask, reference, scope, other).stage("evaluate")?;
            Ok(MetricsRecord::new(site, method, scope, t, w, counts))
        })
        .collect()
}

fn print_records(records: &[MetricsRecord]) {
    for r in records {
        println!(
            "{} {} {:?}: precision {:.4} recall {:.4} f1 {:.4} iou {:.4}",
            r.site, r.method, r.class, r.precision, r.recall, r.f1, r.iou
        );
    }
}

#[derive(Serialize)]
struct RunRecord<'a> {
    command: &'a str,
    site: &'a str,
    method: &'a str,
    stack_digest: &'a str,
    config_digest: &'a str,
    aggregated: bool,
    manifest: &'a RunManifest,
    outputs: BTreeMap<String, String>,
}

fn output_digests(paths: &[&Path]) -> CmdResult<BTreeMap<String, String>> {
    paths
        .iter()
        .map(|p| Ok((file_name(p), file_digest(p).stage("digest")?)))
        .collect()
}

pub fn run(path: &Path, overrides: &Overrides) -> CmdResult<()> {
    let job = prepare(path, overrides)?;
    let method = bcp_method(&job);
    let prob = probability(&job)?;
    let out = &job.manifest.output_dir;
    let prob_path = out.join("probability.tif");
    write_f32(&prob_path, &prob.values, &prob.georef).stage("write")?;
    let mask = detect(&prob, &job.manifest.postproc, &method).stage("postprocess")?;
    let mask_path = out.join("flood_mask.tif");
    mask.write_geotiff(&mask_path).stage("write")?;
    write_json(&out.join("flood_mask.json"), &mask.provenance)?;
    println!(
        "flood pixels {} of {} valid",
        mask.flood_count(),
        mask.valid_count()
    );

    let mut written = vec![prob_path.as_path(), mask_path.as_path()];
    let metrics_path = out.join("metrics.csv");
    if let Some(reference) = &job.reference {
        let records = class_records(
            &mask,
            reference,
            &job.manifest.site,
            &method,
            OtherClass::Ignore,
        )?;
        write_records_csv(&metrics_path, &records).stage("write")?;
        print_records(&records);
        written.push(&metrics_path);
    }
    let chip_path = out.join("chip_f1.csv");
    if let (Some(reference), Some(chip)) = (&job.reference, job.manifest.chip_size) {
        let scores = chip_f1(&prob, reference, &job.manifest.postproc, chip).stage("evaluate")?;
        write_chip_scores(&chip_path, &scores)?;
        written.push(&chip_path);
    }
    let outputs = output_digests(&written)?;
    write_json(
        &out.join("run_provenance.json"),
        &RunRecord {
            command: "run",
            site: &job.manifest.site,
            method: &method,
            stack_digest: &prob.provenance.stack_digest,
            config_digest: &prob.provenance.config_digest,
            aggregated: job.aggregated,
            manifest: &job.manifest,
            outputs,
        },
    )
}

fn write_chip_scores(path: &Path, scores: &[f64]) -> CmdResult<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(Error::from)
        .stage("write")?;
    w.write_record(["chip", "f1"])
        .map_err(Error::from)
        .stage("write")?;
    for (i, s) in scores.iter().enumerate() {
        w.write_record([i.to_string(), s.to_string()])
            .map_err(Error::from)
            .stage("write")?;
    }
    io_stage(w.flush(), path, "write")
}

/// First record with the highest F1 in table order.
fn best_record(rows: &[MetricsRecord]) -> Option<&MetricsRecord> {
    rows.iter().fold(None, |best, r| match best {
        Some(b) if b.f1 >= r.f1 => Some(b),
        _ => Some(r),
    })
}

pub fn sweep(path: &Path, overrides: &Overrides, emit_plots: bool) -> CmdResult<()> {
    let job = prepare(path, overrides)?;
    let Some(reference) = &job.reference else {
        return Err(Error::Input("sweep needs a reference map".into())).stage("sweep");
    };
    let method = bcp_method(&job);
    let prob = probability(&job)?;
    let rows = parameter_sweep(&prob, reference, &job.manifest.site, &method).stage("sweep")?;
    let out = &job.manifest.output_dir;
    let sweep_path = out.join("sweep.csv");
    write_records_csv(&sweep_path, &rows).stage("write")?;
    let best = best_record(&rows).expect("sweep has 63 rows");
    println!(
        "{} rows; best f1 {:.4} at t={} w={}",
        rows.len(),
        best.f1,
        best.t.unwrap_or_default(),
        best.w.unwrap_or_default()
    );
    let mut written = vec![sweep_path.clone()];
    if emit_plots {
        let png = out.join("sweep_f1.png");
        io_stage(write_heatmap(&png, &rows), &png, "plot")?;
        written.push(png);
    }
    let refs: Vec<&Path> = written.iter().map(PathBuf::as_path).collect();
    let outputs = output_digests(&refs)?;
    write_json(
        &out.join("sweep_provenance.json"),
        &RunRecord {
            command: "sweep",
            site: &job.manifest.site,
            method: &method,
            stack_digest: &prob.provenance.stack_digest,
            config_digest: &prob.provenance.config_digest,
            aggregated: job.aggregated,
            manifest: &job.manifest,
            outputs,
        },
    )
}

pub fn otsu(path: &Path, channel: Option<OtsuChannel>, no_aggregate: bool) -> CmdResult<()> {
    let overrides = Overrides {
        no_aggregate,
        ..Overrides::default()
    };
    let mut job = prepare(path, &overrides)?;
    if let Some(c) = channel {
        job.manifest.otsu.channel = c;
    }
    let config = job.manifest.otsu;
    let mask = otsu_flood_mask(&job.stack, &config).stage("otsu")?;
    let method = config.channel.method_id();
    let out = &job.manifest.output_dir;
    let mask_path = out.join(format!("{method}_mask.tif"));
    mask.write_geotiff(&mask_path).stage("write")?;
    write_json(&out.join(format!("{method}_mask.json")), &mask.provenance)?;
    println!(
        "flood pixels {} of {} valid",
        mask.flood_count(),
        mask.valid_count()
    );
    if let Some(reference) = &job.reference {
        let records = class_records(
            &mask,
            reference,
            &job.manifest.site,
            &method,
            OtherClass::Ignore,
        )?;
        write_records_csv(&out.join(format!("{method}_metrics.csv")), &records).stage("write")?;
        print_records(&records);
    }
    Ok(())
}

pub fn eval(
    mask_path: &Path,
    reference_path: &Path,
    site: &str,
    method: &str,
    other: OtherClass,
    out: Option<&Path>,
) -> CmdResult<()> {
    let (raw, georef) = read_u8(mask_path).stage("mask")?;
    let (labels, ref_georef) = read_u8(reference_path).stage("reference")?;
    let georef = georef
        .or(ref_georef)
        .unwrap_or(bcpflood_core::raster::Georeference::north_up(
            0.0, 0.0, 1.0, 0,
        ));
    let reference = ReferenceMap::new(labels, georef).stage("reference")?;
    let mask = FloodMask {
        mask: raw.mapv(|v| match v {
            0 => Some(false),
            1 => Some(true),
            _ => None,
        }),
        georef,
        provenance: MaskProvenance {
            method: method.into(),
            threshold: None,
            window: None,
            input_digest: file_digest(mask_path).stage("digest")?,
        },
    };
    let records = class_records(&mask, &reference, site, method, other)?;
    print_records(&records);
    if let Some(path) = out {
        write_records_csv(path, &records).stage("write")?;
    }
    Ok(())
}

fn read_f1_column(path: &Path) -> CmdResult<Vec<f64>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(Error::from)
        .stage("compare")?;
    let headers = reader
        .headers()
        .map_err(Error::from)
        .stage("compare")?
        .clone();
    let Some(col) = headers.iter().position(|h| h == "f1") else {
        return Err(Error::Input(format!("{} has no f1 column", path.display()))).stage("compare");
    };
    reader
        .records()
        .map(|rec| {
            let rec = rec.map_err(Error::from).stage("compare")?;
            rec[col]
                .parse::<f64>()
                .map_err(|e| Error::Input(format!("{}: bad f1 value: {e}", path.display())))
                .stage("compare")
        })
        .collect()
}

pub fn compare(a: &Path, b: &Path) -> CmdResult<()> {
    let (fa, fb) = (read_f1_column(a)?, read_f1_column(b)?);
    let p = paired_significance(&fa, &fb).stage("compare")?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!(
        "n {} mean_f1_a {:.4} mean_f1_b {:.4} p_value {p:.6}",
        fa.len(),
        mean(&fa),
        mean(&fb)
    );
    Ok(())
}

pub fn report(dir: &Path) -> CmdResult<()> {
    let entries = io_stage(std::fs::read_dir(dir), dir, "report")?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = file_name(p);
            name.ends_with("metrics.csv") || name == "sweep.csv"
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Input(format!(
            "no metrics tables in {}",
            dir.display()
        )))
        .stage("report");
    }
    for path in files {
        let records = read_records_csv(&path).stage("report")?;
        println!("{}:", file_name(&path));
        if file_name(&path) == "sweep.csv" {
            if let Some(best) = best_record(&records) {
                println!(
                    "  {} rows, best f1 {:.4} (t={}, w={})",
                    records.len(),
                    best.f1,
                    best.t.unwrap_or_default(),
                    best.w.unwrap_or_default()
                );
            }
        } else {
            for r in &records {
                let s = metrics(&r.counts());
                println!(
                    "  {:<12} {:<8} P {:.3} R {:.3} F1 {:.3} IoU {:.3}",
                    r.method,
                    format!("{:?}", r.class).to_lowercase(),
                    s.precision,
                    s.recall,
                    s.f1,
                    s.iou
                );
            }
        }
    }
    Ok(())
}
