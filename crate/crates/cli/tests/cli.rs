use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

const DEFAULT_STACK_DIGEST: &str =
    "a79dad474b5aac83e66bd815d2d1d903d442a03d40df6be3f4bf63353fbf125d";
const DEFAULT_MANIFEST_DIGEST: &str =
    "2e317aef801b8f9d78fa6eaddc0b57e33604961316fc4b15eb6a4d73c3a5f692";
const DEFAULT_REFERENCE_DIGEST: &str =
    "9d1c24d669c13ca456e43e87661cac582579e4d6b394f35599c4c14156673669";

fn bcpflood(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bcpflood"))
        .args(args)
        .env_remove("BCPFLOOD_WORKERS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn assert_exit(o: &Output, code: i32) {
    assert_eq!(
        o.status.code(),
        Some(code),
        "stdout:\n{}\nstderr:\n{}",
        stdout(o),
        stderr(o)
    );
}

fn digest_line(out: &str, key: &str) -> String {
    out.lines()
        .find_map(|l| l.strip_prefix(key).map(|v| v.trim().to_string()))
        .unwrap_or_else(|| panic!("no {key} in {out}"))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Synthesizes a scene into `dir` from a JSON patch over the chosen preset.
fn synth(dir: &Path, preset: &str, patch: Option<Value>) -> Output {
    let mut args = vec!["synth", "--preset", preset, "--out", p(dir)];
    let spec = dir.with_extension("spec.json");
    if let Some(patch) = patch {
        fs::write(&spec, patch.to_string()).unwrap();
        args.extend(["--spec", p(&spec)]);
    }
    bcpflood(&args)
}

/// A 24×24 scene with a flood strip on the left third.
fn small_patch(seed: u64) -> Value {
    json!({
        "height": 24,
        "width": 24,
        "seed": seed,
        "flood_polygon": [[0, 0], [9, 0], [10, 24], [0, 24]],
    })
}

fn edit_run_manifest(dir: &Path, edit: impl FnOnce(&mut Value)) {
    let path = dir.join("run.json");
    let mut v: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    edit(&mut v);
    fs::write(&path, v.to_string()).unwrap();
}

fn read_outputs(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|f| {
            let bytes = fs::read(&f).unwrap();
            (f, bytes)
        })
        .collect()
}

fn csv_column(path: &Path, name: &str) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let col = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records()
        .map(|rec| rec.unwrap()[col].to_string())
        .collect()
}

fn overall_precision(path: &Path) -> f64 {
    let classes = csv_column(path, "class");
    let precision = csv_column(path, "precision");
    let i = classes.iter().position(|c| c == "overall").unwrap();
    precision[i].parse().unwrap()
}

#[test]
fn synth_default_scene_has_golden_digests() {
    let tmp = tempfile::tempdir().unwrap();
    let out = synth(&tmp.path().join("scene"), "default", None);
    assert_exit(&out, 0);
    let text = stdout(&out);
    assert_eq!(digest_line(&text, "stack_digest"), DEFAULT_STACK_DIGEST);
    assert_eq!(
        digest_line(&text, "manifest_digest"),
        DEFAULT_MANIFEST_DIGEST
    );
    assert_eq!(
        digest_line(&text, "reference_digest"),
        DEFAULT_REFERENCE_DIGEST
    );
    assert!(text.contains("64x64 pixels, 12 dates"));
    let stack = tmp.path().join("scene/stack");
    let tifs = fs::read_dir(&stack)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .path()
                .extension()
                .is_some_and(|x| x == "tif")
        })
        .count();
    assert_eq!(tifs, 24);

    let reseeded = bcpflood(&[
        "synth",
        "--seed",
        "43",
        "--out",
        p(&tmp.path().join("other")),
    ]);
    assert_exit(&reseeded, 0);
    assert_ne!(
        digest_line(&stdout(&reseeded), "stack_digest"),
        DEFAULT_STACK_DIGEST
    );
}

#[test]
fn synth_rejects_bad_specs() {
    let tmp = tempfile::tempdir().unwrap();
    let flat = json!({ "flood_polygon": [[0, 0], [10, 10], [20, 20]] });
    let out = synth(&tmp.path().join("flat"), "default", Some(flat));
    assert_exit(&out, 1);
    assert!(stderr(&out).contains("zero area"), "{}", stderr(&out));

    let unknown = json!({ "flood_depth": 3 });
    assert_exit(
        &synth(&tmp.path().join("unknown"), "default", Some(unknown)),
        1,
    );
}

#[test]
fn run_default_scene_and_rerun_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    assert_exit(&synth(&scene, "default", None), 0);
    let manifest = scene.join("run.json");

    let first = bcpflood(&["run", "--manifest", p(&manifest)]);
    assert_exit(&first, 0);
    let line = stdout(&first)
        .lines()
        .find(|l| l.contains("Overall"))
        .expect("overall metrics printed")
        .to_string();
    let f1: f64 = line
        .split("f1 ")
        .nth(1)
        .and_then(|s| s.split_whitespace().next())
        .unwrap()
        .parse()
        .unwrap();
    assert!(f1 >= 0.90, "{line}");

    let results = scene.join("results");
    let persisted: f64 = csv_column(&results.join("metrics.csv"), "f1")[0]
        .parse()
        .unwrap();
    assert!((persisted - f1).abs() < 1e-4);
    let before = read_outputs(&results);
    let names: Vec<_> = before
        .iter()
        .map(|(f, _)| f.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(
        names,
        [
            "flood_mask.json",
            "flood_mask.tif",
            "metrics.csv",
            "probability.tif",
            "run_provenance.json"
        ]
    );
    let provenance: Value =
        serde_json::from_slice(&fs::read(results.join("run_provenance.json")).unwrap()).unwrap();
    assert_eq!(provenance["stack_digest"], DEFAULT_STACK_DIGEST);

    let second = bcpflood(&["run", "--manifest", p(&manifest)]);
    assert_exit(&second, 0);
    assert_eq!(stdout(&first), stdout(&second));
    let after = read_outputs(&results);
    assert_eq!(before.len(), after.len());
    for ((f, a), (_, b)) in before.iter().zip(&after) {
        assert!(a == b, "{} differs between runs", f.display());
    }
}

#[test]
fn missing_reference_skips_evaluation() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    assert_exit(&synth(&scene, "default", Some(small_patch(1))), 0);
    fs::remove_file(scene.join("reference.tif")).unwrap();
    let out = bcpflood(&["run", "--manifest", p(&scene.join("run.json"))]);
    assert_exit(&out, 0);
    assert!(stderr(&out).contains("warning"), "{}", stderr(&out));
    let results = scene.join("results");
    assert!(results.join("probability.tif").exists());
    assert!(results.join("flood_mask.tif").exists());
    assert!(!results.join("metrics.csv").exists());

    // sweep cannot work without one
    let out = bcpflood(&["sweep", "--manifest", p(&scene.join("run.json"))]);
    assert_exit(&out, 2);
    assert!(stderr(&out).contains("sweep"));
}

#[test]
fn sweep_emits_full_grid_and_stable_optimum() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    assert_exit(&synth(&scene, "default", Some(small_patch(5))), 0);
    let manifest = scene.join("run.json");
    let first = bcpflood(&["sweep", "--manifest", p(&manifest), "--emit-plots"]);
    assert_exit(&first, 0);
    let results = scene.join("results");
    assert_eq!(csv_column(&results.join("sweep.csv"), "f1").len(), 63);
    let png = fs::read(results.join("sweep_f1.png")).unwrap();
    assert_eq!(&png[..8], b"\x89PNG\r\n\x1a\n");
    assert!(stdout(&first).starts_with("63 rows; best f1"));

    let second = bcpflood(&["sweep", "--manifest", p(&manifest)]);
    assert_exit(&second, 0);
    assert_eq!(stdout(&first), stdout(&second));

    let report = bcpflood(&["report", "--dir", p(&results)]);
    assert_exit(&report, 0);
    assert!(stdout(&report).contains("63 rows"));
}

#[test]
fn per_chip_scores_feed_the_paired_test() {
    let tmp = tempfile::tempdir().unwrap();
    let mut tables = Vec::new();
    for seed in [11, 12] {
        let scene = tmp.path().join(format!("scene{seed}"));
        assert_exit(&synth(&scene, "default", Some(small_patch(seed))), 0);
        edit_run_manifest(&scene, |v| v["chip_size"] = json!(6));
        let out = bcpflood(&[
            "run",
            "--manifest",
            p(&scene.join("run.json")),
            "--window",
            "3",
        ]);
        assert_exit(&out, 0);
        let chips = scene.join("results/chip_f1.csv");
        assert_eq!(csv_column(&chips, "f1").len(), 16);
        tables.push(chips);
    }
    let out = bcpflood(&["compare", "--a", p(&tables[0]), "--b", p(&tables[1])]);
    assert_exit(&out, 0);
    let text = stdout(&out);
    let pv: f64 = text
        .split("p_value ")
        .nth(1)
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!((0.0..=1.0).contains(&pv), "{text}");

    let same = bcpflood(&["compare", "--a", p(&tables[0]), "--b", p(&tables[0])]);
    assert_exit(&same, 0);
    assert!(stdout(&same).contains("p_value 1.000000"));
}

#[test]
fn otsu_baseline_and_precision_contrast() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    assert_exit(&synth(&scene, "permanent-water", None), 0);
    let manifest = scene.join("run.json");

    let otsu = bcpflood(&["otsu", "--manifest", p(&manifest), "--channel", "vv"]);
    assert_exit(&otsu, 0);
    let results = scene.join("results");
    let otsu_csv = results.join("otsu-vv_metrics.csv");
    assert!(csv_column(&otsu_csv, "method")
        .iter()
        .all(|m| m == "otsu-vv"));
    assert!(results.join("otsu-vv_mask.tif").exists());

    let run = bcpflood(&["run", "--manifest", p(&manifest)]);
    assert_exit(&run, 0);
    let bcp = overall_precision(&results.join("metrics.csv"));
    let base = overall_precision(&otsu_csv);
    assert!(bcp > base, "BCP precision {bcp} vs Otsu {base}");

    // the flood mask can be rescored on its own
    let scored = results.join("rescored.csv");
    let eval = bcpflood(&[
        "eval",
        "--mask",
        p(&results.join("flood_mask.tif")),
        "--reference",
        p(&scene.join("reference.tif")),
        "--method",
        "bcp-vv",
        "--out",
        p(&scored),
    ]);
    assert_exit(&eval, 0);
    assert_eq!(
        csv_column(&scored, "f1"),
        csv_column(&results.join("metrics.csv"), "f1")
    );
}

#[test]
fn missing_channel_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    let mut patch = small_patch(2);
    patch["channels"] = json!([{ "name": "VV", "mean_db": -9.0, "water_db": -22.0 }]);
    assert_exit(&synth(&scene, "default", Some(patch)), 0);
    let manifest = scene.join("run.json");
    let out = bcpflood(&["otsu", "--manifest", p(&manifest), "--channel", "vh"]);
    assert_exit(&out, 2);
    assert!(stderr(&out).contains("VH"), "{}", stderr(&out));
    let out = bcpflood(&["run", "--manifest", p(&manifest), "--channel-mode", "vvvh"]);
    assert_exit(&out, 2);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_exit(&bcpflood(&["--help"]), 0);
    assert_exit(&bcpflood(&["--version"]), 0);
    assert_exit(&bcpflood(&["frobnicate"]), 1);
    assert_exit(&bcpflood(&["run"]), 1);
    let missing = tmp.path().join("nope.json");
    let out = bcpflood(&["run", "--manifest", p(&missing)]);
    assert_exit(&out, 2);
    assert!(stderr(&out).contains("run manifest"), "{}", stderr(&out));

    let scene = tmp.path().join("scene");
    assert_exit(&synth(&scene, "default", Some(small_patch(3))), 0);
    let manifest = scene.join("run.json");
    for bad in [
        vec!["--window", "4"],
        vec!["--threshold", "1.5"],
        vec!["--gamma", "0"],
        vec!["--iters", "0"],
    ] {
        let mut args = vec!["run", "--manifest", p(&manifest)];
        args.extend(bad.iter().copied());
        assert_exit(&bcpflood(&args), 1);
    }
    assert_exit(
        &bcpflood(&["run", "--manifest", p(&manifest), "--channel-mode", "hh"]),
        1,
    );

    // reference on a different grid is a geometry error
    let other = tmp.path().join("other");
    let mut patch = small_patch(3);
    patch["width"] = json!(20);
    assert_exit(&synth(&other, "default", Some(patch)), 0);
    fs::copy(other.join("reference.tif"), scene.join("reference.tif")).unwrap();
    let out = bcpflood(&["run", "--manifest", p(&manifest)]);
    assert_exit(&out, 2);
    assert!(stderr(&out).contains("reference"), "{}", stderr(&out));
}
