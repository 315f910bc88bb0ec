use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fcnseg::data::{
    decode_paletted_png, encode_paletted_png, encode_rgb_png, rasterize, read_manifest, serialize_annotation, FoldPlan,
    Polygon, RegionAnnotation, RgbImage,
};
use fcnseg::LabelImage;
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fcnseg"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    let out = bin().current_dir(dir).args(args).output().expect("spawn fcnseg");
    if !out.status.success() {
        eprintln!("stderr: {}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(out.status.success(), "fcnseg {args:?} failed");
    out
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn annotation(id: &str, shift: f64) -> RegionAnnotation {
    RegionAnnotation {
        image_id: format!("{id}.png"),
        width: 40,
        height: 30,
        roi: Polygon::new(vec![(2.0, 2.0), (38.0, 2.0), (38.0, 28.0), (2.0, 28.0)]),
        ulcer: vec![Polygon::new(vec![(10.0 + shift, 10.0), (20.0 + shift, 11.0), (15.0 + shift, 20.0)])],
        surrounding_skin: vec![Polygon::new(vec![(5.0, 5.0), (35.0, 5.0), (35.0, 25.0), (5.0, 25.0)])],
    }
}

fn write_annotated(dir: &Path, ids: &[&str]) -> Vec<RegionAnnotation> {
    fs::create_dir_all(dir.join("xml")).unwrap();
    fs::create_dir_all(dir.join("img")).unwrap();
    ids.iter()
        .enumerate()
        .map(|(i, id)| {
            let ann = annotation(id, i as f64 * 3.0);
            fs::write(dir.join("xml").join(format!("{id}.xml")), serialize_annotation(&ann)).unwrap();
            let mut img = RgbImage::new(40, 30);
            img.set(3, 4, [200, 10, 10]);
            fs::write(dir.join("img").join(format!("{id}.png")), encode_rgb_png(&img).unwrap()).unwrap();
            ann
        })
        .collect()
}

#[test]
fn convert_rasterizes_every_annotation() {
    let tmp = tempfile::tempdir().unwrap();
    let anns = write_annotated(tmp.path(), &["a", "b", "c"]);
    ok(tmp.path(), &["convert", "--annotations", "xml", "--images", "img", "--out", "ds"]);
    let ds = tmp.path().join("ds");
    let recs = read_manifest(&ds).unwrap();
    assert_eq!(recs.iter().map(|r| r.id.as_str()).collect::<Vec<_>>(), ["a", "b", "c"]);
    for (rec, ann) in recs.iter().zip(&anns) {
        let label = decode_paletted_png(&fs::read(ds.join(&rec.label)).unwrap()).unwrap();
        assert_eq!(label, rasterize(ann, 40, 30).unwrap());
    }
    assert!(ds.join("run_manifest.json").is_file());
}

#[test]
fn convert_reports_partial_failure() {
    let tmp = tempfile::tempdir().unwrap();
    write_annotated(tmp.path(), &["a", "b", "c"]);
    fs::write(tmp.path().join("xml/b.xml"), "<annotation image=\"b.png\" width=\"40\"").unwrap();
    let out = run(tmp.path(), &["convert", "--annotations", "xml", "--images", "img", "--out", "ds"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("b.xml"), "{stderr}");
    let ids: Vec<String> = read_manifest(&tmp.path().join("ds")).unwrap().into_iter().map(|r| r.id).collect();
    assert_eq!(ids, ["a", "c"]);
}

#[test]
fn convert_rejects_dimension_mismatch() {
    let tmp = tempfile::tempdir().unwrap();
    write_annotated(tmp.path(), &["a", "b"]);
    fs::write(tmp.path().join("img/a.png"), encode_rgb_png(&RgbImage::new(41, 30)).unwrap()).unwrap();
    let out = run(tmp.path(), &["convert", "--annotations", "xml", "--images", "img", "--out", "ds"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("40x30"));
}

fn synth(dir: &Path, count: usize, healthy: usize) {
    ok(
        dir,
        &[
            "synth",
            "--count",
            &count.to_string(),
            "--healthy",
            &healthy.to_string(),
            "--size",
            "32",
            "--out",
            "ds",
        ],
    );
}

#[test]
fn split_excludes_healthy_items() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), 20, 4);
    ok(tmp.path(), &["split", "--data", "ds", "--seed", "3", "--out", "folds.json"]);
    let plan: FoldPlan = serde_json::from_value(json(tmp.path().join("folds.json"))).unwrap();
    assert_eq!(plan.folds.len(), 5);
    let mut tested: Vec<&String> = plan.folds.iter().flat_map(|f| &f.test).collect();
    tested.sort();
    assert_eq!(tested.len(), 20);
    assert!(tested.iter().all(|id| id.starts_with("ulcer_")));
}

fn train_args<'a>(variant: &'a str, out: &'a str) -> Vec<&'a str> {
    vec![
        "train", "--data", "ds", "--folds", "folds.json", "--variant", variant, "--width-scale", "0.05", "--epochs", "2",
        "--base-lr", "0.01", "--out", out,
    ]
}

fn output_hashes(dir: &Path) -> Vec<(String, String)> {
    let m = json(dir.join("run_manifest.json"));
    m["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| {
            let p = PathBuf::from(a["path"].as_str().unwrap());
            (p.file_name().unwrap().to_string_lossy().into_owned(), a["sha256"].as_str().unwrap().to_string())
        })
        .collect()
}

#[test]
fn training_is_bit_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), 30, 0);
    ok(tmp.path(), &["split", "--data", "ds", "--out", "folds.json"]);
    ok(tmp.path(), &train_args("fcn-16s", "r1"));
    ok(tmp.path(), &train_args("fcn-16s", "r2"));
    let a = fs::read(tmp.path().join("r1/last.ckpt")).unwrap();
    let b = fs::read(tmp.path().join("r2/last.ckpt")).unwrap();
    assert_eq!(a, b);
    assert_eq!(output_hashes(&tmp.path().join("r1")), output_hashes(&tmp.path().join("r2")));
}

#[test]
fn every_variant_trains_and_evaluates() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), 30, 2);
    ok(tmp.path(), &["split", "--data", "ds", "--out", "folds.json"]);
    for v in ["fcn-alexnet", "fcn-32s", "fcn-16s", "fcn-8s"] {
        let out = format!("run-{v}");
        ok(tmp.path(), &train_args(v, &out));
        let ck = format!("{out}/best.ckpt");
        let ev = format!("ev-{v}");
        ok(tmp.path(), &["eval", "--checkpoint", &ck, "--data", "ds", "--folds", "folds.json", "--out", &ev]);
        let e = json(tmp.path().join(&ev).join("eval.json"));
        assert_eq!(e["method"], v);
        assert_eq!(e["images"], 6);
        assert_eq!(e["healthy"]["images"], 2);
    }
}

#[test]
fn run_file_values_yield_to_flags() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), 20, 0);
    fs::write(
        tmp.path().join("run.json"),
        r#"{"data": "ds", "variant": "fcn-32s", "width_scale": 0.05, "epochs": 1, "seed": 1, "out": "from-file"}"#,
    )
    .unwrap();
    ok(tmp.path(), &["train", "--run", "run.json", "--seed", "7", "--out", "from-flag"]);
    let m = json(tmp.path().join("from-flag/run_manifest.json"));
    assert_eq!(m["config"]["train"]["seed"], 7);
    assert_eq!(m["config"]["train"]["epochs"], 1);
    assert_eq!(m["config"]["model"]["variant"], "fcn-32s");
    assert!(!tmp.path().join("from-file").exists());
}

#[test]
fn unknown_run_file_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("run.json"), r#"{"epoch": 3}"#).unwrap();
    let out = run(tmp.path(), &["train", "--run", "run.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epoch"));
}

#[test]
fn tier_plan_runs_every_stage() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), 20, 0);
    ok(tmp.path(), &["synth", "--kind", "textures", "--classes", "4", "--count", "10", "--size", "32", "--out", "tex"]);
    fs::write(
        tmp.path().join("plan.json"),
        r#"{"stages": [
            {"name": "cls", "role": "tier1-classification", "dataset": "tex", "num_classes": 4},
            {"name": "ft", "role": "target-fine-tune", "dataset": "target", "from_previous": true,
             "config": {"epochs": 2}}
        ]}"#,
    )
    .unwrap();
    ok(
        tmp.path(),
        &[
            "train", "--data", "ds", "--variant", "fcn-8s", "--width-scale", "0.05", "--epochs", "1", "--tier-plan",
            "plan.json", "--out", "tl",
        ],
    );
    let stages = json(tmp.path().join("tl/stages.json"));
    assert_eq!(stages[0]["epochs"], 1);
    assert_eq!(stages[1]["epochs"], 2);
    let reinit: Vec<&str> = stages[1]["load"]["reinitialized"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert!(!reinit.is_empty(), "classifier head should be reinitialized");
    assert!(tmp.path().join("tl/stage0_cls.ckpt").is_file());
}

fn write_predictions(dir: &Path, ds: &Path, f: impl Fn(&LabelImage) -> LabelImage) {
    fs::create_dir_all(dir).unwrap();
    for rec in read_manifest(ds).unwrap() {
        let gt = decode_paletted_png(&fs::read(ds.join(&rec.label)).unwrap()).unwrap();
        fs::write(dir.join(format!("{}.png", rec.id)), encode_paletted_png(&f(&gt)).unwrap()).unwrap();
    }
}

#[test]
fn perfect_predictions_score_one() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), 12, 3);
    write_predictions(&tmp.path().join("pred"), &tmp.path().join("ds"), |gt| gt.clone());
    ok(tmp.path(), &["eval", "--predictions", "pred", "--data", "ds", "--out", "ev"]);
    let e = json(tmp.path().join("ev/eval.json"));
    assert_eq!(e["images"], 12);
    for s in e["summary"].as_array().unwrap() {
        for m in ["dice", "sensitivity", "specificity", "mcc"] {
            assert_eq!(s[m]["mean"], 1.0, "{} {m}", s["region"]);
        }
    }
    let summary = fs::read_to_string(tmp.path().join("ev/summary.csv")).unwrap();
    assert_eq!(summary.lines().next().unwrap(), "method,region,dice,specificity,sensitivity,mcc");
    assert!(summary.contains("predictions,ulcer,1.0000 (±0.0000)"), "{summary}");
}

#[test]
fn background_predictions_pass_healthy_audit() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), 10, 4);
    write_predictions(&tmp.path().join("pred"), &tmp.path().join("ds"), |gt| {
        LabelImage::new(gt.width(), gt.height())
    });
    let out = ok(tmp.path(), &["eval", "--predictions", "pred", "--data", "ds", "--out", "ev"]);
    let e = json(tmp.path().join("ev/eval.json"));
    assert_eq!(e["healthy"]["images"], 4);
    assert_eq!(e["healthy"]["min_specificity"], 1.0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("healthy audit: 4 images, specificity min 1.0000"));
    let audit = fs::read_to_string(tmp.path().join("ev/healthy_audit.csv")).unwrap();
    assert_eq!(audit.lines().count(), 5);
}

#[test]
fn corrupt_checkpoint_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), 10, 0);
    fs::write(tmp.path().join("bad.ckpt"), b"not a checkpoint").unwrap();
    let out = run(tmp.path(), &["eval", "--checkpoint", "bad.ckpt", "--data", "ds", "--out", "ev"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("checkpoint"));
}

#[test]
fn report_merges_methods() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), 15, 0);
    ok(tmp.path(), &["split", "--data", "ds", "--out", "folds.json"]);
    let ds = tmp.path().join("ds");
    let variants: [(&str, fn(&LabelImage) -> LabelImage); 4] = [
        ("exact", |gt| gt.clone()),
        ("empty", |gt| LabelImage::new(gt.width(), gt.height())),
        ("all-ulcer", |gt| LabelImage::from_pixels(gt.width(), gt.height(), vec![2; gt.pixels().len()]).unwrap()),
        ("all-skin", |gt| LabelImage::from_pixels(gt.width(), gt.height(), vec![1; gt.pixels().len()]).unwrap()),
    ];
    let mut evals = Vec::new();
    for (name, f) in variants {
        write_predictions(&tmp.path().join(format!("pred-{name}")), &ds, f);
        for fold in ["0", "1"] {
            let out = format!("ev-{name}-{fold}");
            ok(
                tmp.path(),
                &[
                    "eval", "--predictions", &format!("pred-{name}"), "--data", "ds", "--folds", "folds.json", "--fold",
                    fold, "--method", name, "--out", &out,
                ],
            );
            evals.push(out);
        }
    }
    let mut args = vec!["report", "--out", "rep", "--bins", "5"];
    args.extend(evals.iter().map(String::as_str));
    ok(tmp.path(), &args);

    let table = fs::read_to_string(tmp.path().join("rep/comparison.csv")).unwrap();
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 4 * 3);
    assert!(rows[0].starts_with("exact,ulcer,1.0000"));
    let by_fold = fs::read_to_string(tmp.path().join("rep/comparison_by_fold.csv")).unwrap();
    assert_eq!(by_fold.lines().count(), 13);

    let hists = json(tmp.path().join("rep/histograms.json"));
    for m in hists.as_array().unwrap() {
        assert_eq!(m["images"], 6);
        for h in m["histograms"].as_array().unwrap() {
            let total: u64 = h["counts"].as_array().unwrap().iter().map(|c| c.as_u64().unwrap()).sum();
            assert_eq!(total, 6);
            assert_eq!(h["edges"].as_array().unwrap().len(), 6);
        }
    }
}
