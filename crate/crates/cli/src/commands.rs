use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use fcnseg::arch::{build_model, load_pretrained, predict_labels, Checkpoint, LoadMode, LoadReport, ModelSpec, SegModel, Variant};
use fcnseg::data::{
    decode_paletted_png, decode_rgb_png, load_dataset_with, make_fold_plan, rasterize, read_manifest, write_dataset,
    write_dataset_with, AnnotationImporter, FoldPlan, RgbImage, Sample, SynthKind, XmlSchema, MANIFEST_FILE,
};
use fcnseg::label::NUM_CLASSES;
use fcnseg::metrics::{
    aggregate_folds, dice_histogram, evaluate_split, metrics, read_per_image_csv, region_masks, confusion,
    summary_rows, write_per_image_csv, write_summary_csv, Histogram, Region, RegionSummary, SplitReport, SummaryRow,
};
use fcnseg::train::{run_tier_plan, write_epoch_csv, Stage, StageData, StageRole, TierPlan, TrainConfig};
use fcnseg::LabelImage;

use crate::run::{hash_files, RunRecorder, RUN_MANIFEST};
use crate::{CliError, ConvertArgs, EvalArgs, ReportArgs, SplitArgs, SynthArgs, SynthKindArg, TrainArgs, TrainOptions};

type CliResult<T = ()> = Result<T, CliError>;

/// Key a tier-plan stage uses to mean the fold's own train/validation split.
pub const TARGET_DATASET: &str = "target";
pub const EVAL_FILE: &str = "eval.json";
pub const PER_IMAGE_FILE: &str = "per_image.csv";

fn create_dir(dir: &Path) -> CliResult {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn read(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn create(path: &Path) -> CliResult<fs::File> {
    fs::File::create(path).map_err(|e| CliError::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    serde_json::from_slice(&read(path)?)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// One digest over a dataset's manifest and every file it references.
fn dataset_artifact(dir: &Path) -> CliResult<crate::run::Artifact> {
    let mut files = vec![dir.join(MANIFEST_FILE)];
    for rec in read_manifest(dir)? {
        files.push(dir.join(rec.image));
        files.push(dir.join(rec.label));
    }
    hash_files(&dir.display().to_string(), &files)
}

pub fn convert(args: &ConvertArgs) -> CliResult {
    let mut xmls: Vec<PathBuf> = fs::read_dir(&args.annotations)
        .map_err(|e| CliError::io(&args.annotations, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("xml")))
        .collect();
    xmls.sort();
    if xmls.is_empty() {
        return Err(CliError::Usage(format!("no *.xml files in {}", args.annotations.display())));
    }
    let mut rec = RunRecorder::start("convert", serde_json::json!({
        "annotations": args.annotations,
        "images": args.images,
        "out": args.out,
    }), vec![])?;

    let mut items = Vec::new();
    let mut failed = 0;
    let mut seen = std::collections::BTreeSet::new();
    for xml in &xmls {
        match convert_one(xml, &args.images) {
            Ok((id, image_path, img, label)) => {
                if !seen.insert(id.clone()) {
                    eprintln!("{}: duplicate image id '{id}'", xml.display());
                    failed += 1;
                    continue;
                }
                rec.input(xml)?;
                rec.input(&image_path)?;
                items.push((id, img, label, false));
            }
            Err(e) => {
                eprintln!("{}: {e}", xml.display());
                failed += 1;
            }
        }
    }
    create_dir(&args.out)?;
    let records = write_dataset(&args.out, &items)?;
    rec.output(args.out.join(MANIFEST_FILE));
    for r in &records {
        rec.output(args.out.join(&r.image));
        rec.output(args.out.join(&r.label));
    }
    rec.finish(&args.out.join(RUN_MANIFEST))?;
    println!("converted {} of {} annotations into {}", items.len(), xmls.len(), args.out.display());
    if failed > 0 {
        return Err(CliError::Partial { failed, total: xmls.len() });
    }
    Ok(())
}

fn convert_one(xml: &Path, images: &Path) -> CliResult<(String, PathBuf, RgbImage, LabelImage)> {
    let ann = XmlSchema.import(&read(xml)?)?;
    let direct = images.join(&ann.image_id);
    let image_path = if direct.is_file() { direct } else { images.join(format!("{}.png", ann.image_id)) };
    let img = decode_rgb_png(&read(&image_path)?)?;
    if (img.width, img.height) != (ann.width, ann.height) {
        return Err(CliError::Usage(format!(
            "annotation declares {}x{} but {} is {}x{}",
            ann.width,
            ann.height,
            image_path.display(),
            img.width,
            img.height
        )));
    }
    let label = rasterize(&ann, ann.width, ann.height)?;
    let id = Path::new(&ann.image_id)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| ann.image_id.clone());
    Ok((id, image_path, img, label))
}

pub fn synth(args: &SynthArgs) -> CliResult {
    let (kind, prefix, classes) = match args.kind {
        SynthKindArg::Ulcer => (SynthKind::Ulcer, "ulcer_", NUM_CLASSES),
        SynthKindArg::Healthy => (SynthKind::Healthy, "healthy_", NUM_CLASSES),
        SynthKindArg::Objects => (SynthKind::Objects, "object_", NUM_CLASSES),
        SynthKindArg::Textures => {
            if args.classes < 2 {
                return Err(CliError::Usage("--classes must be at least 2".into()));
            }
            (SynthKind::Textures { classes: args.classes }, "texture_", args.classes as usize)
        }
    };
    let healthy_kind = kind == SynthKind::Healthy;
    let mut items: Vec<_> = fcnseg::data::generate(kind, args.count, args.size, args.seed)
        .into_iter()
        .enumerate()
        .map(|(i, (img, l))| (format!("{prefix}{i:05}"), img, l, healthy_kind))
        .collect();
    if args.healthy > 0 {
        let seed = args.seed.wrapping_add(1_000_003);
        items.extend(
            fcnseg::data::generate(SynthKind::Healthy, args.healthy, args.size, seed)
                .into_iter()
                .enumerate()
                .map(|(i, (img, l))| (format!("healthy_{i:05}"), img, l, true)),
        );
    }
    let mut rec = RunRecorder::start("synth", args, vec![args.seed])?;
    create_dir(&args.out)?;
    let records = write_dataset_with(&args.out, &items, classes)?;
    rec.output(args.out.join(MANIFEST_FILE));
    for r in &records {
        rec.output(args.out.join(&r.image));
        rec.output(args.out.join(&r.label));
    }
    rec.finish(&args.out.join(RUN_MANIFEST))?;
    println!("wrote {} images to {}", items.len(), args.out.display());
    Ok(())
}

pub fn split(args: &SplitArgs) -> CliResult {
    let ids: Vec<String> = read_manifest(&args.data)?
        .into_iter()
        .filter(|r| !r.healthy)
        .map(|r| r.id)
        .collect();
    let plan = make_fold_plan(&ids, args.seed)?;
    let mut rec = RunRecorder::start("split", args, vec![args.seed])?;
    rec.input(&args.data.join(MANIFEST_FILE))?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write(&args.out, serde_json::to_string_pretty(&plan)?)?;
    rec.output(&args.out);
    let mut manifest = args.out.clone().into_os_string();
    manifest.push(".run_manifest.json");
    rec.finish(Path::new(&manifest))?;
    for f in &plan.folds {
        println!(
            "fold {}: train {} validation {} test {}",
            f.fold,
            f.train.len(),
            f.validation.len(),
            f.test.len()
        );
    }
    Ok(())
}

fn load_fold_plan(path: &Path) -> CliResult<FoldPlan> {
    read_json(path)
}

/// Fold `k` of a plan file, or of a freshly drawn seed-0 plan over the non-healthy items.
fn resolve_fold(data: &Path, folds: Option<&Path>, fold: usize) -> CliResult<fcnseg::data::Fold> {
    let plan = match folds {
        Some(p) => load_fold_plan(p)?,
        None => {
            let ids: Vec<String> = read_manifest(data)?
                .into_iter()
                .filter(|r| !r.healthy)
                .map(|r| r.id)
                .collect();
            make_fold_plan(&ids, 0)?
        }
    };
    plan.folds
        .into_iter()
        .find(|f| f.fold == fold)
        .ok_or_else(|| CliError::Usage(format!("fold {fold} not in plan")))
}

fn pick(samples: &[Sample], ids: &[String]) -> CliResult<Vec<Sample>> {
    let by_id: BTreeMap<&str, &Sample> = samples.iter().map(|s| (s.id.as_str(), s)).collect();
    ids.iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .map(|s| (*s).clone())
                .ok_or_else(|| CliError::Usage(format!("fold plan names unknown item '{id}'")))
        })
        .collect()
}

fn resolve_paths(opts: &mut TrainOptions, base: &Path) {
    let fix = |p: &mut Option<PathBuf>| {
        if let Some(path) = p.as_mut() {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    };
    fix(&mut opts.data);
    fix(&mut opts.folds);
    fix(&mut opts.tier_plan);
    fix(&mut opts.init);
    fix(&mut opts.out);
}

/// Run-file values overlaid by every flag given on the command line.
fn merged_options(args: &TrainArgs) -> CliResult<TrainOptions> {
    let Some(run) = &args.run else {
        return Ok(args.options.clone());
    };
    let mut file: TrainOptions = read_json(run)?;
    resolve_paths(&mut file, run.parent().unwrap_or(Path::new(".")));
    let mut base = serde_json::to_value(file)?;
    let flags = serde_json::to_value(&args.options)?;
    if let (Value::Object(b), Value::Object(f)) = (&mut base, flags) {
        for (k, v) in f {
            if !v.is_null() {
                b.insert(k, v);
            }
        }
    }
    Ok(serde_json::from_value(base)?)
}

/// Fully resolved training configuration, recorded in the run manifest.
#[derive(Debug, Clone, Serialize)]
struct TrainRun {
    data: PathBuf,
    folds: Option<PathBuf>,
    fold: usize,
    model: ModelSpec,
    train: TrainConfig,
    size: Option<usize>,
    tier_plan: Option<PathBuf>,
    init: Option<PathBuf>,
    load_mode: LoadMode,
    out: PathBuf,
}

fn resolve_train(o: TrainOptions) -> CliResult<TrainRun> {
    let need = |v: Option<PathBuf>, name: &str| v.ok_or_else(|| CliError::Usage(format!("--{name} is required")));
    let d = TrainConfig::default();
    let model = ModelSpec {
        variant: o.variant.unwrap_or(Variant::Fcn8s),
        num_classes: NUM_CLASSES,
        width_scale: o.width_scale.unwrap_or(1.0),
        dropout: o.dropout,
    };
    model.validate()?;
    let train = TrainConfig {
        epochs: o.epochs.unwrap_or(d.epochs),
        base_lr: o.base_lr.unwrap_or(d.base_lr),
        step_fraction: o.step_fraction.unwrap_or(d.step_fraction),
        gamma: o.gamma.unwrap_or(d.gamma),
        momentum: o.momentum.unwrap_or(d.momentum),
        batch_size: o.batch_size.unwrap_or(d.batch_size),
        seed: o.seed.unwrap_or(d.seed),
    };
    train.validate()?;
    Ok(TrainRun {
        data: need(o.data, "data")?,
        folds: o.folds,
        fold: o.fold.unwrap_or(0),
        model,
        train,
        size: o.size,
        tier_plan: o.tier_plan,
        init: o.init,
        load_mode: o.load_mode.unwrap_or(LoadMode::Compatible),
        out: need(o.out, "out")?,
    })
}

/// Tier-plan file: `dataset` is a dataset directory (relative to the plan file) or
/// `"target"`; `config` keys override the command's training configuration.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanFile {
    #[serde(default)]
    initial: Option<PathBuf>,
    stages: Vec<PlanStage>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanStage {
    name: String,
    role: StageRole,
    dataset: String,
    #[serde(default)]
    from_previous: bool,
    #[serde(default = "compatible")]
    load_mode: LoadMode,
    #[serde(default)]
    num_classes: Option<usize>,
    #[serde(default)]
    config: serde_json::Map<String, Value>,
}

fn compatible() -> LoadMode {
    LoadMode::Compatible
}

/// Every tenth item (by manifest order) is held out for validation.
fn holdout_split(samples: Vec<Sample>) -> StageData {
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (i, s) in samples.into_iter().enumerate() {
        if i % 10 == 9 {
            val.push(s);
        } else {
            train.push(s);
        }
    }
    StageData { train, val }
}

#[derive(Serialize)]
struct StageSummary<'a> {
    name: &'a str,
    epochs: usize,
    final_train_loss: Option<f64>,
    final_val_loss: Option<f64>,
    final_val_pixel_acc: Option<f64>,
    load: &'a Option<LoadReport>,
}

pub fn train(args: &TrainArgs) -> CliResult {
    let cfg = resolve_train(merged_options(args)?)?;
    let mut rec = RunRecorder::start("train", &cfg, vec![cfg.train.seed])?;
    rec.input_artifact(dataset_artifact(&cfg.data)?);
    if let Some(f) = &cfg.folds {
        rec.input(f)?;
    }

    let samples = load_dataset_with(&cfg.data, cfg.size, NUM_CLASSES)?;
    let fold = resolve_fold(&cfg.data, cfg.folds.as_deref(), cfg.fold)?;
    let target = StageData {
        train: pick(&samples, &fold.train)?,
        val: pick(&samples, &fold.validation)?,
    };

    let mut datasets = BTreeMap::new();
    datasets.insert(TARGET_DATASET.to_string(), target);
    let initial = match &cfg.init {
        Some(p) => {
            rec.input(p)?;
            Some(Checkpoint::load(p)?)
        }
        None => None,
    };
    let plan = match &cfg.tier_plan {
        None => {
            let mut plan = TierPlan::single(TARGET_DATASET, cfg.train);
            if initial.is_some() {
                plan.stages[0].from_previous = true;
                plan.stages[0].load_mode = cfg.load_mode;
            }
            plan.initial = initial;
            plan
        }
        Some(path) => {
            rec.input(path)?;
            let file: PlanFile = read_json(path)?;
            let base = path.parent().unwrap_or(Path::new("."));
            let plan_initial = match (&initial, &file.initial) {
                (Some(_), _) => initial.clone(),
                (None, Some(p)) => {
                    let p = base.join(p);
                    rec.input(&p)?;
                    Some(Checkpoint::load(&p)?)
                }
                (None, None) => None,
            };
            let mut stages = Vec::with_capacity(file.stages.len());
            for s in file.stages {
                let mut config = serde_json::to_value(cfg.train)?;
                if let Value::Object(c) = &mut config {
                    c.extend(s.config);
                }
                let config: TrainConfig = serde_json::from_value(config)
                    .map_err(|e| CliError::Usage(format!("stage '{}' config: {e}", s.name)))?;
                if s.dataset != TARGET_DATASET && !datasets.contains_key(&s.dataset) {
                    let dir = base.join(&s.dataset);
                    rec.input_artifact(dataset_artifact(&dir)?);
                    let classes = s.num_classes.unwrap_or(NUM_CLASSES);
                    datasets.insert(s.dataset.clone(), holdout_split(load_dataset_with(&dir, cfg.size, classes)?));
                }
                stages.push(Stage {
                    name: s.name,
                    role: s.role,
                    dataset: s.dataset,
                    from_previous: s.from_previous,
                    load_mode: s.load_mode,
                    num_classes: s.num_classes,
                    config,
                });
            }
            TierPlan { stages, initial: plan_initial }
        }
    };

    let outcome = run_tier_plan(&plan, cfg.model, &datasets)?;
    create_dir(&cfg.out)?;
    let last_stage = outcome.stages.last().expect("validated plan has stages");
    let last = cfg.out.join("last.ckpt");
    let best = cfg.out.join("best.ckpt");
    outcome.final_checkpoint.save(&last)?;
    last_stage.best.save(&best)?;
    let epochs = cfg.out.join("epochs.csv");
    write_epoch_csv(&last_stage.logs, create(&epochs)?)?;
    rec.output(&last);
    rec.output(&best);
    rec.output(&epochs);
    if outcome.stages.len() > 1 {
        for (i, s) in outcome.stages.iter().enumerate() {
            let ck = cfg.out.join(format!("stage{i}_{}.ckpt", s.name));
            let csv = cfg.out.join(format!("stage{i}_{}_epochs.csv", s.name));
            s.checkpoint.save(&ck)?;
            write_epoch_csv(&s.logs, create(&csv)?)?;
            rec.output(ck);
            rec.output(csv);
        }
    }
    let summaries: Vec<StageSummary> = outcome
        .stages
        .iter()
        .map(|s| StageSummary {
            name: &s.name,
            epochs: s.logs.len(),
            final_train_loss: s.logs.last().map(|l| l.train_loss),
            final_val_loss: s.logs.last().map(|l| l.val_loss),
            final_val_pixel_acc: s.logs.last().map(|l| l.val_pixel_acc),
            load: &s.load,
        })
        .collect();
    let summary = cfg.out.join("stages.json");
    write(&summary, serde_json::to_string_pretty(&summaries)?)?;
    rec.output(&summary);
    rec.finish(&cfg.out.join(RUN_MANIFEST))?;
    for s in &summaries {
        println!(
            "{}: {} epochs, train loss {:.4}, val loss {:.4}, val pixel acc {:.4}",
            s.name,
            s.epochs,
            s.final_train_loss.unwrap_or(f64::NAN),
            s.final_val_loss.unwrap_or(f64::NAN),
            s.final_val_pixel_acc.unwrap_or(f64::NAN),
        );
    }
    println!("checkpoints written to {}", cfg.out.display());
    Ok(())
}

/// Builds the checkpoint's model and loads it strictly.
fn model_from_checkpoint(path: &Path) -> CliResult<SegModel> {
    let ck = Checkpoint::load(path)?;
    let mut model = build_model(ck.meta.model, 0)?;
    load_pretrained(&mut model, &ck, LoadMode::Strict)?;
    Ok(model)
}

enum Predictor {
    Model(SegModel),
    Files(PathBuf),
}

impl Predictor {
    fn predict(&self, s: &Sample) -> CliResult<Option<LabelImage>> {
        match self {
            Predictor::Model(m) => Ok(Some(predict_labels(&m.forward(&s.image)?)?)),
            Predictor::Files(dir) => {
                let p = dir.join(format!("{}.png", s.id));
                if !p.is_file() {
                    return Ok(None);
                }
                Ok(Some(decode_paletted_png(&read(&p)?)?))
            }
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EvalRecord {
    pub method: String,
    pub fold: usize,
    /// Square extent images were resized to before scoring; `None` = native resolution.
    pub resolution: Option<usize>,
    pub images: usize,
    pub summary: Vec<RegionSummary>,
    pub dice: BTreeMap<Region, Vec<f64>>,
    pub histograms: Vec<Histogram>,
    pub healthy: Option<HealthyAudit>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct HealthyAudit {
    pub images: usize,
    pub min_specificity: f64,
    pub mean_specificity: f64,
}

pub fn eval(args: &EvalArgs) -> CliResult {
    let mut rec = RunRecorder::start("eval", args, vec![])?;
    rec.input_artifact(dataset_artifact(&args.data)?);
    let (predictor, default_method) = match (&args.checkpoint, &args.predictions) {
        (Some(ck), _) => {
            rec.input(ck)?;
            let model = model_from_checkpoint(ck)?;
            let name = model.variant().name().to_string();
            (Predictor::Model(model), name)
        }
        (None, Some(dir)) => (Predictor::Files(dir.clone()), "predictions".to_string()),
        (None, None) => return Err(CliError::Usage("one of --checkpoint or --predictions is required".into())),
    };
    let method = args.method.clone().unwrap_or(default_method);
    let samples = load_dataset_with(&args.data, args.size, NUM_CLASSES)?;
    let test = match &args.folds {
        Some(f) => {
            rec.input(f)?;
            pick(&samples, &resolve_fold(&args.data, Some(f), args.fold)?.test)?
        }
        None => samples.iter().filter(|s| !s.healthy).cloned().collect(),
    };

    let mut preds = Vec::with_capacity(test.len());
    let mut gts = Vec::with_capacity(test.len());
    for s in &test {
        let p = predictor
            .predict(s)?
            .ok_or_else(|| CliError::Usage(format!("no prediction for '{}'", s.id)))?;
        preds.push((s.id.clone(), p));
        gts.push((s.id.clone(), s.label.clone()));
    }
    let report = evaluate_split(&preds, &gts)?;

    let mut audit_rows = Vec::new();
    for s in samples.iter().filter(|s| s.healthy) {
        if let Some(p) = predictor.predict(s)? {
            let [_, _, pm] = region_masks(&p);
            let [_, _, gm] = region_masks(&s.label);
            let m = metrics(&confusion(&pm, &gm)?);
            audit_rows.push((s.id.clone(), m.specificity, pm.count()));
        }
    }

    create_dir(&args.out)?;
    let per_image = args.out.join(PER_IMAGE_FILE);
    write_per_image_csv(&report.records, create(&per_image)?)?;
    let summary = args.out.join("summary.csv");
    write_summary_csv(&summary_rows(&method, &report.summary), create(&summary)?)?;
    rec.output(&per_image);
    rec.output(&summary);

    let healthy = if audit_rows.is_empty() {
        None
    } else {
        let path = args.out.join("healthy_audit.csv");
        let mut w = create(&path)?;
        writeln!(w, "id,specificity,foreground_pixels").map_err(|e| CliError::io(&path, e))?;
        for (id, spec, fg) in &audit_rows {
            writeln!(w, "{id},{spec:.6},{fg}").map_err(|e| CliError::io(&path, e))?;
        }
        drop(w);
        rec.output(&path);
        let specs: Vec<f64> = audit_rows.iter().map(|r| r.1).collect();
        Some(HealthyAudit {
            images: specs.len(),
            min_specificity: specs.iter().copied().fold(f64::INFINITY, f64::min),
            mean_specificity: specs.iter().sum::<f64>() / specs.len() as f64,
        })
    };

    let record = EvalRecord {
        method: method.clone(),
        fold: args.fold,
        resolution: args.size,
        images: test.len(),
        summary: report.summary.clone(),
        dice: Region::ALL.iter().map(|&r| (r, report.dice_vector(r))).collect(),
        histograms: Region::ALL
            .iter()
            .map(|&r| dice_histogram(r, &report.dice_vector(r), args.bins))
            .collect(),
        healthy,
    };
    let eval_path = args.out.join(EVAL_FILE);
    write(&eval_path, serde_json::to_string_pretty(&record)?)?;
    rec.output(&eval_path);
    rec.finish(&args.out.join(RUN_MANIFEST))?;

    print_rows(&summary_rows(&method, &report.summary));
    if let Some(h) = &record.healthy {
        println!(
            "healthy audit: {} images, specificity min {:.4} mean {:.4}",
            h.images, h.min_specificity, h.mean_specificity
        );
    }
    Ok(())
}

fn print_rows(rows: &[SummaryRow]) {
    println!(
        "{:<14} {:<17} {:<18} {:<18} {:<18} {:<18}",
        "method", "region", "dice", "specificity", "sensitivity", "mcc"
    );
    for r in rows {
        println!(
            "{:<14} {:<17} {:<18} {:<18} {:<18} {:<18}",
            r.method, r.region, r.dice, r.specificity, r.sensitivity, r.mcc
        );
    }
}

#[derive(Serialize)]
struct MethodHistograms {
    method: String,
    images: usize,
    histograms: Vec<Histogram>,
}

pub fn report(args: &ReportArgs) -> CliResult {
    let mut rec = RunRecorder::start("report", args, vec![])?;
    let mut order: Vec<String> = Vec::new();
    let mut by_method: BTreeMap<String, Vec<SplitReport>> = BTreeMap::new();
    for dir in &args.evals {
        let eval_path = dir.join(EVAL_FILE);
        let csv_path = dir.join(PER_IMAGE_FILE);
        rec.input(&eval_path)?;
        rec.input(&csv_path)?;
        let record: EvalRecord = read_json(&eval_path)?;
        let records = read_per_image_csv(fs::File::open(&csv_path).map_err(|e| CliError::io(&csv_path, e))?)?;
        if !order.contains(&record.method) {
            order.push(record.method.clone());
        }
        by_method
            .entry(record.method)
            .or_default()
            .push(SplitReport::from_records(records));
    }

    let mut pooled = Vec::new();
    let mut per_fold = Vec::new();
    let mut hists = Vec::new();
    for method in &order {
        let agg = aggregate_folds(&by_method[method]);
        pooled.extend(summary_rows(method, &agg.per_image.summary));
        per_fold.extend(summary_rows(method, &agg.per_fold));
        let images = agg.per_image.dice_vector(Region::Complete).len();
        hists.push(MethodHistograms {
            method: method.clone(),
            images,
            histograms: Region::ALL
                .iter()
                .map(|&r| dice_histogram(r, &agg.per_image.dice_vector(r), args.bins))
                .collect(),
        });
    }

    create_dir(&args.out)?;
    let comparison = args.out.join("comparison.csv");
    write_summary_csv(&pooled, create(&comparison)?)?;
    let by_fold = args.out.join("comparison_by_fold.csv");
    write_summary_csv(&per_fold, create(&by_fold)?)?;
    let hist_path = args.out.join("histograms.json");
    write(&hist_path, serde_json::to_string_pretty(&hists)?)?;
    rec.output(&comparison);
    rec.output(&by_fold);
    rec.output(&hist_path);
    rec.finish(&args.out.join(RUN_MANIFEST))?;
    print_rows(&pooled);
    Ok(())
}
