use std::path::Path;

use maskeval::diagnose::{
    class_elongations, f1_gap_report, modes_summary, pairwise_divergence, shape_correlation, DiagnoseParams,
};
use maskeval::geometry::ImageDims;
use maskeval::headsim::{parse_scenario, synth_scenario, ScenarioSpec};
use maskeval::ingest::{
    convert_vott, ground_truth_from_doc, parse_ground_truth, parse_predictions, validate_dataset, ClassTable,
    DatasetSummary, GroundTruth, Predictions,
};
use maskeval::matching::{EvalSet, IouKind, MatchParams};
use maskeval::metrics::{evaluate_kind, EvalOptions, KindEvaluation};
use maskeval::report::{
    compare_files, dataset_files, diagnose_files, evaluation_files, DataStats, OutputFile, RunMetadata,
};
use maskeval::Error;
use serde_json::{json, Map, Value};

use crate::output::{read, write_all};
use crate::{
    CompareArgs, ConvertArgs, DiagnoseArgs, EvalArgs, EvaluateArgs, Failure, KindArg, Preset, SimulateArgs,
    ValidateArgs,
};

fn core(e: Error) -> Failure {
    match e {
        Error::InvalidThreshold(_)
        | Error::ParamMismatch(_)
        | Error::ClassSetMismatch(_)
        | Error::InvalidScenario(_)
        | Error::InsufficientData(_) => Failure::Config(e.to_string()),
        other => Failure::Input(other.to_string()),
    }
}

fn with_path(path: &Path) -> impl Fn(Error) -> Failure + '_ {
    move |e| match core(e) {
        Failure::Input(m) => Failure::Input(format!("{}: {m}", path.display())),
        other => other,
    }
}

fn config_map(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        _ => Map::new(),
    }
}

fn eval_options(a: &EvalArgs) -> Result<EvalOptions, Failure> {
    let opts = EvalOptions {
        iou_threshold: a.iou,
        score_threshold: a.score,
        max_detections: a.max_det,
    };
    opts.validate().map_err(core)?;
    if !(a.mask_threshold > 0.0 && a.mask_threshold < 1.0) {
        return Err(Failure::Config(format!("mask threshold {} must lie in (0, 1)", a.mask_threshold)));
    }
    Ok(opts)
}

fn eval_config(a: &EvalArgs) -> Value {
    json!({
        "gt": a.gt.display().to_string(),
        "pred": a.pred.display().to_string(),
        "iou_threshold": a.iou,
        "score_threshold": a.score,
        "max_detections": a.max_det,
        "mask_threshold": a.mask_threshold,
    })
}

struct Loaded {
    set: EvalSet,
    stats: DataStats,
}

fn load(a: &EvalArgs) -> Result<Loaded, Failure> {
    let gt: GroundTruth = parse_ground_truth(&read(&a.gt)?).map_err(with_path(&a.gt))?;
    let preds: Predictions = parse_predictions(&read(&a.pred)?).map_err(with_path(&a.pred))?;
    let set = EvalSet::build(&gt, &preds, a.mask_threshold).map_err(with_path(&a.pred))?;
    let stats = DataStats {
        images: set.scenes.len(),
        ground_truth: gt.instance_count(),
        detections: preds.detection_count(),
        missing_masks: preds
            .images
            .iter()
            .flat_map(|i| &i.detections)
            .filter(|d| d.mask.is_none())
            .count(),
    };
    Ok(Loaded { set, stats })
}

fn announce(dir: &Path, files: &[OutputFile]) {
    let names: Vec<&str> = files.iter().map(|f| f.name.as_str()).collect();
    println!("wrote {} to {}", names.join(", "), dir.display());
}

fn finish(dir: &Path, files: Vec<OutputFile>) -> Result<(), Failure> {
    write_all(dir, &files)?;
    announce(dir, &files);
    Ok(())
}

fn both_kinds(set: &EvalSet, opts: &EvalOptions) -> Result<(KindEvaluation, KindEvaluation), Failure> {
    Ok((
        evaluate_kind(set, IouKind::Box, opts).map_err(core)?,
        evaluate_kind(set, IouKind::Mask, opts).map_err(core)?,
    ))
}

pub fn evaluate(a: &EvaluateArgs) -> Result<(), Failure> {
    let opts = eval_options(&a.eval)?;
    let Loaded { set, stats } = load(&a.eval)?;
    let kinds: &[IouKind] = match a.kind {
        KindArg::Box => &[IouKind::Box],
        KindArg::Mask => &[IouKind::Mask],
        KindArg::Both => &[IouKind::Box, IouKind::Mask],
    };
    let evals = kinds
        .iter()
        .map(|&k| evaluate_kind(&set, k, &opts))
        .collect::<maskeval::Result<Vec<_>>>()
        .map_err(core)?;
    let confusion = set.confusion_matrix(opts.iou_threshold, opts.max_detections, opts.score_threshold);
    let mut config = eval_config(&a.eval);
    config["kind"] = json!(a.kind.name());
    let meta = RunMetadata::new("evaluate", config_map(config));
    let files = evaluation_files(&meta, &stats, &evals, &confusion).map_err(core)?;
    finish(&a.eval.out, files)
}

pub fn compare(a: &CompareArgs) -> Result<(), Failure> {
    let opts = eval_options(&a.eval)?;
    if !a.flag_threshold.is_finite() {
        return Err(Failure::Config("flag threshold must be finite".into()));
    }
    let Loaded { set, .. } = load(&a.eval)?;
    let (b, m) = both_kinds(&set, &opts)?;
    let gaps = f1_gap_report(&b.per_class, &m.per_class, a.flag_threshold).map_err(core)?;
    let mut config = eval_config(&a.eval);
    config["flag_threshold"] = json!(a.flag_threshold);
    let meta = RunMetadata::new("compare", config_map(config));
    let files = compare_files(&meta, &b, &m, &gaps).map_err(core)?;
    finish(&a.eval.out, files)
}

pub fn diagnose(a: &DiagnoseArgs) -> Result<(), Failure> {
    let opts = eval_options(&a.eval)?;
    let params = DiagnoseParams {
        oversize_ratio: a.oversize_ratio,
        offset_frac: a.offset_frac,
        coverage_frac: a.coverage_frac,
    };
    for (name, v) in [
        ("oversize ratio", params.oversize_ratio),
        ("offset fraction", params.offset_frac),
        ("coverage fraction", params.coverage_frac),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Failure::Config(format!("{name} must be positive, got {v}")));
        }
    }
    if !a.flag_threshold.is_finite() {
        return Err(Failure::Config("flag threshold must be finite".into()));
    }
    let Loaded { set, .. } = load(&a.eval)?;
    let run = |kind| {
        set.match_detections(
            &MatchParams::new(kind)
                .with_threshold(opts.iou_threshold)
                .with_max_detections(opts.max_detections)
                .with_min_score(opts.score_threshold),
        )
    };
    let records = pairwise_divergence(&set, &run(IouKind::Box), &run(IouKind::Mask)).map_err(core)?;
    let modes = modes_summary(&records, &params, &set.classes);
    let (b, m) = both_kinds(&set, &opts)?;
    let gaps = f1_gap_report(&b.per_class, &m.per_class, a.flag_threshold).map_err(core)?;
    let correlation = shape_correlation(&class_elongations(&set), &gaps);
    let mut config = eval_config(&a.eval);
    for (k, v) in [
        ("oversize_ratio", a.oversize_ratio),
        ("offset_frac", a.offset_frac),
        ("coverage_frac", a.coverage_frac),
        ("flag_threshold", a.flag_threshold),
    ] {
        config[k] = json!(v);
    }
    let meta = RunMetadata::new("diagnose", config_map(config));
    let correlation = match &correlation {
        Ok(c) => Ok(c),
        Err(Error::InsufficientData(msg)) => Err(msg.clone()),
        Err(e) => return Err(Failure::Config(e.to_string())),
    };
    let files = diagnose_files(&meta, set.classes.all_names(), &records, &params, &modes, correlation)
        .map_err(core)?;
    finish(&a.eval.out, files)
}

/// Pretty JSON of `doc` with a `metadata` object added at the top level.
fn document_with_metadata<T: serde::Serialize>(doc: &T, meta: &RunMetadata) -> Result<String, Failure> {
    let mut value = serde_json::to_value(doc).map_err(|e| core(e.into()))?;
    if let Value::Object(m) = &mut value {
        m.insert("metadata".into(), serde_json::to_value(meta).map_err(|e| core(e.into()))?);
    }
    let mut text = serde_json::to_string_pretty(&value).map_err(|e| core(e.into()))?;
    text.push('\n');
    Ok(text)
}

pub fn simulate(a: &SimulateArgs) -> Result<(), Failure> {
    let mut spec = match &a.spec {
        Some(path) => parse_scenario(&read(path)?).map_err(|e| match e {
            Error::Json(j) => Failure::Input(format!("{}: {j}", path.display())),
            other => core(other),
        })?,
        None => match a.preset {
            Preset::Planted => ScenarioSpec::planted(0),
            Preset::Perfect => ScenarioSpec::perfect(0),
        },
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let (gt, pred) = synth_scenario(&spec).map_err(core)?;
    let config = json!({
        "spec": a.spec.as_ref().map(|p| p.display().to_string()),
        "preset": a.spec.is_none().then_some(match a.preset {
            Preset::Planted => "planted",
            Preset::Perfect => "perfect",
        }),
        "seed": spec.seed,
        "grid_side": spec.grid_side,
    });
    let meta = RunMetadata::new("simulate", config_map(config));
    let files = vec![
        OutputFile {
            name: "gt.json".into(),
            contents: document_with_metadata(&gt, &meta)?,
        },
        OutputFile {
            name: "pred.json".into(),
            contents: document_with_metadata(&pred, &meta)?,
        },
        OutputFile {
            name: "scenario.json".into(),
            contents: document_with_metadata(&spec, &meta)?,
        },
    ];
    finish(&a.out, files)
}

pub fn convert(a: &ConvertArgs) -> Result<(), Failure> {
    let dims = ImageDims::new(a.width, a.height).map_err(|e| Failure::Config(e.to_string()))?;
    let classes = match &a.classes {
        Some(names) => ClassTable::new(names).map_err(|e| Failure::Config(e.to_string()))?,
        None => ClassTable::road(),
    };
    let doc = convert_vott(&read(&a.input)?, dims, &classes).map_err(with_path(&a.input))?;
    ground_truth_from_doc(&doc).map_err(with_path(&a.input))?;
    let config = json!({
        "input": a.input.display().to_string(),
        "width": a.width,
        "height": a.height,
        "classes": classes.real_names(),
    });
    let meta = RunMetadata::new("convert", config_map(config));
    let files = vec![OutputFile {
        name: "ground_truth.json".into(),
        contents: document_with_metadata(&doc, &meta)?,
    }];
    finish(&a.out, files)
}

/// Accepts a bare summary or a report that nests it under `summary`.
fn parse_expected(path: &Path) -> Result<DatasetSummary, Failure> {
    let value: Value = serde_json::from_str(&read(path)?)
        .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let inner = value.get("summary").cloned().unwrap_or(value);
    serde_json::from_value(inner).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

pub fn validate(a: &ValidateArgs) -> Result<(), Failure> {
    let mut seen = Vec::new();
    for (split, _) in &a.gt {
        if seen.contains(split) {
            return Err(Failure::Config(format!("split {} given twice", split.as_str())));
        }
        seen.push(*split);
    }
    let loaded = a
        .gt
        .iter()
        .map(|(split, path)| Ok((*split, parse_ground_truth(&read(path)?).map_err(with_path(path))?)))
        .collect::<Result<Vec<_>, Failure>>()?;
    let refs: Vec<_> = loaded.iter().map(|(s, g)| (*s, g)).collect();
    let summary = validate_dataset(&refs);
    let mismatches = match &a.expected_summary {
        Some(p) => Some(summary.diff(&parse_expected(p)?)),
        None => None,
    };

    for c in summary.classes.iter().chain(std::iter::once(&summary.totals)) {
        println!(
            "{:<12} {:>8} {:>8} {:>8} {:>8}",
            c.class, c.training, c.validation, c.testing, c.total
        );
    }
    if let Some(out) = &a.out {
        let config = json!({
            "gt": a.gt.iter().map(|(s, p)| format!("{}={}", s.as_str(), p.display())).collect::<Vec<_>>(),
            "expected_summary": a.expected_summary.as_ref().map(|p| p.display().to_string()),
        });
        let meta = RunMetadata::new("validate", config_map(config));
        let files = dataset_files(&meta, &summary, mismatches.as_deref()).map_err(core)?;
        finish(out, files)?;
    }
    match mismatches {
        Some(m) if !m.is_empty() => Err(Failure::Mismatch(format!(
            "dataset differs from the expected summary:\n  {}",
            m.join("\n  ")
        ))),
        _ => Ok(()),
    }
}
