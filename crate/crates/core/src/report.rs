//! Rendering of evaluation results into report files.
//!
//! Everything is built in memory so callers can write all files or none.
//! JSON keeps full precision; CSV and Markdown show four decimals with `-`
//! for undefined cells. Every file starts with the run metadata: a
//! `metadata` object in JSON, `# ` comment lines in CSV and Markdown.

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::diagnose::{
    classify_failure, DiagnoseParams, DivergenceRecord, F1GapReport, FailureMode, ModesSummary, ShapeCorrelation,
};
use crate::error::Result;
use crate::ingest::DatasetSummary;
use crate::matching::ConfusionMatrix;
use crate::metrics::{render_cell, KindEvaluation, PerClassTable, SummaryMetrics};

pub const TOOL_NAME: &str = "maskeval";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputFile {
    pub name: String,
    pub contents: String,
}

impl OutputFile {
    fn new(name: &str, contents: String) -> Self {
        Self {
            name: name.to_owned(),
            contents,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetadata {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: Map<String, Value>,
}

impl RunMetadata {
    pub fn new(command: &str, config: Map<String, Value>) -> Self {
        Self {
            tool: TOOL_NAME.to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            command: command.to_owned(),
            config,
        }
    }

    fn comment_lines(&self) -> String {
        format!(
            "# tool: {} {}\n# command: {}\n# config: {}\n",
            self.tool,
            self.version,
            self.command,
            Value::Object(self.config.clone())
        )
    }
}

fn json_file(name: &str, meta: &RunMetadata, body: Value) -> Result<OutputFile> {
    let mut root = Map::new();
    root.insert("metadata".into(), serde_json::to_value(meta)?);
    match body {
        Value::Object(fields) => root.extend(fields),
        other => {
            root.insert("data".into(), other);
        }
    }
    let mut text = serde_json::to_string_pretty(&Value::Object(root))?;
    text.push('\n');
    Ok(OutputFile::new(name, text))
}

fn csv_file(name: &str, meta: &RunMetadata, header: &[String], rows: &[Vec<String>]) -> Result<OutputFile> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    let body = String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 input");
    Ok(OutputFile::new(name, meta.comment_lines().replace('\n', "\r\n") + &body))
}

/// Four decimals; negative zero prints as zero.
pub fn fixed4(v: f64) -> String {
    format!("{:.4}", if v == 0.0 { 0.0 } else { v })
}

fn cell(v: Option<f64>) -> String {
    render_cell(v.map(|x| if x == 0.0 { 0.0 } else { x }))
}

fn bold(text: String, on: bool) -> String {
    if on && text != "-" {
        format!("**{text}**")
    } else {
        text
    }
}

/// Counts describing the evaluated data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DataStats {
    pub images: usize,
    pub ground_truth: usize,
    pub detections: usize,
    pub missing_masks: usize,
}

fn summary_row(s: &SummaryMetrics) -> [Option<f64>; 6] {
    [s.map, s.ap50, s.ap75, s.ar_at_1, s.ar_at_10, s.ar_at_100]
}

const SUMMARY_COLUMNS: [&str; 6] = ["AP", "AP50", "AP75", "AR@1", "AR@10", "AR@100"];
const TABLE_METRICS: [&str; 4] = ["Precision", "Recall", "F1", "AP"];

fn table_cells(t: &PerClassTable, metric: &str) -> Vec<String> {
    t.rows
        .iter()
        .zip(&t.bold)
        .map(|(r, b)| match metric {
            "Precision" => bold(cell(r.precision), b.precision),
            "Recall" => bold(cell(r.recall), b.recall),
            "F1" => bold(cell(r.f1), b.f1),
            _ => bold(cell(r.ap), b.ap),
        })
        .collect()
}

fn kinds_object<T: Serialize>(items: impl IntoIterator<Item = (String, T)>) -> Result<Value> {
    let mut m = Map::new();
    for (k, v) in items {
        m.insert(k, serde_json::to_value(v)?);
    }
    Ok(Value::Object(m))
}

pub fn evaluation_files(
    meta: &RunMetadata,
    stats: &DataStats,
    kinds: &[KindEvaluation],
    confusion: &ConfusionMatrix,
) -> Result<Vec<OutputFile>> {
    let mut files = Vec::new();

    files.push(json_file(
        "summary.json",
        meta,
        json!({
            "data": stats,
            "summary": kinds_object(kinds.iter().map(|k| (k.kind.as_str().to_owned(), &k.summary)))?,
        }),
    )?);

    let names: Vec<String> = kinds
        .first()
        .map(|k| k.per_class.rows.iter().map(|r| r.class.clone()).collect())
        .unwrap_or_default();
    let mut header = vec!["kind".to_owned(), "metric".to_owned()];
    header.extend(names.iter().cloned());
    let mut rows = Vec::new();
    for k in kinds {
        for metric in TABLE_METRICS {
            let mut row = vec![k.kind.as_str().to_owned(), metric.to_owned()];
            row.extend(table_cells(&k.per_class, metric));
            rows.push(row);
        }
    }
    files.push(csv_file("per_class.csv", meta, &header, &rows)?);
    files.push(json_file(
        "per_class.json",
        meta,
        json!({ "per_class": kinds_object(kinds.iter().map(|k| (k.kind.as_str().to_owned(), &k.per_class)))? }),
    )?);

    let mut header = vec!["truth\\predicted".to_owned()];
    header.extend(confusion.labels.iter().cloned());
    let rows: Vec<Vec<String>> = confusion
        .labels
        .iter()
        .zip(&confusion.cells)
        .map(|(label, row)| std::iter::once(label.clone()).chain(row.iter().map(u64::to_string)).collect())
        .collect();
    files.push(csv_file("confusion.csv", meta, &header, &rows)?);

    files.push(json_file(
        "pr_curves.json",
        meta,
        json!({ "curves": kinds_object(kinds.iter().map(|k| (k.kind.as_str().to_owned(), &k.curves)))? }),
    )?);

    files.push(OutputFile::new("report.md", markdown_report(meta, stats, kinds)));
    Ok(files)
}

fn md_row(cells: impl IntoIterator<Item = String>) -> String {
    let mut line = String::from("|");
    for c in cells {
        line.push(' ');
        line.push_str(&c);
        line.push_str(" |");
    }
    line.push('\n');
    line
}

fn md_table(header: &[String], rows: &[Vec<String>]) -> String {
    let mut out = md_row(header.iter().cloned());
    out += &md_row(header.iter().map(|_| "---".to_owned()));
    for r in rows {
        out += &md_row(r.iter().cloned());
    }
    out
}

fn markdown_report(meta: &RunMetadata, stats: &DataStats, kinds: &[KindEvaluation]) -> String {
    let mut out = String::new();
    out += "<!--\n";
    out += &meta.comment_lines();
    out += "-->\n\n# Evaluation report\n\n";
    out += &format!(
        "{} images, {} ground-truth instances, {} detections ({} without a mask).\n\n",
        stats.images, stats.ground_truth, stats.detections, stats.missing_masks
    );
    out += "## Summary\n\n";
    let header: Vec<String> = std::iter::once("Kind".to_owned())
        .chain(SUMMARY_COLUMNS.iter().map(|s| s.to_string()))
        .collect();
    let rows: Vec<Vec<String>> = kinds
        .iter()
        .map(|k| {
            std::iter::once(k.kind.as_str().to_owned())
                .chain(summary_row(&k.summary).into_iter().map(cell))
                .collect()
        })
        .collect();
    out += &md_table(&header, &rows);
    for k in kinds {
        let t = &k.per_class;
        out += &format!(
            "\n## Per class, {} (IoU {}, score {})\n\n",
            k.kind.as_str(),
            t.iou_threshold,
            t.score_threshold
        );
        let header: Vec<String> = std::iter::once("Metric".to_owned())
            .chain(t.rows.iter().map(|r| r.class.clone()))
            .collect();
        let rows: Vec<Vec<String>> = TABLE_METRICS
            .iter()
            .map(|m| std::iter::once(m.to_string()).chain(table_cells(t, m)).collect())
            .collect();
        out += &md_table(&header, &rows);
    }
    out
}

pub fn compare_files(
    meta: &RunMetadata,
    box_eval: &KindEvaluation,
    mask_eval: &KindEvaluation,
    gaps: &F1GapReport,
) -> Result<Vec<OutputFile>> {
    let header: Vec<String> = ["class_index", "class", "f1_box", "f1_mask", "gap", "flagged"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows: Vec<Vec<String>> = gaps
        .rows
        .iter()
        .map(|g| {
            vec![
                g.class_index.to_string(),
                g.class.clone(),
                cell(g.f1_box),
                cell(g.f1_mask),
                cell(g.gap),
                g.flagged.to_string(),
            ]
        })
        .collect();
    let diff: Vec<Option<f64>> = summary_row(&box_eval.summary)
        .iter()
        .zip(summary_row(&mask_eval.summary))
        .map(|(b, m)| b.zip(m).map(|(b, m)| b - m))
        .collect();
    let side_by_side: Map<String, Value> = SUMMARY_COLUMNS
        .iter()
        .enumerate()
        .map(|(i, name)| {
            (
                name.to_string(),
                json!({
                    "box": summary_row(&box_eval.summary)[i],
                    "mask": summary_row(&mask_eval.summary)[i],
                    "difference": diff[i],
                }),
            )
        })
        .collect();
    Ok(vec![
        csv_file("f1_gap.csv", meta, &header, &rows)?,
        json_file("f1_gap.json", meta, json!({ "f1_gap": gaps }))?,
        json_file(
            "compare_summary.json",
            meta,
            json!({
                "box": box_eval.summary,
                "mask": mask_eval.summary,
                "side_by_side": side_by_side,
            }),
        )?,
    ])
}

#[derive(Serialize)]
struct ClassifiedRecord<'a> {
    #[serde(flatten)]
    record: &'a DivergenceRecord,
    class: &'a str,
    mode: FailureMode,
}

pub fn diagnose_files(
    meta: &RunMetadata,
    class_names: &[String],
    records: &[DivergenceRecord],
    params: &DiagnoseParams,
    modes: &ModesSummary,
    correlation: std::result::Result<&ShapeCorrelation, String>,
) -> Result<Vec<OutputFile>> {
    let name = |c: usize| class_names.get(c).map_or("", String::as_str);
    let header: Vec<String> = [
        "image_id",
        "det",
        "gt",
        "class",
        "score",
        "box_iou",
        "mask_iou",
        "gt_mask_coverage",
        "pred_excess",
        "centroid_offset",
        "gt_area",
        "pred_area",
        "mode",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            vec![
                r.image_id.clone(),
                r.det.to_string(),
                r.gt.to_string(),
                name(r.class_index).to_owned(),
                fixed4(r.score),
                fixed4(r.box_iou),
                fixed4(r.mask_iou),
                fixed4(r.gt_mask_coverage),
                fixed4(r.pred_excess),
                cell(r.centroid_offset),
                r.gt_area.to_string(),
                r.pred_area.to_string(),
                classify_failure(r, params).as_str().to_owned(),
            ]
        })
        .collect();
    let classified: Vec<ClassifiedRecord> = records
        .iter()
        .map(|r| ClassifiedRecord {
            record: r,
            class: name(r.class_index),
            mode: classify_failure(r, params),
        })
        .collect();

    let mode_header: Vec<String> = ["class_index", "class"]
        .iter()
        .map(|s| s.to_string())
        .chain(FailureMode::ALL.iter().map(|m| m.as_str().to_owned()))
        .chain(std::iter::once("records".to_owned()))
        .collect();
    let mut mode_rows: Vec<Vec<String>> = modes
        .classes
        .iter()
        .map(|c| {
            let mut row = vec![c.class_index.to_string(), c.class.clone()];
            row.extend(FailureMode::ALL.iter().map(|m| c.counts[m].to_string()));
            row.push(c.counts.values().sum::<u64>().to_string());
            row
        })
        .collect();
    let mut total = vec![String::new(), "Total".to_owned()];
    total.extend(FailureMode::ALL.iter().map(|m| modes.total[m].to_string()));
    total.push(modes.total.values().sum::<u64>().to_string());
    mode_rows.push(total);

    let correlation = match correlation {
        Ok(c) => json!({ "status": "ok", "correlation": c }),
        Err(reason) => json!({ "status": "insufficient_data", "reason": reason }),
    };
    Ok(vec![
        csv_file("divergence.csv", meta, &header, &rows)?,
        json_file("divergence.json", meta, json!({ "params": params, "records": classified }))?,
        json_file("modes_summary.json", meta, json!({ "params": params, "modes": modes }))?,
        csv_file("modes_summary.csv", meta, &mode_header, &mode_rows)?,
        json_file("shape_correlation.json", meta, correlation)?,
    ])
}

pub fn dataset_files(
    meta: &RunMetadata,
    summary: &DatasetSummary,
    mismatches: Option<&[String]>,
) -> Result<Vec<OutputFile>> {
    let header: Vec<String> = ["class", "training", "validation", "testing", "total"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows: Vec<Vec<String>> = summary
        .classes
        .iter()
        .chain(std::iter::once(&summary.totals))
        .map(|c| {
            vec![
                c.class.clone(),
                c.training.to_string(),
                c.validation.to_string(),
                c.testing.to_string(),
                c.total.to_string(),
            ]
        })
        .collect();
    Ok(vec![
        json_file(
            "dataset_summary.json",
            meta,
            json!({ "summary": summary, "mismatches": mismatches }),
        )?,
        csv_file("dataset_summary.csv", meta, &header, &rows)?,
    ])
}
