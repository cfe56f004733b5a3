use std::path::{Path, PathBuf};

use super::pipeline::{BranchReport, EvaluationReport};
use crate::error::{Error, Result};

pub fn report_json(report: &EvaluationReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

/// The report as JSON with the timestamp removed, for reproducibility checks.
pub fn report_without_timestamp(json: &str) -> Result<serde_json::Value> {
    let mut v: serde_json::Value = serde_json::from_str(json)?;
    if let Some(obj) = v.as_object_mut() {
        obj.remove("generated_at_unix");
    }
    Ok(v)
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf> {
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn predictions_csv(b: &BranchReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["segment", "subject", "task", "label", "score", "predicted"])?;
    for p in &b.predictions {
        w.write_record([
            p.segment.to_string(),
            p.subject.to_string(),
            p.task.to_string(),
            p.label.to_string(),
            p.score.to_string(),
            p.predicted.to_string(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| Error::invalid(e.to_string()))?).expect("csv is utf-8"))
}

fn roc_csv(b: &BranchReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["threshold", "fpr", "tpr"])?;
    for p in &b.metrics.roc {
        w.write_record([p.threshold.map_or("inf".to_string(), |t| t.to_string()), p.fpr.to_string(), p.tpr.to_string()])?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| Error::invalid(e.to_string()))?).expect("csv is utf-8"))
}

/// Writes `report.json` plus per-branch prediction and ROC CSVs (or
/// `sweep.csv`) into `dir`, returning the files written.
pub fn write_outputs(report: &EvaluationReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for (name, branch) in [("classical", &report.classical), ("cnn", &report.cnn)] {
        if let Some(b) = branch {
            written.push(write(dir.join(format!("predictions_{name}.csv")), &predictions_csv(b)?)?);
            written.push(write(dir.join(format!("roc_{name}.csv")), &roc_csv(b)?)?);
        }
    }
    if let Some(s) = &report.sweep {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["m", "auc", "accuracy"])?;
        for p in &s.points {
            w.write_record([p.m.to_string(), p.auc.map_or(String::new(), |a| a.to_string()), p.accuracy.to_string()])?;
        }
        let text = String::from_utf8(w.into_inner().map_err(|e| Error::invalid(e.to_string()))?).expect("utf-8");
        written.push(write(dir.join("sweep.csv"), &text)?);
    }
    // the report goes last so its presence means every artifact is complete
    written.push(write(dir.join("report.json"), &report_json(report)?)?);
    Ok(written)
}
