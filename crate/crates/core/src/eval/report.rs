use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::benchmark::EvalReport;
use crate::classify::ClassifierKind;
use crate::error::{Error, Result};

/// One CSV row per report.
#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    model: &'a str,
    classifier: &'a str,
    feature_dims: usize,
    n_train: usize,
    n_validation: usize,
    n_test: usize,
    macro_precision: f64,
    macro_recall: f64,
    macro_f_score: f64,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

/// Full reports (scores, per-class table, confusion matrices) as JSON.
pub fn write_reports_json(path: &Path, reports: &[EvalReport]) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, reports)?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn write_reports_csv(path: &Path, reports: &[EvalReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let csv_err = |e: csv::Error| Error::Format(format!("{}: {e}", path.display()));
    for r in reports {
        w.serialize(CsvRow {
            model: r.model.as_str(),
            classifier: r.classifier_name(),
            feature_dims: r.feature_dims,
            n_train: r.n_train,
            n_validation: r.n_validation,
            n_test: r.n_test,
            macro_precision: r.macro_precision,
            macro_recall: r.macro_recall,
            macro_f_score: r.macro_f_score,
        })
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Runtime per report; separate because timings differ between runs.
pub fn write_timings_csv(path: &Path, reports: &[EvalReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let csv_err = |e: csv::Error| Error::Format(format!("{}: {e}", path.display()));
    w.write_record(["model", "classifier", "runtime_seconds"]).map_err(csv_err)?;
    for r in reports {
        w.write_record([r.model.as_str(), r.classifier_name(), &format!("{:.3}", r.runtime_seconds)])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Models as rows, classifiers as columns, macro F-scores as cells.
/// End-to-end models fill a separate column.
pub fn summary_table(reports: &[EvalReport]) -> String {
    let mut models = Vec::new();
    for r in reports {
        if !models.contains(&r.model) {
            models.push(r.model);
        }
    }
    let mut columns: Vec<Option<ClassifierKind>> = ClassifierKind::ALL
        .into_iter()
        .filter(|c| reports.iter().any(|r| r.classifier == Some(*c)))
        .map(Some)
        .collect();
    if reports.iter().any(|r| r.classifier.is_none()) {
        columns.push(None);
    }
    let header = |c: &Option<ClassifierKind>| c.map_or("end_to_end", |k| k.as_str()).to_uppercase();
    let width = 18usize;
    let mut out = format!("{:<width$}", "model");
    for c in &columns {
        out.push_str(&format!("{:>11}", header(c)));
    }
    out.push('\n');
    for m in models {
        out.push_str(&format!("{:<width$}", m.as_str()));
        for c in &columns {
            match reports.iter().find(|r| r.model == m && r.classifier == *c) {
                Some(r) => out.push_str(&format!("{:>11.3}", r.macro_f_score)),
                None => out.push_str(&format!("{:>11}", "-")),
            }
        }
        out.push('\n');
    }
    out
}
