//! Batch commands behind the `cxr` binary.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use cxr_core::backends::{BackendDescriptor, ModelBackend};
use cxr_core::metrics::{
    evaluate, parse_metric_table, render_classification, render_report, render_subgroup, subgroup_report,
    Dimension, EvalConfig, MetricReport, ReportFormat,
};
use cxr_core::pipeline::{Pipeline, PipelineConfig};
use cxr_core::records::{join_references, parse_ndjson, to_ndjson, ReferenceRecord, RunRecord};
use cxr_core::synth::{generate, FixtureBuilder, SynthConfig};
use thiserror::Error;

use crate::config::ServiceConfig;
use crate::service::Service;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {reason}")]
    Input { path: PathBuf, reason: String },
    #[error("{0}")]
    Failed(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(io_err(path))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

/// `*.dcm` files directly under `dir`, sorted by name.
pub fn list_studies(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("dcm")))
        .collect();
    files.sort();
    Ok(files)
}

/// Runs every study in `input` through the pipeline and returns one
/// record per file, in file-name order. Transient backend errors are
/// retried `attempts` times before the run is abandoned.
pub fn run_directory(
    input: &Path,
    cfg: &PipelineConfig,
    backend: &dyn ModelBackend,
    attempts: u32,
) -> Result<Vec<RunRecord>, CliError> {
    let pipeline = Pipeline::new(cfg.clone()).map_err(|e| CliError::Failed(e.to_string()))?;
    let mut out = Vec::new();
    for path in list_studies(input)? {
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let mut attempt = 0;
        let outcome = loop {
            attempt += 1;
            match pipeline.run(&bytes, backend) {
                Ok(o) => break o,
                Err(e) if e.is_retryable() && attempt < attempts => continue,
                Err(e) => {
                    return Err(CliError::Input {
                        path,
                        reason: e.to_string(),
                    })
                }
            }
        };
        let file = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        out.push(RunRecord {
            file,
            study: outcome.record,
            prediction: outcome.prediction,
        });
    }
    Ok(out)
}

pub fn run_command(
    input: &Path,
    backend: &BackendDescriptor,
    pipeline: &PipelineConfig,
    out: &Path,
) -> Result<usize, CliError> {
    let b = backend.build().map_err(|e| CliError::Failed(format!("backend: {e}")))?;
    let records = run_directory(input, pipeline, b.as_ref(), 3)?;
    write(out, &to_ndjson(&records))?;
    Ok(records.len())
}

/// Text of `evaluate`: the classification block and pathology table, or a
/// single subgroup table when `by` is given.
pub fn evaluate_command(
    predictions: &Path,
    references: &Path,
    by: Option<Dimension>,
    format: ReportFormat,
) -> Result<String, CliError> {
    let runs: Vec<RunRecord> = parse_ndjson(&read(predictions)?).map_err(|e| CliError::Input {
        path: predictions.to_path_buf(),
        reason: e.to_string(),
    })?;
    let refs: Vec<ReferenceRecord> = parse_ndjson(&read(references)?).map_err(|e| CliError::Input {
        path: references.to_path_buf(),
        reason: e.to_string(),
    })?;
    let joined = join_references(&runs, &refs);
    if !joined.unmatched.is_empty() {
        tracing::warn!(count = joined.unmatched.len(), "predicted studies without a reference read");
    }
    if let Some(d) = by {
        return Ok(render_subgroup(&subgroup_report(&joined.records, d), format));
    }
    let report: MetricReport = if joined.records.is_empty() {
        MetricReport::default()
    } else {
        evaluate(&joined.records, &EvalConfig::default()).map_err(|e| CliError::Failed(e.to_string()))?
    };
    let mut text = String::new();
    if let Some(c) = &report.classification {
        text.push_str(&render_classification(c, format));
        text.push('\n');
    }
    text.push_str(&render_report(&report, format));
    Ok(text)
}

/// Renders an external metric table (CSV or LaTeX rows) after range checks.
pub fn render_command(table: &Path, format: ReportFormat) -> Result<String, CliError> {
    let rows = parse_metric_table(&read(table)?).map_err(|e| CliError::Input {
        path: table.to_path_buf(),
        reason: e.to_string(),
    })?;
    Ok(render_report(
        &MetricReport {
            pathologies: rows,
            ..MetricReport::default()
        },
        format,
    ))
}

/// Writes `count` synthetic studies plus `fixture.ndjson` and
/// `references.ndjson` into `out`.
pub fn synth_command(out: &Path, count: usize, seed: u64, pipeline: &PipelineConfig) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let cfg = SynthConfig {
        seed,
        ..SynthConfig::default()
    };
    let studies = generate(&cfg, count);
    let p = Pipeline::new(pipeline.clone()).map_err(|e| CliError::Failed(e.to_string()))?;
    let fixture = FixtureBuilder::new(&p)
        .build(&studies)
        .map_err(|e| CliError::Failed(e.to_string()))?;
    for s in &studies {
        let path = out.join(&s.file_name);
        fs::write(&path, &s.bytes).map_err(io_err(&path))?;
    }
    write(&out.join("fixture.ndjson"), &fixture.fixture_ndjson())?;
    write(&out.join("references.ndjson"), &fixture.references_ndjson())?;
    Ok(())
}

/// Labeled dataset of every reviewed study in a service data directory.
pub fn export_command(cfg: ServiceConfig, out: &Path) -> Result<usize, CliError> {
    let (svc, _queue) = Service::open(cfg).map_err(|e| CliError::Failed(e.to_string()))?;
    let rows = svc.export();
    write(out, &to_ndjson(&rows))?;
    Ok(rows.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_rejects_out_of_range_tables() {
        let dir = tempfile::tempdir().unwrap();
        let ok = dir.path().join("ok.csv");
        fs::write(&ok, "Pathology,AUC,Precision,Recall\nAtelectasis,0.98,99.40,97.40\n").unwrap();
        assert_eq!(
            render_command(&ok, ReportFormat::Csv).unwrap(),
            "Pathology,AUC,Precision (%),Recall (%)\nAtelectasis,0.98,99.40,97.40\n"
        );
        let bad = dir.path().join("bad.csv");
        fs::write(&bad, "Tuberculosis,0.97,99.10,100.35\n").unwrap();
        assert!(render_command(&bad, ReportFormat::Csv).is_err());
    }

    #[test]
    fn studies_are_listed_in_name_order() {
        let dir = tempfile::tempdir().unwrap();
        for n in ["b.dcm", "a.DCM", "c.txt"] {
            fs::write(dir.path().join(n), b"x").unwrap();
        }
        let names: Vec<String> = list_studies(dir.path())
            .unwrap()
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(names, ["a.DCM", "b.dcm"]);
    }
}
