use cxr_core::metrics::{parse_metric_table, render_report, MetricReport, ReportFormat, TableError};
use cxr_core::PathologyLabel;

const TRIAL: &str = include_str!("data/pathology_metrics_trial.tex");
const DEPLOYMENT: &str = include_str!("data/pathology_metrics_deployment.tex");

/// Splits a raw tabular row into its four cells, independently of the parser.
fn cells(line: &str) -> Vec<String> {
    line.trim()
        .trim_end_matches('\\')
        .split('&')
        .map(|c| c.trim().to_string())
        .collect()
}

#[test]
fn trial_table_rows_render_exactly() {
    let rows = parse_metric_table(TRIAL).unwrap();
    assert_eq!(rows.len(), 75);
    let csv = render_report(
        &MetricReport {
            pathologies: rows,
            ..Default::default()
        },
        ReportFormat::Csv,
    );
    let rendered: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rendered.len(), 75);
    for line in TRIAL.lines().filter(|l| l.contains('&')) {
        let c = cells(line);
        let name = PathologyLabel::resolve(&c[0]).unwrap().name();
        let expected = format!("{name},{},{},{}", c[1], c[2], c[3]);
        assert!(rendered.contains(&expected.as_str()), "missing {expected}");
    }
    assert!(rendered.contains(&"Atelectasis,0.98,99.40,97.40"));
    // Canonical order: every label appears once, in index order.
    let order: Vec<usize> = rendered
        .iter()
        .map(|l| PathologyLabel::resolve(l.split(',').next().unwrap()).unwrap().index())
        .collect();
    assert!(order.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn deployment_table_rejects_every_value_above_100() {
    assert!(matches!(parse_metric_table(DEPLOYMENT), Err(TableError::OutOfRange { .. })));
    let mut rejected = Vec::new();
    let mut accepted = 0;
    for line in DEPLOYMENT.lines().filter(|l| l.contains('&')) {
        match parse_metric_table(line) {
            Ok(rows) => accepted += rows.len(),
            Err(TableError::OutOfRange { column, value, .. }) => {
                rejected.push((cells(line)[0].clone(), column, value));
            }
            Err(e) => panic!("unexpected {e}"),
        }
    }
    assert_eq!(accepted, 72);
    assert_eq!(
        rejected,
        [
            ("Flattened Diaphragm".to_string(), "recall", 100.38),
            ("Old Rib Fracture".to_string(), "precision", 100.38),
            ("Tuberculosis".to_string(), "recall", 100.35),
        ]
    );
}

#[test]
fn markdown_rendering_of_parsed_rows() {
    let rows = parse_metric_table("Old TB & 0.99 & 98.48 & 97.00 \\\\").unwrap();
    let md = render_report(
        &MetricReport {
            pathologies: rows,
            ..Default::default()
        },
        ReportFormat::Markdown,
    );
    assert_eq!(
        md,
        "| Pathology | AUC | Precision (%) | Recall (%) |\n| --- | ---: | ---: | ---: |\n| Old Tuberculosis | 0.99 | 98.48 | 97.00 |\n"
    );
}
