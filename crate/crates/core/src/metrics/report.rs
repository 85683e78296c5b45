use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{
    agreement_metrics, auc, confusion, match_detections, proportion_interval, subgroup_report,
    ConfusionCounts, Decision, Dimension, EvalConfig, EvalRecord, MetricError, SubgroupTable,
};
use crate::labels::PathologyLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Csv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(format!("unknown format {other:?}; expected csv or markdown")),
        }
    }
}

/// Per-pathology row. Precision and recall are percentages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathologyRow {
    pub label: PathologyLabel,
    pub auc: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

/// A proportion with its confidence interval, all as fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationSummary {
    pub counts: ConfusionCounts,
    pub auc: Option<f64>,
    pub ppv: Option<Estimate>,
    pub npv: Option<Estimate>,
    pub ppa: Option<Estimate>,
    pub npa: Option<Estimate>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub pathologies: Vec<PathologyRow>,
    pub classification: Option<ClassificationSummary>,
    pub subgroups: Vec<SubgroupTable>,
}

fn estimate(num: u64, den: u64, cfg: &EvalConfig) -> Option<Estimate> {
    let i = proportion_interval(cfg.interval, num, den, cfg.level).ok()?;
    Some(Estimate {
        value: num as f64 / den as f64,
        lower: i.lower,
        upper: i.upper,
    })
}

/// Summarises confusion counts with intervals for the four agreement metrics.
pub fn classification_summary(
    counts: ConfusionCounts,
    auc: Option<f64>,
    cfg: &EvalConfig,
) -> ClassificationSummary {
    let c = counts;
    ClassificationSummary {
        counts: c,
        auc,
        ppv: estimate(c.tp, c.tp + c.fp, cfg),
        npv: estimate(c.tn, c.tn + c.fn_, cfg),
        ppa: estimate(c.tp, c.tp + c.fn_, cfg),
        npa: estimate(c.tn, c.tn + c.fp, cfg),
    }
}

/// Full evaluation: classification block, one row per pathology that occurs
/// in either predictions or references, and all four subgroup tables.
pub fn evaluate(records: &[EvalRecord], cfg: &EvalConfig) -> Result<MetricReport, MetricError> {
    let counts = confusion(records, Decision::Abnormal)?;
    let scores: Vec<f64> = records.iter().map(|r| r.score).collect();
    let labels: Vec<bool> = records.iter().map(|r| r.reference == Decision::Abnormal).collect();
    let classification = Some(classification_summary(counts, auc(&scores, &labels).ok(), cfg));

    let present: BTreeSet<PathologyLabel> = records
        .iter()
        .flat_map(|r| {
            r.detections
                .iter()
                .map(|d| d.label)
                .chain(r.annotations.iter().map(|a| a.label))
        })
        .collect();
    let mut pathologies = Vec::new();
    for label in present {
        let mut c = ConfusionCounts::default();
        let mut study_scores = Vec::with_capacity(records.len());
        let mut study_truth = Vec::with_capacity(records.len());
        for r in records {
            let preds: Vec<_> = r.detections.iter().copied().filter(|d| d.label == label).collect();
            let refs: Vec<_> = r.annotations.iter().copied().filter(|a| a.label == label).collect();
            c = c + match_detections(&preds, &refs, cfg.iou_threshold);
            study_scores.push(preds.iter().map(|d| d.score).fold(0.0, f64::max));
            study_truth.push(!refs.is_empty());
        }
        let m = agreement_metrics(&c);
        pathologies.push(PathologyRow {
            label,
            auc: auc(&study_scores, &study_truth).ok(),
            precision: m.ppv.ok().map(|v| 100.0 * v),
            recall: m.ppa.ok().map(|v| 100.0 * v),
        });
    }
    let subgroups = Dimension::ALL.iter().map(|&d| subgroup_report(records, d)).collect();
    Ok(MetricReport {
        pathologies,
        classification,
        subgroups,
    })
}

fn fixed(v: Option<f64>, decimals: usize) -> String {
    match v {
        Some(x) => format!("{x:.decimals$}"),
        None => "NA".to_string(),
    }
}

fn csv_cell(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn render_rows(header: &[&str], rows: &[Vec<String>], format: ReportFormat) -> String {
    let mut out = String::new();
    match format {
        ReportFormat::Csv => {
            for line in std::iter::once(header.iter().map(|h| h.to_string()).collect::<Vec<_>>())
                .chain(rows.iter().cloned())
            {
                let cells: Vec<String> = line.iter().map(|c| csv_cell(c)).collect();
                let _ = writeln!(out, "{}", cells.join(","));
            }
        }
        ReportFormat::Markdown => {
            let _ = writeln!(out, "| {} |", header.join(" | "));
            let align: Vec<&str> = (0..header.len()).map(|i| if i == 0 { "---" } else { "---:" }).collect();
            let _ = writeln!(out, "| {} |", align.join(" | "));
            for r in rows {
                let cells: Vec<String> = r.iter().map(|c| c.replace('|', "\\|")).collect();
                let _ = writeln!(out, "| {} |", cells.join(" | "));
            }
        }
    }
    out
}

/// Pathology table: `Pathology, AUC, Precision (%), Recall (%)`, two decimals,
/// rows in canonical label order.
pub fn render_report(r: &MetricReport, format: ReportFormat) -> String {
    let mut rows: Vec<&PathologyRow> = r.pathologies.iter().collect();
    rows.sort_by_key(|p| p.label);
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|p| {
            vec![
                p.label.name().to_string(),
                fixed(p.auc, 2),
                fixed(p.precision, 2),
                fixed(p.recall, 2),
            ]
        })
        .collect();
    render_rows(&["Pathology", "AUC", "Precision (%)", "Recall (%)"], &cells, format)
}

/// Subgroup table with AUC to three decimals and percentages to one.
pub fn render_subgroup(t: &SubgroupTable, format: ReportFormat) -> String {
    let cells: Vec<Vec<String>> = t
        .rows
        .iter()
        .map(|r| {
            vec![
                r.group.clone(),
                fixed(r.auc, 3),
                fixed(r.accuracy, 1),
                fixed(r.precision, 1),
                fixed(r.recall, 1),
                fixed(r.sensitivity, 1),
                fixed(r.specificity, 1),
            ]
        })
        .collect();
    let header = [
        t.dimension.header(),
        "AUC",
        "Accuracy (%)",
        "Precision (%)",
        "Recall (%)",
        "Sensitivity (%)",
        "Specificity (%)",
    ];
    render_rows(&header, &cells, format)
}

/// Classification block: one row per agreement metric with its interval, in percent.
pub fn render_classification(c: &ClassificationSummary, format: ReportFormat) -> String {
    let pct = |v: Option<f64>| fixed(v.map(|x| 100.0 * x), 2);
    let mut cells: Vec<Vec<String>> = [("PPV", c.ppv), ("NPV", c.npv), ("PPA", c.ppa), ("NPA", c.npa)]
        .iter()
        .map(|(name, e)| {
            vec![
                name.to_string(),
                pct(e.map(|e| e.value)),
                pct(e.map(|e| e.lower)),
                pct(e.map(|e| e.upper)),
            ]
        })
        .collect();
    cells.push(vec!["AUC".into(), fixed(c.auc, 3), "NA".into(), "NA".into()]);
    render_rows(&["Metric", "Value", "CI Lower", "CI Upper"], &cells, format)
}
