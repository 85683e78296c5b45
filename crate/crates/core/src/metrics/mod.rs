//! Evaluation: agreement metrics with confidence intervals, rank AUC,
//! IoU-matched detection scoring, subgroup stratification, table rendering
//! and parsing of externally reported metric tables.

mod auc;
mod confusion;
mod interval;
mod matching;
mod report;
mod subgroup;
mod table;

pub use auc::auc;
pub use confusion::{accuracy, agreement_metrics, confusion, AgreementMetrics, ConfusionCounts};
pub use interval::{
    clopper_pearson_interval, proportion_interval, wilson_interval, Interval, IntervalMethod,
};
pub use matching::{match_detections, Annotation};
pub use report::{
    classification_summary, evaluate, render_classification, render_report, render_subgroup,
    ClassificationSummary,
    Estimate, MetricReport, PathologyRow, ReportFormat,
};
pub use subgroup::{subgroup_report, Dimension, SubgroupRow, SubgroupTable};
pub use table::{parse_metric_table, TableError};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::Detection;
use crate::ingest::{AgeBand, MachineType, Manufacturer, Sex};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("no records to evaluate")]
    EmptyInput,
    #[error("{0} is undefined: zero denominator")]
    UndefinedMetric(&'static str),
    #[error("interval requested for zero trials")]
    ZeroSample,
    #[error("{successes} successes out of {n} trials")]
    InvalidCount { successes: u64, n: u64 },
    #[error("confidence level {0} outside (0, 1)")]
    InvalidLevel(f64),
    #[error("AUC needs both classes present")]
    SingleClass,
    #[error("{0} scores but {1} labels")]
    LengthMismatch(usize, usize),
    #[error("scores must not be NaN")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    Normal,
    Abnormal,
}

impl Decision {
    pub fn flip(self) -> Self {
        match self {
            Decision::Normal => Decision::Abnormal,
            Decision::Abnormal => Decision::Normal,
        }
    }
}

/// One study's prediction paired with its reference read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub study_id: String,
    pub predicted: Decision,
    /// Abnormal probability.
    pub score: f64,
    pub reference: Decision,
    #[serde(default)]
    pub detections: Vec<Detection>,
    #[serde(default)]
    pub annotations: Vec<Annotation>,
    #[serde(default)]
    pub age_band: Option<AgeBand>,
    #[serde(default)]
    pub sex: Option<Sex>,
    #[serde(default)]
    pub manufacturer: Option<Manufacturer>,
    #[serde(default)]
    pub machine_type: Option<MachineType>,
}

impl EvalRecord {
    pub fn new(study_id: &str, predicted: Decision, score: f64, reference: Decision) -> Self {
        Self {
            study_id: study_id.to_string(),
            predicted,
            score,
            reference,
            detections: Vec::new(),
            annotations: Vec::new(),
            age_band: None,
            sex: None,
            manufacturer: None,
            machine_type: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    pub interval: IntervalMethod,
    pub level: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            interval: IntervalMethod::Wilson,
            level: 0.95,
        }
    }
}
