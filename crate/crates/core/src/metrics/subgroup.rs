use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{accuracy, agreement_metrics, auc, confusion, Decision, EvalRecord};
use crate::ingest::{AgeBand, MachineType, Manufacturer, Sex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Age,
    Gender,
    Machine,
    Manufacturer,
}

impl Dimension {
    pub const ALL: [Dimension; 4] = [
        Dimension::Age,
        Dimension::Gender,
        Dimension::Machine,
        Dimension::Manufacturer,
    ];

    /// Leading column header of the rendered table.
    pub fn header(self) -> &'static str {
        match self {
            Dimension::Age => "Age Group",
            Dimension::Gender => "Gender",
            Dimension::Machine => "Machine Type",
            Dimension::Manufacturer => "Manufacturer",
        }
    }

    /// Every group label in display order.
    pub fn groups(self) -> Vec<&'static str> {
        match self {
            Dimension::Age => AgeBand::ALL.iter().map(|b| b.label()).collect(),
            Dimension::Gender => [Sex::Male, Sex::Female, Sex::Unknown].iter().map(|s| s.label()).collect(),
            Dimension::Machine => [MachineType::CR, MachineType::DR, MachineType::Unknown]
                .iter()
                .map(|m| m.label())
                .collect(),
            Dimension::Manufacturer => [
                Manufacturer::GEHealthcare,
                Manufacturer::Siemens,
                Manufacturer::Philips,
                Manufacturer::Other,
            ]
            .iter()
            .map(|m| m.label())
            .collect(),
        }
    }

    pub fn group_of(self, r: &EvalRecord) -> Option<&'static str> {
        match self {
            Dimension::Age => r.age_band.map(AgeBand::label),
            Dimension::Gender => r.sex.map(Sex::label),
            Dimension::Machine => r.machine_type.map(MachineType::label),
            Dimension::Manufacturer => r.manufacturer.map(Manufacturer::label),
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dimension::Age => "age",
            Dimension::Gender => "gender",
            Dimension::Machine => "machine",
            Dimension::Manufacturer => "manufacturer",
        })
    }
}

impl FromStr for Dimension {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "age" => Ok(Dimension::Age),
            "gender" | "sex" => Ok(Dimension::Gender),
            "machine" => Ok(Dimension::Machine),
            "manufacturer" => Ok(Dimension::Manufacturer),
            other => Err(format!(
                "unknown dimension {other:?}; expected age, gender, machine or manufacturer"
            )),
        }
    }
}

/// Percentages in `[0, 100]`; `None` where the metric is undefined for the group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupRow {
    pub group: String,
    pub n: usize,
    pub auc: Option<f64>,
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupTable {
    pub dimension: Dimension,
    pub rows: Vec<SubgroupRow>,
    /// Groups left out of `rows`, with the reason.
    pub notices: Vec<String>,
}

fn row_for(group: &str, recs: &[EvalRecord]) -> SubgroupRow {
    let pct = |v: Result<f64, _>| v.ok().map(|x: f64| 100.0 * x);
    let (counts, m) = match confusion(recs, Decision::Abnormal) {
        Ok(c) => (Some(c), Some(agreement_metrics(&c))),
        Err(_) => (None, None),
    };
    let scores: Vec<f64> = recs.iter().map(|r| r.score).collect();
    let labels: Vec<bool> = recs.iter().map(|r| r.reference == Decision::Abnormal).collect();
    SubgroupRow {
        group: group.to_string(),
        n: recs.len(),
        auc: auc(&scores, &labels).ok(),
        accuracy: counts.and_then(|c| pct(accuracy(&c))),
        precision: m.as_ref().and_then(|m| pct(m.ppv.clone())),
        recall: m.as_ref().and_then(|m| pct(m.ppa.clone())),
        sensitivity: m.as_ref().and_then(|m| pct(m.ppa.clone())),
        specificity: m.as_ref().and_then(|m| pct(m.npa.clone())),
    }
}

/// One row per group value present in `records`; absent groups and records
/// lacking the attribute are reported in `notices`.
pub fn subgroup_report(records: &[EvalRecord], dimension: Dimension) -> SubgroupTable {
    let mut rows = Vec::new();
    let mut notices = Vec::new();
    for group in dimension.groups() {
        let subset: Vec<EvalRecord> = records
            .iter()
            .filter(|r| dimension.group_of(r) == Some(group))
            .cloned()
            .collect();
        if subset.is_empty() {
            notices.push(format!("{group}: no records"));
        } else {
            rows.push(row_for(group, &subset));
        }
    }
    let missing = records.iter().filter(|r| dimension.group_of(r).is_none()).count();
    if missing > 0 {
        notices.push(format!("{missing} record(s) lack the {dimension} attribute"));
    }
    SubgroupTable {
        dimension,
        rows,
        notices,
    }
}
