use std::collections::HashSet;

use thiserror::Error;

use super::PathologyRow;
use crate::labels::PathologyLabel;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TableError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: {column} value {value} outside [0, {max}]")]
    OutOfRange {
        line: usize,
        column: &'static str,
        value: f64,
        max: f64,
    },
    #[error("line {line}: unknown pathology {name:?}")]
    UnknownLabel { line: usize, name: String },
    #[error("line {line}: duplicate row for {label}")]
    Duplicate { line: usize, label: String },
}

fn is_skippable(cells: &[&str]) -> bool {
    cells.is_empty()
        || cells[0].is_empty()
        || cells[0].starts_with('#')
        || cells[0].starts_with('\\')
        || cells[0].eq_ignore_ascii_case("pathology")
}

fn value(
    cell: &str,
    line: usize,
    column: &'static str,
    max: f64,
) -> Result<Option<f64>, TableError> {
    if cell.eq_ignore_ascii_case("na") || cell.is_empty() {
        return Ok(None);
    }
    let v: f64 = cell.parse().map_err(|_| TableError::Parse {
        line,
        reason: format!("{column} {cell:?} is not a number"),
    })?;
    if !(0.0..=max).contains(&v) {
        return Err(TableError::OutOfRange {
            line,
            column,
            value: v,
            max,
        });
    }
    Ok(Some(v))
}

/// Parses an externally reported per-pathology table. Each data line is
/// `name, AUC, precision %, recall %`, either comma separated or as a LaTeX
/// tabular row (`name & a & b & c \\`). Header, comment (`#`) and `\hline`
/// lines are skipped. AUC must lie in `[0, 1]` and percentages in `[0, 100]`.
pub fn parse_metric_table(text: &str) -> Result<Vec<PathologyRow>, TableError> {
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        let cells: Vec<&str> = if trimmed.contains('&') {
            trimmed.trim_end_matches("\\\\").split('&').map(str::trim).collect()
        } else {
            trimmed.split(',').map(str::trim).collect()
        };
        if is_skippable(&cells) {
            continue;
        }
        if cells.len() != 4 {
            return Err(TableError::Parse {
                line,
                reason: format!("expected 4 columns, found {}", cells.len()),
            });
        }
        let label = PathologyLabel::resolve(cells[0]).map_err(|_| TableError::UnknownLabel {
            line,
            name: cells[0].to_string(),
        })?;
        if !seen.insert(label) {
            return Err(TableError::Duplicate {
                line,
                label: label.name().to_string(),
            });
        }
        rows.push(PathologyRow {
            label,
            auc: value(cells[1], line, "AUC", 1.0)?,
            precision: value(cells[2], line, "precision", 100.0)?,
            recall: value(cells[3], line, "recall", 100.0)?,
        });
    }
    Ok(rows)
}
