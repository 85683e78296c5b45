#![no_main]

use cxr_core::metrics::{parse_metric_table, render_report, MetricReport, ReportFormat};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(rows) = parse_metric_table(text) {
        let report = MetricReport {
            pathologies: rows,
            ..MetricReport::default()
        };
        let csv = render_report(&report, ReportFormat::Csv);
        assert_eq!(csv.lines().count(), report.pathologies.len() + 1);
    }
});
