#![no_main]

use cxr_core::metrics::{evaluate, EvalConfig, EvalRecord};
use cxr_core::records::{join_references, parse_ndjson, ReferenceRecord, RunRecord};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(records) = parse_ndjson::<EvalRecord>(text) {
        let _ = evaluate(&records, &EvalConfig::default());
    }
    let runs = parse_ndjson::<RunRecord>(text).unwrap_or_default();
    let refs = parse_ndjson::<ReferenceRecord>(text).unwrap_or_default();
    let joined = join_references(&runs, &refs);
    let _ = evaluate(&joined.records, &EvalConfig::default());
});
