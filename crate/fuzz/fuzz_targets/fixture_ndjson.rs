#![no_main]

use cxr_core::backends::{FixtureBackend, FixtureRecord};
use cxr_core::records::parse_ndjson;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = parse_ndjson::<FixtureRecord>(text);
    let _ = FixtureBackend::from_ndjson("fuzz", text);
});
