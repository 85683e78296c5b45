#![no_main]

use cxr_service::journal::parse_log;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let text = String::from_utf8_lossy(data);
    if let Ok((lines, valid)) = parse_log(&text) {
        assert!(valid <= text.len());
        // The accepted prefix parses to the same lines on its own.
        let (again, end) = parse_log(&text[..valid]).unwrap();
        assert_eq!(again, lines);
        assert_eq!(end, valid);
    }
});
