#![no_main]

use cxr_core::ingest::{parse_dicom, to_eight_bit, Anonymizer};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok((meta, raw)) = parse_dicom(data) {
        let _ = Anonymizer::new(b"fuzz".to_vec()).anonymize(&meta);
        if let Ok(img) = to_eight_bit(&raw) {
            assert_eq!(img.pixels().len(), raw.width() * raw.height());
        }
    }
});
