#![no_main]

use cxr_core::segmentation::Rle;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(rle) = serde_json::from_slice::<Rle>(data) else { return };
    if let Ok(mask) = rle.decode() {
        // Decoding then encoding canonicalises; the canonical form is a fixed point.
        let canon = mask.to_rle();
        assert_eq!(canon.decode().unwrap(), mask);
    }
});
