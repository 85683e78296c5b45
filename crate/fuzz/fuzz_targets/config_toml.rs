#![no_main]

use cxr_service::ServiceConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ServiceConfig::from_toml(text) {
        let _ = cfg.validate();
    }
});
