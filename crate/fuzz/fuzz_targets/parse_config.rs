#![no_main]

use libfuzzer_sys::fuzz_target;
use micropol_core::config::parse_config;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Err(e) = parse_config(text) {
            assert!(!e.issues.is_empty());
            let _ = e.to_string();
        }
    }
});
