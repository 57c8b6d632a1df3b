#![no_main]

use libfuzzer_sys::fuzz_target;
use micropol_core::snapshot::{decode, encode};

fuzz_target!(|data: &[u8]| {
    if let Ok(state) = decode(data) {
        // anything accepted must re-encode to the same bytes
        assert_eq!(encode(&state), data);
    }
});
