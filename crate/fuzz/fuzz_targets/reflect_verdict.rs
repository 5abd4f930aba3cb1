#![no_main]

use libfuzzer_sys::fuzz_target;
use proactiva_core::react::{parse_verdict, Verdict};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Verdict::No { correction: Some(c) } = parse_verdict(text) {
        assert!(!c.trim().is_empty());
    }
});
