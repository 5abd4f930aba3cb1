#![no_main]

use libfuzzer_sys::fuzz_target;
use proactiva_core::rewriter::{clean_completion, parse_bank};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = parse_bank(text);
    if let Some(cleaned) = clean_completion(text) {
        assert!(!cleaned.trim().is_empty());
    }
});
