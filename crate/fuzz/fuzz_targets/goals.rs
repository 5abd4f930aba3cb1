#![no_main]

use libfuzzer_sys::fuzz_target;
use proactiva_core::simulator::{parse_goals, split_sentinel};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = split_sentinel(text);
    if let Ok(goals) = parse_goals(text) {
        assert!(goals.iter().all(|g| g.validate().is_ok()));
    }
});
