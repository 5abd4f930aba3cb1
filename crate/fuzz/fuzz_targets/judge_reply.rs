#![no_main]

use libfuzzer_sys::fuzz_target;
use proactiva_core::proactivity::parse_judge_reply;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(score) = parse_judge_reply(text) {
        assert!(score.value <= 5);
    }
});
