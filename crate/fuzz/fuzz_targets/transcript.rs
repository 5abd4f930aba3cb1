#![no_main]

use libfuzzer_sys::fuzz_target;
use proactiva_core::dialogue::{parse_rendered, Transcript};
use proactiva_core::react::TraceRecord;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = parse_rendered(text);
    let _ = TraceRecord::from_json_line(text);
    if let Ok(t) = Transcript::from_json_str(text) {
        assert_eq!(Transcript::from_json_str(&t.to_json_string()).expect("round trip"), t);
    }
});
