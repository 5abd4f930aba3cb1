#![no_main]

use libfuzzer_sys::fuzz_target;
use proactiva_core::llm::Script;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(script) = Script::from_json_str(text) {
        assert_eq!(Script::from_json_str(&script.to_json_string()).expect("round trip"), script);
    }
});
