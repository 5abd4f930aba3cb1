#![no_main]

use libfuzzer_sys::fuzz_target;
use proactiva_core::eval::{render_report, EvalReport};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(report) = EvalReport::from_json_str(text) {
        let _ = render_report(&report);
    }
});
