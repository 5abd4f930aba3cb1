#![no_main]

use libfuzzer_sys::fuzz_target;
use proactiva_core::react::{parse_step, render_step};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(step) = parse_step(text) {
        // Anything that parses must survive a render and parse again unchanged.
        let again = parse_step(&render_step(&step.thought, &step.action)).expect("rendered step parses");
        assert_eq!(again, step);
    }
});
