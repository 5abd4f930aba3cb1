#![no_main]

use libfuzzer_sys::fuzz_target;
use proactiva_core::knowledge::{parse_flattened, KnowledgeBase};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = parse_flattened(text);
    if let Ok(kb) = KnowledgeBase::from_json_str(text, None) {
        for i in 0..kb.rows.len() {
            let entry = kb.flatten_row(i).expect("validated rows flatten");
            assert!(!entry.flattened_text.is_empty());
        }
    }
});
