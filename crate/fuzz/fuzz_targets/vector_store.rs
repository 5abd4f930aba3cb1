#![no_main]

use libfuzzer_sys::fuzz_target;
use proactiva_core::embedding::VectorStore;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(store) = VectorStore::from_json_str(text) {
        let back = VectorStore::from_json_str(&store.to_json_string()).expect("dump reloads");
        assert_eq!(back.len(), store.len());
    }
});
