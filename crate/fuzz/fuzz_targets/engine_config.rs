#![no_main]

use libfuzzer_sys::fuzz_target;
use proactiva_core::config::EngineConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = EngineConfig::from_toml_str(text) {
        assert!(config.validate().is_ok());
    }
});
