#![no_main]

use libfuzzer_sys::fuzz_target;
use ncsde::config::ModelConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = ModelConfig::from_json(text) {
        // Accepted configs survive a serde round trip.
        let again = serde_json::to_string(&config).unwrap();
        assert_eq!(ModelConfig::from_json(&again).unwrap(), config);
    }
});
