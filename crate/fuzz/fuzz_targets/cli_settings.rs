#![no_main]

// The CLI is a binary crate, so its parsing modules are compiled in directly.
#[allow(dead_code)]
#[path = "../../crates/cli/src/args.rs"]
mod args;
#[allow(dead_code)]
#[path = "../../crates/cli/src/error.rs"]
mod error;
#[allow(dead_code)]
#[path = "../../crates/cli/src/settings.rs"]
mod settings;

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = serde_json::from_slice::<settings::Settings>(data);
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cells) = args::parse_cells(text) {
        assert_eq!(cells.len(), text.split(',').count());
    }
    let _ = text.parse::<args::KChoice>();
});
