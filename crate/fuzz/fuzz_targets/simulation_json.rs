#![no_main]

use libfuzzer_sys::fuzz_target;
use ncsde::engine::FitResult;
use ncsde::simulate::{ArModel, MixtureDesign, StudyConfig, StudyReport};

fuzz_target!(|data: &[u8]| {
    let _ = serde_json::from_slice::<ArModel>(data);
    let _ = serde_json::from_slice::<MixtureDesign>(data);
    let _ = serde_json::from_slice::<StudyConfig>(data);
    let _ = serde_json::from_slice::<StudyReport>(data);
    // Persisted fits are read back through this decoder.
    let _ = serde_json::from_slice::<FitResult>(data);
});
