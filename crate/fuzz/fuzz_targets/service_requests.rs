#![no_main]

use libfuzzer_sys::fuzz_target;
use ncsde_service::types::{CompareRequest, FitRequest, SimulateRequest};

fuzz_target!(|data: &[u8]| {
    let _ = serde_json::from_slice::<SimulateRequest>(data);
    let _ = serde_json::from_slice::<FitRequest>(data);
    let _ = serde_json::from_slice::<CompareRequest>(data);
    let _ = ncsde_service::decode_index(data);
});
