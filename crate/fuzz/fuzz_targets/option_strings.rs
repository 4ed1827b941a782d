#![no_main]

use libfuzzer_sys::fuzz_target;
use ncsde::baselines::EstimatorKind;
use ncsde::config::PenaltySpec;
use ncsde::engine::LambdaMode;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = text.parse::<PenaltySpec>();
    let _ = text.parse::<LambdaMode>();
    if let Ok(kind) = text.parse::<EstimatorKind>() {
        assert_eq!(kind.to_string().parse::<EstimatorKind>().unwrap(), kind);
    }
});
