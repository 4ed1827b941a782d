#![no_main]

use libfuzzer_sys::fuzz_target;
use ncsde::io::{read_series_csv, read_table};

fuzz_target!(|data: &[u8]| {
    if let Ok(table) = read_table(data) {
        assert_eq!(table.header.len(), table.values.ncols());
    }
    if let Ok(ts) = read_series_csv(data) {
        assert_eq!(ts.labels().len(), ts.n_series());
    }
});
