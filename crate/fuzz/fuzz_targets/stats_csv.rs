//! Stats CSV parsing must never panic on arbitrary input.

#![no_main]

use libfuzzer_sys::fuzz_target;
use veloxnet::data::parse_stats_csv;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_stats_csv(text);
    }
});
