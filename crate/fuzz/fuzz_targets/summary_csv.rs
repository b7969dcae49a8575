//! Cost-report CSV parsing must never panic; emit/parse is a lossless
//! roundtrip for every accepted input.

#![no_main]

use libfuzzer_sys::fuzz_target;
use veloxnet::accounting::CostReport;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(report) = CostReport::from_csv("fuzz", text) {
        let reparsed = CostReport::from_csv("fuzz", &report.to_csv()).expect("emitted CSV parses");
        assert_eq!(reparsed, report, "cost report roundtrip mismatch");
    }
});
