//! Manifest CSV parsing must never panic; parsing is idempotent through a
//! print/parse cycle.

#![no_main]

use libfuzzer_sys::fuzz_target;
use veloxnet::data::parse_manifest_csv;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(entries) = parse_manifest_csv(text) {
        let mut printed = String::from("path,label,split\n");
        for e in &entries {
            printed.push_str(&format!("{},{},{}\n", e.path, e.label, e.split.as_str()));
        }
        let reparsed = parse_manifest_csv(&printed).expect("printed manifest must parse");
        assert_eq!(reparsed, entries, "manifest parse not idempotent");
    }
});
