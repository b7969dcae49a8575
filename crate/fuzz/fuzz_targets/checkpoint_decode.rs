//! Checkpoint decoding must never panic; accepted inputs must re-encode
//! byte-identically.

#![no_main]

use libfuzzer_sys::fuzz_target;
use veloxnet::data::Checkpoint;

fuzz_target!(|data: &[u8]| {
    if let Ok(ckpt) = Checkpoint::from_bytes(data) {
        assert_eq!(ckpt.to_bytes(), data, "checkpoint roundtrip not canonical");
    }
});
