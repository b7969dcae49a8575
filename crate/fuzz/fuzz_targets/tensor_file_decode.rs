//! Tensor file decoding must never panic, and every accepted input must
//! re-encode to exactly the bytes it was decoded from (the format is
//! canonical).

#![no_main]

use libfuzzer_sys::fuzz_target;
use veloxnet::data::{read_tensor_bytes, write_tensor_bytes, AnyTensor};

fuzz_target!(|data: &[u8]| {
    if let Ok(tensor) = read_tensor_bytes(data) {
        let encoded = match &tensor {
            AnyTensor::F32(t) => write_tensor_bytes(t),
            AnyTensor::F64(t) => write_tensor_bytes(t),
        };
        assert_eq!(encoded, data, "decode/encode roundtrip not canonical");
    }
});
