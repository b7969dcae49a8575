//! Property tests mirroring the fuzz targets: the binary and CSV parsers
//! must reject malformed input with errors, never panics, and accepted
//! inputs must roundtrip.

use proptest::prelude::*;
use veloxnet::accounting::CostReport;
use veloxnet::data::{
    parse_manifest_csv, parse_stats_csv, read_tensor_bytes, write_tensor_bytes, AnyTensor,
    Checkpoint,
};
use veloxnet::tensor::Tensor;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn tensor_decoder_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
        if let Ok(t) = read_tensor_bytes(&bytes) {
            let encoded = match &t {
                AnyTensor::F32(t) => write_tensor_bytes(t),
                AnyTensor::F64(t) => write_tensor_bytes(t),
            };
            prop_assert_eq!(encoded, bytes);
        }
    }

    #[test]
    fn mutated_valid_tensor_never_panics(
        flip_at in 0usize..64,
        flip_to in any::<u8>(),
        truncate_to in 0usize..64,
    ) {
        let t = Tensor::<f32>::from_fn(&[2, 5], |i| i as f32);
        let mut bytes = write_tensor_bytes(&t);
        if flip_at < bytes.len() {
            bytes[flip_at] = flip_to;
        }
        let _ = read_tensor_bytes(&bytes);
        bytes.truncate(truncate_to.min(bytes.len()));
        let _ = read_tensor_bytes(&bytes);
    }

    #[test]
    fn checkpoint_decoder_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..512)) {
        if let Ok(c) = Checkpoint::from_bytes(&bytes) {
            prop_assert_eq!(c.to_bytes(), bytes);
        }
    }

    #[test]
    fn csv_parsers_never_panic(text in "\\PC*") {
        let _ = parse_manifest_csv(&text);
        let _ = parse_stats_csv(&text);
        let _ = CostReport::from_csv("p", &text);
    }

    #[test]
    fn manifest_accepts_only_wellformed_rows(
        label in 0usize..10,
        split_idx in 0usize..3,
        path in "[a-z0-9_./-]{1,24}",
    ) {
        let split = ["train", "val", "test"][split_idx];
        let text = format!("path,label,split\n{path},{label},{split}\n");
        let entries = parse_manifest_csv(&text).unwrap();
        prop_assert_eq!(entries.len(), 1);
        prop_assert_eq!(entries[0].label, label);
    }
}
