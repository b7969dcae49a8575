//! File formats, dataset manifests, augmentation, batching and the
//! synthetic dataset generator.
//!
//! All on-disk formats are fixed little-endian regardless of host and
//! roundtrip bit-exactly. Parsers never panic on malformed input: every
//! failure is a data error carrying the byte offset (binary formats) or the
//! line number (CSV formats).

mod augment;
mod batches;
mod checkpoint;
mod manifest;
mod synth;
mod tensor_file;

pub use augment::{augment, flip_horizontal, AugmentMode, CROP_SIZE};
pub use batches::{batches, BatchStream};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use manifest::{
    parse_manifest_csv, parse_stats_csv, ChannelStats, Manifest, ManifestEntry, Split,
};
pub use synth::synth_dataset;
pub use tensor_file::{
    load_tensor, read_tensor_bytes, save_tensor, write_tensor_bytes, AnyTensor,
};
