//! Adam optimization, the epoch loop with checkpoint-on-best-validation,
//! weighted precision/recall/F1 evaluation, and a throughput benchmark.

mod adam;
mod bench;
mod fit;
mod metrics;

pub use adam::{adam_update, AdamConfig, AdamState};
pub use bench::{bench, BenchReport};
pub use fit::{evaluate, fit, write_log_csv, EpochRow, FitConfig};
pub use metrics::{metrics_from_confusion, MetricsReport};
