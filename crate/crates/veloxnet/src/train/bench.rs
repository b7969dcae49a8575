//! Infer-mode throughput measurement on the local host.

use crate::accounting;
use crate::error::Result;
use crate::layers::Mode;
use crate::models::Model;
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::time::Instant;

#[derive(Clone, Debug, Serialize)]
pub struct BenchReport {
    pub model: String,
    pub precision: &'static str,
    pub host: String,
    pub batch: usize,
    pub iters: usize,
    pub warmup: usize,
    pub params: u64,
    pub macs_per_image: u64,
    /// Median over iterations of batch / wall time.
    pub images_per_second: f64,
    pub per_image_ms: f64,
}

pub fn bench(model: &mut Model<f32>, batch: usize, iters: usize, warmup: usize, seed: u64) -> Result<BenchReport> {
    let report = accounting::count(&model.graph);
    let (c, h, w) = model.graph.input_shape;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = Tensor::<f32>::from_fn(&[batch.max(1), c, h, w], |_| rng.gen_range(-1.0f32..1.0));
    // one train-mode pass primes batch-norm running statistics
    let _ = model.forward(&input, Mode::Train)?;
    for _ in 0..warmup {
        let _ = model.forward(&input, Mode::Infer)?;
    }
    let mut rates = Vec::with_capacity(iters.max(1));
    for _ in 0..iters.max(1) {
        let t0 = Instant::now();
        let _ = model.forward(&input, Mode::Infer)?;
        let dt = t0.elapsed().as_secs_f64();
        rates.push(batch.max(1) as f64 / dt);
    }
    rates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = rates[rates.len() / 2];
    Ok(BenchReport {
        model: report.model.clone(),
        precision: "f32",
        host: format!(
            "{} {} ({} cpus)",
            std::env::consts::OS,
            std::env::consts::ARCH,
            std::thread::available_parallelism().map_or(1, |n| n.get())
        ),
        batch: batch.max(1),
        iters: iters.max(1),
        warmup,
        params: report.total_params(),
        macs_per_image: report.total_macs(),
        images_per_second: median,
        per_image_ms: 1000.0 / median,
    })
}
