//! Crop / flip / normalize augmentation: 3×256×256 samples in, 3×224×224
//! model inputs out.

use super::manifest::ChannelStats;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rand::Rng;

pub const CROP_SIZE: usize = 224;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AugmentMode {
    /// Uniform random crop + horizontal flip with probability 0.5.
    Train,
    /// Deterministic center crop, no flip.
    Eval,
}

fn crop(x: &Tensor<f32>, oh: usize, ow: usize) -> Tensor<f32> {
    let [c, h, w] = [x.shape()[0], x.shape()[1], x.shape()[2]];
    debug_assert!(oh + CROP_SIZE <= h && ow + CROP_SIZE <= w);
    let mut out = Tensor::zeros(&[c, CROP_SIZE, CROP_SIZE]);
    let od = out.data_mut();
    for cc in 0..c {
        for hh in 0..CROP_SIZE {
            let src = (cc * h + oh + hh) * w + ow;
            let dst = (cc * CROP_SIZE + hh) * CROP_SIZE;
            od[dst..dst + CROP_SIZE].copy_from_slice(&x.data()[src..src + CROP_SIZE]);
        }
    }
    out
}

/// Mirrors the width axis; applying it twice restores the input.
pub fn flip_horizontal(x: &Tensor<f32>) -> Tensor<f32> {
    let [c, h, w] = [x.shape()[0], x.shape()[1], x.shape()[2]];
    let mut out = Tensor::zeros(x.shape());
    let od = out.data_mut();
    for cc in 0..c {
        for hh in 0..h {
            let row = (cc * h + hh) * w;
            for ww in 0..w {
                od[row + ww] = x.data()[row + w - 1 - ww];
            }
        }
    }
    out
}

/// `sample` is a 3×H×W single-precision image with H, W ≥ 224. Train mode
/// draws, in order: crop row offset, crop column offset, flip coin.
pub fn augment<R: Rng>(
    sample: &Tensor<f32>,
    mode: AugmentMode,
    rng: &mut R,
    stats: &ChannelStats,
) -> Result<Tensor<f32>> {
    if sample.rank() != 3 || sample.shape()[0] != 3 {
        return Err(Error::data(format!(
            "augment expects a 3xHxW sample, got {:?}",
            sample.shape()
        )));
    }
    let (h, w) = (sample.shape()[1], sample.shape()[2]);
    if h < CROP_SIZE || w < CROP_SIZE {
        return Err(Error::data(format!(
            "sample {h}x{w} smaller than the {CROP_SIZE} crop"
        )));
    }
    let mut out = match mode {
        AugmentMode::Train => {
            let oh = rng.gen_range(0..=h - CROP_SIZE);
            let ow = rng.gen_range(0..=w - CROP_SIZE);
            let cropped = crop(sample, oh, ow);
            if rng.gen_bool(0.5) {
                flip_horizontal(&cropped)
            } else {
                cropped
            }
        }
        AugmentMode::Eval => crop(sample, (h - CROP_SIZE) / 2, (w - CROP_SIZE) / 2),
    };
    let plane = CROP_SIZE * CROP_SIZE;
    let od = out.data_mut();
    for cc in 0..3 {
        let mean = stats.mean[cc] as f32;
        let inv_std = 1.0 / stats.std[cc] as f32;
        for v in od[cc * plane..(cc + 1) * plane].iter_mut() {
            *v = (*v - mean) * inv_std;
        }
    }
    Ok(out)
}
