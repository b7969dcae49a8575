//! SqueezeNet fire module: 1×1 squeeze, then parallel 1×1 and 3×3 expand
//! paths concatenated along channels. Every convolution is bias-free and
//! followed by batch norm + ReLU; the 3×3 path pads by 1 so the spatial
//! size is preserved.

use crate::error::{Error, Result};
use crate::layers::{Activation, ActKind, BatchNorm2d, Conv2d, Mode};
use crate::tensor::{Scalar, Tensor};
use rand::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FireConfig {
    pub c_in: usize,
    /// squeeze channels
    pub s: usize,
    /// 1×1 expand channels
    pub e1: usize,
    /// 3×3 expand channels
    pub e3: usize,
}

impl FireConfig {
    pub fn new(c_in: usize, s: usize, e1: usize, e3: usize) -> Self {
        Self { c_in, s, e1, e3 }
    }

    pub fn c_out(&self) -> usize {
        self.e1 + self.e3
    }

    /// c_in·s + 2s + s·e1 + 2e1 + 9·s·e3 + 2e3
    pub fn param_count(&self) -> usize {
        self.c_in * self.s
            + 2 * self.s
            + self.s * self.e1
            + 2 * self.e1
            + 9 * self.s * self.e3
            + 2 * self.e3
    }

    /// Multiply-accumulates per sample at spatial size `h_out × w_out`
    /// (all three convs preserve the spatial extent).
    pub fn mac_count(&self, h_out: usize, w_out: usize) -> u64 {
        let plane = (h_out * w_out) as u64;
        let conv = (self.c_in * self.s + self.s * self.e1 + 9 * self.s * self.e3) as u64;
        conv * plane
    }
}

pub struct Fire<T: Scalar> {
    pub cfg: FireConfig,
    squeeze: Conv2d<T>,
    squeeze_bn: BatchNorm2d<T>,
    squeeze_act: Activation<T>,
    expand1: Conv2d<T>,
    expand1_bn: BatchNorm2d<T>,
    expand1_act: Activation<T>,
    expand3: Conv2d<T>,
    expand3_bn: BatchNorm2d<T>,
    expand3_act: Activation<T>,
}

impl<T: Scalar> Fire<T> {
    pub fn init<R: Rng>(cfg: FireConfig, rng: &mut R) -> Self {
        Self {
            squeeze: Conv2d::new(cfg.c_in, cfg.s, 1, 1, 0, false, rng),
            squeeze_bn: BatchNorm2d::new(cfg.s),
            squeeze_act: Activation::new(ActKind::Relu),
            expand1: Conv2d::new(cfg.s, cfg.e1, 1, 1, 0, false, rng),
            expand1_bn: BatchNorm2d::new(cfg.e1),
            expand1_act: Activation::new(ActKind::Relu),
            expand3: Conv2d::new(cfg.s, cfg.e3, 3, 1, 1, false, rng),
            expand3_bn: BatchNorm2d::new(cfg.e3),
            expand3_act: Activation::new(ActKind::Relu),
            cfg,
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        if x.rank() != 4 || x.shape()[1] != self.cfg.c_in {
            return Err(Error::dim(format!(
                "fire: expected {} input channels, got shape {:?}",
                self.cfg.c_in,
                x.shape()
            )));
        }
        let z = self.squeeze.forward(x)?;
        let z = self.squeeze_bn.forward(&z, mode)?;
        let z = self.squeeze_act.forward(&z)?;
        let a = self.expand1.forward(&z)?;
        let a = self.expand1_bn.forward(&a, mode)?;
        let a = self.expand1_act.forward(&a)?;
        let b = self.expand3.forward(&z)?;
        let b = self.expand3_bn.forward(&b, mode)?;
        let b = self.expand3_act.forward(&b)?;
        Tensor::concat_nchw_channels(&a, &b)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let [n, _, h, w] = [dy.shape()[0], dy.shape()[1], dy.shape()[2], dy.shape()[3]];
        let (e1, e3) = (self.cfg.e1, self.cfg.e3);
        // split the incoming gradient back into the two expand paths
        let plane = h * w;
        let mut da = Tensor::zeros(&[n, e1, h, w]);
        let mut db = Tensor::zeros(&[n, e3, h, w]);
        for nn in 0..n {
            let src = nn * (e1 + e3) * plane;
            da.data_mut()[nn * e1 * plane..(nn + 1) * e1 * plane]
                .copy_from_slice(&dy.data()[src..src + e1 * plane]);
            db.data_mut()[nn * e3 * plane..(nn + 1) * e3 * plane]
                .copy_from_slice(&dy.data()[src + e1 * plane..src + (e1 + e3) * plane]);
        }
        let da = self.expand1_act.backward(&da)?;
        let da = self.expand1_bn.backward(&da)?;
        let dz1 = self.expand1.backward(&da)?;
        let db = self.expand3_act.backward(&db)?;
        let db = self.expand3_bn.backward(&db)?;
        let dz3 = self.expand3.backward(&db)?;
        let dz = dz1.add(&dz3)?;
        let dz = self.squeeze_act.backward(&dz)?;
        let dz = self.squeeze_bn.backward(&dz)?;
        self.squeeze.backward(&dz)
    }

    pub fn param_count(&self) -> usize {
        self.squeeze.param_count()
            + self.squeeze_bn.param_count()
            + self.expand1.param_count()
            + self.expand1_bn.param_count()
            + self.expand3.param_count()
            + self.expand3_bn.param_count()
    }

    pub fn zero_grads(&mut self) {
        self.squeeze.zero_grads();
        self.squeeze_bn.zero_grads();
        self.expand1.zero_grads();
        self.expand1_bn.zero_grads();
        self.expand3.zero_grads();
        self.expand3_bn.zero_grads();
    }

    pub fn visit_params(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(String, &mut Tensor<T>, &mut Tensor<T>),
    ) {
        self.squeeze.visit_params(&format!("{prefix}.squeeze"), f);
        self.squeeze_bn
            .visit_params(&format!("{prefix}.squeeze_bn"), f);
        self.expand1.visit_params(&format!("{prefix}.expand1"), f);
        self.expand1_bn
            .visit_params(&format!("{prefix}.expand1_bn"), f);
        self.expand3.visit_params(&format!("{prefix}.expand3"), f);
        self.expand3_bn
            .visit_params(&format!("{prefix}.expand3_bn"), f);
    }

    pub fn visit_state(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        self.squeeze_bn.visit_state(&format!("{prefix}.squeeze_bn"), f);
        self.expand1_bn.visit_state(&format!("{prefix}.expand1_bn"), f);
        self.expand3_bn.visit_state(&format!("{prefix}.expand3_bn"), f);
    }

    pub fn set_stats_ready(&mut self) {
        self.squeeze_bn.set_stats_ready();
        self.expand1_bn.set_stats_ready();
        self.expand3_bn.set_stats_ready();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn published_fire_counts() {
        // fire2 and fire9 of the reference schedule
        assert_eq!(FireConfig::new(96, 16, 64, 64).param_count(), 12_064);
        assert_eq!(FireConfig::new(512, 64, 256, 256).param_count(), 197_760);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let fire = Fire::<f32>::init(FireConfig::new(96, 16, 64, 64), &mut rng);
        assert_eq!(fire.param_count(), 12_064);
    }

    #[test]
    fn closed_form_matches_allocation_across_configs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for cfg in [
            FireConfig::new(8, 2, 4, 4),
            FireConfig::new(128, 16, 64, 64),
            FireConfig::new(384, 48, 192, 192),
        ] {
            let fire = Fire::<f32>::init(cfg, &mut rng);
            assert_eq!(fire.param_count(), cfg.param_count());
        }
    }

    #[test]
    fn spatial_shape_preserved_and_channels_concatenated() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = FireConfig::new(6, 2, 5, 3);
        let mut fire = Fire::<f32>::init(cfg, &mut rng);
        let x = Tensor::from_fn(&[2, 6, 7, 7], |_| rng.gen_range(-1.0f32..1.0));
        let y = fire.forward(&x, Mode::Train).unwrap();
        assert_eq!(y.shape(), &[2, 8, 7, 7]);
    }

    #[test]
    fn channel_mismatch_is_dimension_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut fire = Fire::<f32>::init(FireConfig::new(6, 2, 4, 4), &mut rng);
        let x = Tensor::ones(&[1, 5, 4, 4]);
        assert!(matches!(fire.forward(&x, Mode::Train), Err(Error::Dimension(_))));
    }
}
