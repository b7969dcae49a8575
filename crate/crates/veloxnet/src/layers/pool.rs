//! Max pooling (floor/ceil output rounding) and global average pooling.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rounding {
    Floor,
    Ceil,
}

pub fn pool_out_extent(extent: usize, kernel: usize, stride: usize, rounding: Rounding) -> Result<usize> {
    if kernel > extent {
        return Err(Error::dim(format!(
            "pool kernel {kernel} larger than input extent {extent}"
        )));
    }
    let span = extent - kernel;
    let mut out = match rounding {
        Rounding::Floor => span / stride + 1,
        Rounding::Ceil => span.div_ceil(stride) + 1,
    };
    // a ceil-mode window must still start inside the input
    if (out - 1) * stride >= extent {
        out -= 1;
    }
    Ok(out)
}

pub struct MaxPool2d<T: Scalar> {
    kernel: usize,
    stride: usize,
    rounding: Rounding,
    cache: Option<PoolCache>,
    _marker: std::marker::PhantomData<T>,
}

struct PoolCache {
    in_shape: Vec<usize>,
    argmax: Vec<usize>,
}

impl<T: Scalar> MaxPool2d<T> {
    pub fn new(kernel: usize, stride: usize, rounding: Rounding) -> Self {
        Self {
            kernel,
            stride,
            rounding,
            cache: None,
            _marker: std::marker::PhantomData,
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        if x.rank() != 4 {
            return Err(Error::dim("maxpool2d expects an NCHW input"));
        }
        let [n, c, h, w] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
        let h_out = pool_out_extent(h, self.kernel, self.stride, self.rounding)?;
        let w_out = pool_out_extent(w, self.kernel, self.stride, self.rounding)?;
        let mut out = Tensor::zeros(&[n, c, h_out, w_out]);
        let mut argmax = vec![0usize; n * c * h_out * w_out];
        let xd = x.data();
        let od = out.data_mut();
        let mut oi = 0;
        for nn in 0..n {
            for cc in 0..c {
                let base = (nn * c + cc) * h * w;
                for oh in 0..h_out {
                    let h0 = oh * self.stride;
                    let h1 = (h0 + self.kernel).min(h); // ceil mode clips edge windows
                    for ow in 0..w_out {
                        let w0 = ow * self.stride;
                        let w1 = (w0 + self.kernel).min(w);
                        let mut best = xd[base + h0 * w + w0];
                        let mut best_idx = base + h0 * w + w0;
                        for hh in h0..h1 {
                            for ww in w0..w1 {
                                let idx = base + hh * w + ww;
                                // strictly-greater keeps the lowest raster index on ties
                                if xd[idx] > best {
                                    best = xd[idx];
                                    best_idx = idx;
                                }
                            }
                        }
                        od[oi] = best;
                        argmax[oi] = best_idx;
                        oi += 1;
                    }
                }
            }
        }
        self.cache = Some(PoolCache {
            in_shape: x.shape().to_vec(),
            argmax,
        });
        Ok(out)
    }

    /// Routes each output gradient to its argmax input position only.
    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::State("maxpool2d backward without forward".into()))?;
        let mut dx = Tensor::zeros(&cache.in_shape);
        let dxd = dx.data_mut();
        for (&idx, &g) in cache.argmax.iter().zip(dy.data()) {
            dxd[idx] += g;
        }
        Ok(dx)
    }
}

pub struct GlobalAvgPool<T: Scalar> {
    cache: Option<Vec<usize>>,
    _marker: std::marker::PhantomData<T>,
}

impl<T: Scalar> Default for GlobalAvgPool<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> GlobalAvgPool<T> {
    pub fn new() -> Self {
        Self {
            cache: None,
            _marker: std::marker::PhantomData,
        }
    }

    /// NCHW -> (N, C) per-channel spatial mean.
    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        if x.rank() != 4 {
            return Err(Error::dim("global_avgpool expects an NCHW input"));
        }
        let [n, c, h, w] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
        let plane = h * w;
        let inv = T::one() / T::from_f64(plane as f64);
        let mut out = Tensor::zeros(&[n, c]);
        let od = out.data_mut();
        for nc in 0..n * c {
            let mut sum = T::zero();
            for &v in &x.data()[nc * plane..(nc + 1) * plane] {
                sum += v;
            }
            od[nc] = sum * inv;
        }
        self.cache = Some(x.shape().to_vec());
        Ok(out)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let in_shape = self
            .cache
            .take()
            .ok_or_else(|| Error::State("global_avgpool backward without forward".into()))?;
        let plane = in_shape[2] * in_shape[3];
        let inv = T::one() / T::from_f64(plane as f64);
        let mut dx = Tensor::zeros(&in_shape);
        let dxd = dx.data_mut();
        for (nc, &g) in dy.data().iter().enumerate() {
            let v = g * inv;
            for item in dxd[nc * plane..(nc + 1) * plane].iter_mut() {
                *item = v;
            }
        }
        Ok(dx)
    }
}
