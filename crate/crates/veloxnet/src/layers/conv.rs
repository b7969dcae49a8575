//! 2-D convolution (cross-correlation) via im2col + matrix products.

use crate::error::{Error, Result};
use crate::tensor::matmul::{mm, mm_a_bt, mm_at_b};
use crate::tensor::{Scalar, Tensor};
use rand::Rng;

pub struct Conv2d<T: Scalar> {
    /// (c_out, c_in, k, k)
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
    pub dweight: Tensor<T>,
    pub dbias: Option<Tensor<T>>,
    stride: usize,
    pad: usize,
    cache: Option<Tensor<T>>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new<R: Rng>(
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let fan_in = c_in * kernel * kernel;
        let fan_out = c_out * kernel * kernel;
        let weight = super::glorot_uniform(rng, &[c_out, c_in, kernel, kernel], fan_in, fan_out);
        Self {
            dweight: Tensor::zeros(weight.shape()),
            weight,
            bias: bias.then(|| Tensor::zeros(&[c_out])),
            dbias: bias.then(|| Tensor::zeros(&[c_out])),
            stride,
            pad,
            cache: None,
        }
    }

    pub fn c_in(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn c_out(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    /// `floor((extent + 2*pad - k)/stride) + 1`, failing when the kernel does
    /// not fit the padded input.
    pub fn out_extent(extent: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
        let padded = extent + 2 * pad;
        if padded < kernel {
            return Err(Error::dim(format!(
                "kernel {kernel} larger than padded input {padded}"
            )));
        }
        Ok((padded - kernel) / stride + 1)
    }

    fn padded(&self, x: &Tensor<T>) -> Tensor<T> {
        if self.pad == 0 {
            return x.clone();
        }
        let [n, c, h, w] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
        let (hp, wp) = (h + 2 * self.pad, w + 2 * self.pad);
        let mut out = Tensor::zeros(&[n, c, hp, wp]);
        let od = out.data_mut();
        for nn in 0..n {
            for cc in 0..c {
                for hh in 0..h {
                    let src = ((nn * c + cc) * h + hh) * w;
                    let dst = ((nn * c + cc) * hp + hh + self.pad) * wp + self.pad;
                    od[dst..dst + w].copy_from_slice(&x.data()[src..src + w]);
                }
            }
        }
        out
    }

    /// Patch matrix: row = (n, oh, ow), col = (c, kh, kw).
    fn im2col(&self, xp: &Tensor<T>, h_out: usize, w_out: usize) -> Vec<T> {
        let [n, c, hp, wp] = [xp.shape()[0], xp.shape()[1], xp.shape()[2], xp.shape()[3]];
        let k = self.kernel();
        let cols = c * k * k;
        let mut patches = vec![T::zero(); n * h_out * w_out * cols];
        let xd = xp.data();
        for nn in 0..n {
            for oh in 0..h_out {
                for ow in 0..w_out {
                    let row = ((nn * h_out + oh) * w_out + ow) * cols;
                    let (h0, w0) = (oh * self.stride, ow * self.stride);
                    for cc in 0..c {
                        for kh in 0..k {
                            let src = ((nn * c + cc) * hp + h0 + kh) * wp + w0;
                            let dst = row + (cc * k + kh) * k;
                            patches[dst..dst + k].copy_from_slice(&xd[src..src + k]);
                        }
                    }
                }
            }
        }
        patches
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        if x.rank() != 4 {
            return Err(Error::dim("conv2d expects an NCHW input"));
        }
        let [n, c, h, w] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
        if c != self.c_in() {
            return Err(Error::dim(format!(
                "conv2d: input has {c} channels, weight expects {}",
                self.c_in()
            )));
        }
        let k = self.kernel();
        let h_out = Self::out_extent(h, k, self.stride, self.pad)?;
        let w_out = Self::out_extent(w, k, self.stride, self.pad)?;
        let c_out = self.c_out();
        let cols = c * k * k;

        let xp = self.padded(x);
        let patches = self.im2col(&xp, h_out, w_out);
        let rows = n * h_out * w_out;
        // rows x c_out = patches (rows x cols) · weight(c_out x cols)ᵀ
        let mut y_rows = vec![T::zero(); rows * c_out];
        mm_a_bt(&patches, rows, cols, self.weight.data(), c_out, &mut y_rows);
        if let Some(b) = &self.bias {
            for row in y_rows.chunks_exact_mut(c_out) {
                for (v, &bv) in row.iter_mut().zip(b.data()) {
                    *v += bv;
                }
            }
        }

        let mut out = Tensor::zeros(&[n, c_out, h_out, w_out]);
        let plane = h_out * w_out;
        let od = out.data_mut();
        for nn in 0..n {
            for (p, row) in y_rows[nn * plane * c_out..(nn + 1) * plane * c_out]
                .chunks_exact(c_out)
                .enumerate()
            {
                for (co, &v) in row.iter().enumerate() {
                    od[(nn * c_out + co) * plane + p] = v;
                }
            }
        }
        self.cache = Some(x.clone());
        Ok(out)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self
            .cache
            .take()
            .ok_or_else(|| Error::State("conv2d backward without forward".into()))?;
        let [n, c, h, w] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
        let k = self.kernel();
        let c_out = self.c_out();
        let (h_out, w_out) = (dy.shape()[2], dy.shape()[3]);
        let cols = c * k * k;
        let rows = n * h_out * w_out;
        let plane = h_out * w_out;

        // gather dy into row-major (rows x c_out)
        let mut dy_rows = vec![T::zero(); rows * c_out];
        let dyd = dy.data();
        for nn in 0..n {
            for p in 0..plane {
                let row = (nn * plane + p) * c_out;
                for co in 0..c_out {
                    dy_rows[row + co] = dyd[(nn * c_out + co) * plane + p];
                }
            }
        }

        let xp = self.padded(&x);
        let patches = self.im2col(&xp, h_out, w_out);

        // dW(c_out x cols) += dy_rowsᵀ · patches
        mm_at_b(
            &dy_rows,
            rows,
            c_out,
            &patches,
            cols,
            self.dweight.data_mut(),
        );
        if let Some(db) = &mut self.dbias {
            let dbd = db.data_mut();
            for row in dy_rows.chunks_exact(c_out) {
                for (g, &v) in dbd.iter_mut().zip(row) {
                    *g += v;
                }
            }
        }

        // dPatches(rows x cols) = dy_rows · W(c_out x cols)
        let mut dpatches = vec![T::zero(); rows * cols];
        mm(
            &dy_rows,
            rows,
            c_out,
            self.weight.data(),
            cols,
            &mut dpatches,
        );

        // col2im scatter-add into the padded gradient, then crop
        let (hp, wp) = (h + 2 * self.pad, w + 2 * self.pad);
        let mut dxp = vec![T::zero(); n * c * hp * wp];
        for nn in 0..n {
            for oh in 0..h_out {
                for ow in 0..w_out {
                    let row = ((nn * h_out + oh) * w_out + ow) * cols;
                    let (h0, w0) = (oh * self.stride, ow * self.stride);
                    for cc in 0..c {
                        for kh in 0..k {
                            let dst = ((nn * c + cc) * hp + h0 + kh) * wp + w0;
                            let src = row + (cc * k + kh) * k;
                            for kw in 0..k {
                                dxp[dst + kw] += dpatches[src + kw];
                            }
                        }
                    }
                }
            }
        }
        if self.pad == 0 {
            return Tensor::new(&[n, c, h, w], dxp);
        }
        let mut dx = Tensor::zeros(&[n, c, h, w]);
        let dxd = dx.data_mut();
        for nn in 0..n {
            for cc in 0..c {
                for hh in 0..h {
                    let src = ((nn * c + cc) * hp + hh + self.pad) * wp + self.pad;
                    let dst = ((nn * c + cc) * h + hh) * w;
                    dxd[dst..dst + w].copy_from_slice(&dxp[src..src + w]);
                }
            }
        }
        Ok(dx)
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.as_ref().map_or(0, Tensor::len)
    }

    pub fn zero_grads(&mut self) {
        self.dweight.fill(T::zero());
        if let Some(db) = &mut self.dbias {
            db.fill(T::zero());
        }
    }

    pub fn visit_params(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(String, &mut Tensor<T>, &mut Tensor<T>),
    ) {
        f(
            format!("{prefix}.weight"),
            &mut self.weight,
            &mut self.dweight,
        );
        if let (Some(b), Some(db)) = (&mut self.bias, &mut self.dbias) {
            f(format!("{prefix}.bias"), b, db);
        }
    }
}
