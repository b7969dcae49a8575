//! Normalization layers: batch norm (NCHW, running stats), group-affine norm
//! (one scale/shift pair per channel group), and token layer norm.
//!
//! All three share the same backward structure: with biased variance and
//! normalization set of size m,
//!   dx = gamma * inv_std * (dy - mean(dy) - xhat * mean(dy * xhat))
//! where the means run over the set that was normalized together.

use super::Mode;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub struct BatchNorm2d<T: Scalar> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub dgamma: Tensor<T>,
    pub dbeta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    momentum: T,
    eps: T,
    stats_ready: bool,
    cache: Option<NormCache<T>>,
}

struct NormCache<T> {
    xhat: Tensor<T>,
    inv_std: Vec<T>,
}

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::ones(&[channels]),
            beta: Tensor::zeros(&[channels]),
            dgamma: Tensor::zeros(&[channels]),
            dbeta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::ones(&[channels]),
            momentum: T::from_f64(super::BN_MOMENTUM),
            eps: T::from_f64(super::NORM_EPS),
            stats_ready: false,
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// Marks running statistics as usable (set when stats are loaded from a
    /// checkpoint rather than produced by a train-mode forward).
    pub fn set_stats_ready(&mut self) {
        self.stats_ready = true;
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        if x.rank() != 4 {
            return Err(Error::dim("batchnorm2d expects an NCHW input"));
        }
        let [n, c, h, w] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
        if c != self.channels() {
            return Err(Error::dim(format!(
                "batchnorm2d: {c} channels vs {} parameters per vector",
                self.channels()
            )));
        }
        let plane = h * w;
        let m = n * plane;
        let m_t = T::from_f64(m as f64);
        let mut out = Tensor::zeros(x.shape());
        match mode {
            Mode::Train => {
                let mut xhat = Tensor::zeros(x.shape());
                let mut inv_std = vec![T::zero(); c];
                for cc in 0..c {
                    let mut sum = T::zero();
                    let mut sq = T::zero();
                    for nn in 0..n {
                        let base = (nn * c + cc) * plane;
                        for &v in &x.data()[base..base + plane] {
                            sum += v;
                            sq += v * v;
                        }
                    }
                    let mean = sum / m_t;
                    let var = sq / m_t - mean * mean;
                    let istd = T::one() / (var + self.eps).sqrt();
                    inv_std[cc] = istd;
                    let (g, b) = (self.gamma.data()[cc], self.beta.data()[cc]);
                    for nn in 0..n {
                        let base = (nn * c + cc) * plane;
                        for i in base..base + plane {
                            let xh = (x.data()[i] - mean) * istd;
                            xhat.data_mut()[i] = xh;
                            out.data_mut()[i] = g * xh + b;
                        }
                    }
                    let mom = self.momentum;
                    let keep = T::one() - mom;
                    self.running_mean.data_mut()[cc] =
                        keep * self.running_mean.data()[cc] + mom * mean;
                    self.running_var.data_mut()[cc] =
                        keep * self.running_var.data()[cc] + mom * var;
                }
                self.stats_ready = true;
                self.cache = Some(NormCache { xhat, inv_std });
            }
            Mode::Infer => {
                if !self.stats_ready {
                    return Err(Error::State(
                        "batchnorm2d infer mode before any training update or loaded stats".into(),
                    ));
                }
                self.cache = None;
                for cc in 0..c {
                    let mean = self.running_mean.data()[cc];
                    let istd = T::one() / (self.running_var.data()[cc] + self.eps).sqrt();
                    let (g, b) = (self.gamma.data()[cc], self.beta.data()[cc]);
                    for nn in 0..n {
                        let base = (nn * c + cc) * plane;
                        for i in base..base + plane {
                            out.data_mut()[i] = g * (x.data()[i] - mean) * istd + b;
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::State("batchnorm2d backward without train-mode forward".into()))?;
        let [n, c, h, w] = [dy.shape()[0], dy.shape()[1], dy.shape()[2], dy.shape()[3]];
        let plane = h * w;
        let m = T::from_f64((n * plane) as f64);
        let mut dx = Tensor::zeros(dy.shape());
        for cc in 0..c {
            let mut sum_dy = T::zero();
            let mut sum_dy_xhat = T::zero();
            for nn in 0..n {
                let base = (nn * c + cc) * plane;
                for i in base..base + plane {
                    sum_dy += dy.data()[i];
                    sum_dy_xhat += dy.data()[i] * cache.xhat.data()[i];
                }
            }
            self.dgamma.data_mut()[cc] += sum_dy_xhat;
            self.dbeta.data_mut()[cc] += sum_dy;
            let g = self.gamma.data()[cc];
            let istd = cache.inv_std[cc];
            let mean_dy = sum_dy / m;
            let mean_dy_xhat = sum_dy_xhat / m;
            for nn in 0..n {
                let base = (nn * c + cc) * plane;
                for i in base..base + plane {
                    dx.data_mut()[i] = g
                        * istd
                        * (dy.data()[i] - mean_dy - cache.xhat.data()[i] * mean_dy_xhat);
                }
            }
        }
        Ok(dx)
    }

    pub fn param_count(&self) -> usize {
        2 * self.channels()
    }

    pub fn zero_grads(&mut self) {
        self.dgamma.fill(T::zero());
        self.dbeta.fill(T::zero());
    }

    pub fn visit_params(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(String, &mut Tensor<T>, &mut Tensor<T>),
    ) {
        f(
            format!("{prefix}.gamma"),
            &mut self.gamma,
            &mut self.dgamma,
        );
        f(format!("{prefix}.beta"), &mut self.beta, &mut self.dbeta);
    }

    /// Non-learnable state (running statistics), checkpointed but never
    /// touched by the optimizer.
    pub fn visit_state(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        f(format!("{prefix}.running_mean"), &mut self.running_mean);
        f(format!("{prefix}.running_var"), &mut self.running_var);
    }
}

/// Group normalization with a single affine pair per group: a C-channel map
/// split into `groups` groups contributes `2*groups` learnable parameters.
pub struct GroupAffineNorm<T: Scalar> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub dgamma: Tensor<T>,
    pub dbeta: Tensor<T>,
    groups: usize,
    eps: T,
    cache: Option<GroupCache<T>>,
}

struct GroupCache<T> {
    xhat: Tensor<T>,
    inv_std: Vec<T>, // one per (sample, group)
}

impl<T: Scalar> GroupAffineNorm<T> {
    pub fn new(groups: usize) -> Self {
        Self {
            gamma: Tensor::ones(&[groups]),
            beta: Tensor::zeros(&[groups]),
            dgamma: Tensor::zeros(&[groups]),
            dbeta: Tensor::zeros(&[groups]),
            groups,
            eps: T::from_f64(super::NORM_EPS),
            cache: None,
        }
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        if x.rank() != 4 {
            return Err(Error::dim("group_affine_norm expects an NCHW input"));
        }
        let [n, c, h, w] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
        if c % self.groups != 0 {
            return Err(Error::dim(format!(
                "group_affine_norm: {c} channels not divisible by {} groups",
                self.groups
            )));
        }
        let gsize = (c / self.groups) * h * w;
        let m_t = T::from_f64(gsize as f64);
        let mut out = Tensor::zeros(x.shape());
        let mut xhat = Tensor::zeros(x.shape());
        let mut inv_std = vec![T::zero(); n * self.groups];
        for nn in 0..n {
            for g in 0..self.groups {
                let base = (nn * c + g * (c / self.groups)) * h * w;
                let span = &x.data()[base..base + gsize];
                let mut sum = T::zero();
                let mut sq = T::zero();
                for &v in span {
                    sum += v;
                    sq += v * v;
                }
                let mean = sum / m_t;
                let var = sq / m_t - mean * mean;
                let istd = T::one() / (var + self.eps).sqrt();
                inv_std[nn * self.groups + g] = istd;
                let (ga, be) = (self.gamma.data()[g], self.beta.data()[g]);
                for i in 0..gsize {
                    let xh = (x.data()[base + i] - mean) * istd;
                    xhat.data_mut()[base + i] = xh;
                    out.data_mut()[base + i] = ga * xh + be;
                }
            }
        }
        self.cache = Some(GroupCache { xhat, inv_std });
        Ok(out)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::State("group_affine_norm backward without forward".into()))?;
        let [n, c, h, w] = [dy.shape()[0], dy.shape()[1], dy.shape()[2], dy.shape()[3]];
        let gsize = (c / self.groups) * h * w;
        let m_t = T::from_f64(gsize as f64);
        let mut dx = Tensor::zeros(dy.shape());
        for nn in 0..n {
            for g in 0..self.groups {
                let base = (nn * c + g * (c / self.groups)) * h * w;
                let mut sum_dy = T::zero();
                let mut sum_dy_xhat = T::zero();
                for i in 0..gsize {
                    sum_dy += dy.data()[base + i];
                    sum_dy_xhat += dy.data()[base + i] * cache.xhat.data()[base + i];
                }
                self.dgamma.data_mut()[g] += sum_dy_xhat;
                self.dbeta.data_mut()[g] += sum_dy;
                let ga = self.gamma.data()[g];
                let istd = cache.inv_std[nn * self.groups + g];
                let mean_dy = sum_dy / m_t;
                let mean_dy_xhat = sum_dy_xhat / m_t;
                for i in 0..gsize {
                    dx.data_mut()[base + i] = ga
                        * istd
                        * (dy.data()[base + i] - mean_dy - cache.xhat.data()[base + i] * mean_dy_xhat);
                }
            }
        }
        Ok(dx)
    }

    pub fn param_count(&self) -> usize {
        2 * self.groups
    }

    pub fn zero_grads(&mut self) {
        self.dgamma.fill(T::zero());
        self.dbeta.fill(T::zero());
    }

    pub fn visit_params(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(String, &mut Tensor<T>, &mut Tensor<T>),
    ) {
        f(
            format!("{prefix}.gamma"),
            &mut self.gamma,
            &mut self.dgamma,
        );
        f(format!("{prefix}.beta"), &mut self.beta, &mut self.dbeta);
    }
}

/// Per-token layer normalization over the channel axis of `(rows, d)` or
/// `(batch, n, d)` token tensors, with per-channel affine (2d parameters).
pub struct LayerNormTokens<T: Scalar> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub dgamma: Tensor<T>,
    pub dbeta: Tensor<T>,
    eps: T,
    cache: Option<NormCache<T>>,
}

impl<T: Scalar> LayerNormTokens<T> {
    pub fn new(d: usize) -> Self {
        Self {
            gamma: Tensor::ones(&[d]),
            beta: Tensor::zeros(&[d]),
            dgamma: Tensor::zeros(&[d]),
            dbeta: Tensor::zeros(&[d]),
            eps: T::from_f64(super::NORM_EPS),
            cache: None,
        }
    }

    pub fn width(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (rows, d) = super::token_rows(x)
            .ok_or_else(|| Error::dim("layernorm expects a rank-2 or rank-3 token tensor"))?;
        if d != self.width() {
            return Err(Error::dim(format!(
                "layernorm: channel extent {d} vs parameter length {}",
                self.width()
            )));
        }
        let m_t = T::from_f64(d as f64);
        let mut out = Tensor::zeros(x.shape());
        let mut xhat = Tensor::zeros(x.shape());
        let mut inv_std = vec![T::zero(); rows];
        for r in 0..rows {
            let base = r * d;
            let span = &x.data()[base..base + d];
            let mut sum = T::zero();
            let mut sq = T::zero();
            for &v in span {
                sum += v;
                sq += v * v;
            }
            let mean = sum / m_t;
            let var = sq / m_t - mean * mean;
            let istd = T::one() / (var + self.eps).sqrt();
            inv_std[r] = istd;
            for i in 0..d {
                let xh = (x.data()[base + i] - mean) * istd;
                xhat.data_mut()[base + i] = xh;
                out.data_mut()[base + i] =
                    self.gamma.data()[i] * xh + self.beta.data()[i];
            }
        }
        self.cache = Some(NormCache { xhat, inv_std });
        Ok(out)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::State("layernorm backward without forward".into()))?;
        let (rows, d) = super::token_rows(dy).expect("dy matches forward shape");
        let m_t = T::from_f64(d as f64);
        let mut dx = Tensor::zeros(dy.shape());
        for r in 0..rows {
            let base = r * d;
            let mut sum_g = T::zero();
            let mut sum_g_xhat = T::zero();
            for i in 0..d {
                let g = dy.data()[base + i] * self.gamma.data()[i];
                let xh = cache.xhat.data()[base + i];
                sum_g += g;
                sum_g_xhat += g * xh;
                self.dgamma.data_mut()[i] += dy.data()[base + i] * xh;
                self.dbeta.data_mut()[i] += dy.data()[base + i];
            }
            let istd = cache.inv_std[r];
            let mean_g = sum_g / m_t;
            let mean_g_xhat = sum_g_xhat / m_t;
            for i in 0..d {
                let g = dy.data()[base + i] * self.gamma.data()[i];
                let xh = cache.xhat.data()[base + i];
                dx.data_mut()[base + i] = istd * (g - mean_g - xh * mean_g_xhat);
            }
        }
        Ok(dx)
    }

    pub fn param_count(&self) -> usize {
        2 * self.width()
    }

    pub fn zero_grads(&mut self) {
        self.dgamma.fill(T::zero());
        self.dbeta.fill(T::zero());
    }

    pub fn visit_params(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(String, &mut Tensor<T>, &mut Tensor<T>),
    ) {
        f(
            format!("{prefix}.gamma"),
            &mut self.gamma,
            &mut self.dgamma,
        );
        f(format!("{prefix}.beta"), &mut self.beta, &mut self.dbeta);
    }
}
