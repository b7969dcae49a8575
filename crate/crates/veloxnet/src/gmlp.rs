//! The Spatial Gating Unit and the residual gMLP block.
//!
//! A block computes `Y = SGU(gelu(norm(X) U)) V + X` on token matrices
//! `(n_tokens, d)`. The SGU gates one branch of its input with a spatial
//! mix of the other: `Z1 ⊙ g(Z2)`, where `g` is either a learned dense
//! token-to-token projection (`W_g·innernorm(·) + b_g`) or a parameter-free
//! circular shift along the token axis.
//!
//! Two named presets exist:
//! - `paper-eq`: channel split in half, dense spatial projection, biased
//!   channel projections. Faithful to the gating equations; the dense map
//!   costs n² parameters, which grows quadratically with the feature map.
//! - `table-i`: no split, circular-shift mixing, bias-free projections,
//!   block + inner norms. Costs exactly `2d² + 4d` parameters per block
//!   (49,296 at d = 156) independent of the token count.

use crate::error::{Error, Result};
use crate::layers::{ActKind, Activation, LayerNormTokens, Linear};
use crate::tensor::matmul::{mm, mm_a_bt, mm_at_b};
use crate::tensor::{Scalar, Tensor};
use rand::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitMode {
    /// `[Z1, Z2] = split(Z)` along channels; gate acts on the second half.
    Half,
    /// Gate the whole tensor with a mix of itself.
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpatialMixing {
    /// Learned `W_g ∈ n×n` plus per-token bias `b_g`.
    Dense,
    /// Circular shift by `shift_offset` along the token axis; zero parameters.
    Shift,
}

/// All knobs of one gMLP block. `n_tokens` is fixed per stage at build time.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GmlpConfig {
    pub d_model: usize,
    pub split: SplitMode,
    pub spatial_mixing: SpatialMixing,
    pub shift_offset: usize,
    pub bias_uv: bool,
    pub block_norm: bool,
    pub inner_norm: bool,
    pub n_tokens: usize,
    /// Ablation switch: replace the SGU with the identity on Z.
    pub spatial_gating: bool,
    /// Ablation switch: drop the `+ X` residual.
    pub residual: bool,
}

impl GmlpConfig {
    /// Preset faithful to the gating equations: split in half, dense W_g.
    pub fn paper_eq(d_model: usize, n_tokens: usize) -> Self {
        Self {
            d_model,
            split: SplitMode::Half,
            spatial_mixing: SpatialMixing::Dense,
            shift_offset: 1,
            bias_uv: true,
            block_norm: true,
            inner_norm: true,
            n_tokens,
            spatial_gating: true,
            residual: true,
        }
    }

    /// Preset reproducing the published per-block parameter count
    /// (`2d² + 4d`, i.e. 49,296 at d = 156).
    pub fn table_i(d_model: usize, n_tokens: usize) -> Self {
        Self {
            d_model,
            split: SplitMode::None,
            spatial_mixing: SpatialMixing::Shift,
            shift_offset: 1,
            bias_uv: false,
            block_norm: true,
            inner_norm: true,
            n_tokens,
            spatial_gating: true,
            residual: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_tokens == 0 {
            return Err(Error::Config("gmlp: zero d_model or n_tokens".into()));
        }
        if self.split == SplitMode::Half && self.d_model % 2 != 0 {
            return Err(Error::Config(format!(
                "gmlp: split=half requires an even d_model, got {}",
                self.d_model
            )));
        }
        if self.spatial_mixing == SpatialMixing::Shift && self.shift_offset == 0 {
            return Err(Error::Config("gmlp: shift offset must be nonzero".into()));
        }
        Ok(())
    }

    /// Gate width: the channel extent the spatial mix operates on.
    pub fn gate_width(&self) -> usize {
        match self.split {
            SplitMode::Half => self.d_model / 2,
            SplitMode::None => self.d_model,
        }
    }

    /// Input width of the V projection: the gate width, or the full model
    /// width when the SGU is ablated away (identity on Z).
    pub fn v_input_width(&self) -> usize {
        if self.spatial_gating {
            self.gate_width()
        } else {
            self.d_model
        }
    }

    /// Closed-form learnable parameter count of one block.
    pub fn param_count(&self) -> usize {
        let d = self.d_model;
        let mut total = 0;
        if self.block_norm {
            total += 2 * d;
        }
        total += d * d + if self.bias_uv { d } else { 0 }; // U
        if self.spatial_gating {
            if self.inner_norm {
                total += 2 * self.gate_width();
            }
            if self.spatial_mixing == SpatialMixing::Dense {
                total += self.n_tokens * self.n_tokens + self.n_tokens;
            }
        }
        total += self.v_input_width() * d + if self.bias_uv { d } else { 0 }; // V
        total
    }

    /// Per-sample multiply-accumulate count of one block (projections and the
    /// dense gate only; norms, activations and shifts count as zero).
    pub fn mac_count(&self) -> u64 {
        let d = self.d_model as u64;
        let n = self.n_tokens as u64;
        let w = self.gate_width() as u64;
        let mut total = d * d * n; // U
        if self.spatial_gating && self.spatial_mixing == SpatialMixing::Dense {
            total += n * n * w;
        }
        total += self.v_input_width() as u64 * d * n; // V
        total
    }
}

/// Reorders an NCHW map into `(N, H·W, C)` tokens; token `t = h·W + w` holds
/// the channel vector at spatial position `(h, w)`. Bit-exact inverse below.
pub fn tokens_from_map<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    if x.rank() != 4 {
        return Err(Error::dim("tokens_from_map expects an NCHW input"));
    }
    let [n, c, h, w] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    let plane = h * w;
    let mut out = Tensor::zeros(&[n, plane, c]);
    let od = out.data_mut();
    for nn in 0..n {
        for cc in 0..c {
            let base = (nn * c + cc) * plane;
            for t in 0..plane {
                od[(nn * plane + t) * c + cc] = x.data()[base + t];
            }
        }
    }
    Ok(out)
}

/// Inverse of [`tokens_from_map`].
pub fn map_from_tokens<T: Scalar>(t: &Tensor<T>, h: usize, w: usize) -> Result<Tensor<T>> {
    if t.rank() != 3 {
        return Err(Error::dim("map_from_tokens expects (N, tokens, C)"));
    }
    let [n, plane, c] = [t.shape()[0], t.shape()[1], t.shape()[2]];
    if plane != h * w {
        return Err(Error::dim(format!(
            "map_from_tokens: {plane} tokens cannot fill {h}x{w}"
        )));
    }
    let mut out = Tensor::zeros(&[n, c, h, w]);
    let od = out.data_mut();
    for nn in 0..n {
        for tt in 0..plane {
            let base = (nn * plane + tt) * c;
            for cc in 0..c {
                od[(nn * c + cc) * plane + tt] = t.data()[base + cc];
            }
        }
    }
    Ok(out)
}

/// `out[t, :] = rows[(t - offset) mod n, :]` — circular shift along tokens.
pub(crate) fn shift_rows<T: Scalar>(rows: &[T], n: usize, w: usize, offset: usize, out: &mut [T]) {
    let off = offset % n;
    for t in 0..n {
        let src = (t + n - off) % n;
        out[t * w..(t + 1) * w].copy_from_slice(&rows[src * w..(src + 1) * w]);
    }
}

struct SguCache<T> {
    z1: Tensor<T>,
    gate: Tensor<T>,
    ln_out: Tensor<T>,
}

/// Multiplicative spatial gate `Z1 ⊙ g(Z2)`.
pub struct SpatialGatingUnit<T: Scalar> {
    cfg: GmlpConfig,
    inner_norm: Option<LayerNormTokens<T>>,
    /// (n, n) spatial projection, dense mixing only. Zero-initialized so the
    /// unit starts as the identity on Z1.
    pub wg: Option<Tensor<T>>,
    /// per-token bias, one-initialized.
    pub bg: Option<Tensor<T>>,
    pub dwg: Option<Tensor<T>>,
    pub dbg: Option<Tensor<T>>,
    cache: Option<SguCache<T>>,
}

impl<T: Scalar> SpatialGatingUnit<T> {
    pub fn init(cfg: GmlpConfig) -> Result<Self> {
        cfg.validate()?;
        let dense = cfg.spatial_mixing == SpatialMixing::Dense;
        let n = cfg.n_tokens;
        Ok(Self {
            inner_norm: cfg.inner_norm.then(|| LayerNormTokens::new(cfg.gate_width())),
            wg: dense.then(|| Tensor::zeros(&[n, n])),
            bg: dense.then(|| Tensor::ones(&[n])),
            dwg: dense.then(|| Tensor::zeros(&[n, n])),
            dbg: dense.then(|| Tensor::zeros(&[n])),
            cfg,
            cache: None,
        })
    }

    fn batched(x: &Tensor<T>) -> (usize, usize, usize) {
        match *x.shape() {
            [n, d] => (1, n, d),
            [b, n, d] => (b, n, d),
            _ => unreachable!("validated by caller"),
        }
    }

    /// Input `(n, w)` or `(batch, n, w)`; output keeps the token layout with
    /// the gate width of the configuration.
    pub fn forward(&mut self, z: &Tensor<T>) -> Result<Tensor<T>> {
        if z.rank() != 2 && z.rank() != 3 {
            return Err(Error::dim("sgu expects a rank-2 or rank-3 token tensor"));
        }
        let (batch, n, width) = Self::batched(z);
        let expect_w = match self.cfg.split {
            SplitMode::Half => self.cfg.gate_width() * 2,
            SplitMode::None => self.cfg.gate_width(),
        };
        if width != expect_w {
            return Err(Error::dim(format!(
                "sgu: input width {width}, config expects {expect_w}"
            )));
        }
        if self.cfg.spatial_mixing == SpatialMixing::Dense && n != self.cfg.n_tokens {
            return Err(Error::dim(format!(
                "sgu: {n} tokens vs configured {}",
                self.cfg.n_tokens
            )));
        }
        let w = self.cfg.gate_width();

        // split into the gated branch (z1) and the mixing branch (z2)
        let flat = z.clone().with_shape(&[batch * n, width])?;
        let (z1, z2) = match self.cfg.split {
            SplitMode::Half => flat.split_channels()?,
            SplitMode::None => (flat.clone(), flat),
        };

        let ln_out = match &mut self.inner_norm {
            Some(ln) => ln.forward(&z2)?,
            None => z2,
        };

        let mut gate = Tensor::zeros(&[batch * n, w]);
        match self.cfg.spatial_mixing {
            SpatialMixing::Dense => {
                let wg = self.wg.as_ref().unwrap();
                let bg = self.bg.as_ref().unwrap();
                for s in 0..batch {
                    let src = &ln_out.data()[s * n * w..(s + 1) * n * w];
                    let dst = &mut gate.data_mut()[s * n * w..(s + 1) * n * w];
                    mm(wg.data(), n, n, src, w, dst);
                    for t in 0..n {
                        let b = bg.data()[t];
                        for v in dst[t * w..(t + 1) * w].iter_mut() {
                            *v += b;
                        }
                    }
                }
            }
            SpatialMixing::Shift => {
                for s in 0..batch {
                    let src = &ln_out.data()[s * n * w..(s + 1) * n * w];
                    let dst = &mut gate.data_mut()[s * n * w..(s + 1) * n * w];
                    shift_rows(src, n, w, self.cfg.shift_offset, dst);
                }
            }
        }

        let out = z1.mul(&gate)?;
        self.cache = Some(SguCache {
            z1,
            gate,
            ln_out,
        });
        let out_shape: Vec<usize> = if z.rank() == 2 {
            vec![n, w]
        } else {
            vec![batch, n, w]
        };
        out.with_shape(&out_shape)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::State("sgu backward without forward".into()))?;
        let (batch, n, w) = Self::batched(dy);
        let rows = batch * n;
        let flat_dy = dy.clone().with_shape(&[rows, w])?;

        let dz1 = flat_dy.mul(&cache.gate)?;
        let dgate = flat_dy.mul(&cache.z1)?;

        let mut dln = Tensor::zeros(&[rows, w]);
        match self.cfg.spatial_mixing {
            SpatialMixing::Dense => {
                let wg = self.wg.as_ref().unwrap();
                let dwg = self.dwg.as_mut().unwrap();
                let dbg = self.dbg.as_mut().unwrap();
                for s in 0..batch {
                    let dg = &dgate.data()[s * n * w..(s + 1) * n * w];
                    let ln = &cache.ln_out.data()[s * n * w..(s + 1) * n * w];
                    // dWg += dG · LNᵀ
                    let mut part = vec![T::zero(); n * n];
                    mm_a_bt(dg, n, w, ln, n, &mut part);
                    for (g, v) in dwg.data_mut().iter_mut().zip(part) {
                        *g += v;
                    }
                    for t in 0..n {
                        let mut s_row = T::zero();
                        for &v in &dg[t * w..(t + 1) * w] {
                            s_row += v;
                        }
                        dbg.data_mut()[t] += s_row;
                    }
                    // dLN = Wgᵀ · dG
                    let dst = &mut dln.data_mut()[s * n * w..(s + 1) * n * w];
                    mm_at_b(wg.data(), n, n, dg, w, dst);
                }
            }
            SpatialMixing::Shift => {
                let off = self.cfg.shift_offset % n;
                for s in 0..batch {
                    let dg = &dgate.data()[s * n * w..(s + 1) * n * w];
                    let dst = &mut dln.data_mut()[s * n * w..(s + 1) * n * w];
                    // inverse rotation of the forward shift
                    shift_rows(dg, n, w, n - off, dst);
                }
            }
        }

        let dz2 = match &mut self.inner_norm {
            Some(ln) => ln.backward(&dln)?,
            None => dln,
        };

        let dz_flat = match self.cfg.split {
            SplitMode::Half => Tensor::concat_channels(&dz1, &dz2)?,
            SplitMode::None => dz1.add(&dz2)?,
        };
        let out_shape: Vec<usize> = if dy.rank() == 2 {
            vec![n, dz_flat.shape()[1]]
        } else {
            vec![batch, n, dz_flat.shape()[1]]
        };
        dz_flat.with_shape(&out_shape)
    }

    pub fn param_count(&self) -> usize {
        self.inner_norm.as_ref().map_or(0, LayerNormTokens::param_count)
            + self.wg.as_ref().map_or(0, Tensor::len)
            + self.bg.as_ref().map_or(0, Tensor::len)
    }

    pub fn zero_grads(&mut self) {
        if let Some(ln) = &mut self.inner_norm {
            ln.zero_grads();
        }
        if let Some(d) = &mut self.dwg {
            d.fill(T::zero());
        }
        if let Some(d) = &mut self.dbg {
            d.fill(T::zero());
        }
    }

    pub fn visit_params(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(String, &mut Tensor<T>, &mut Tensor<T>),
    ) {
        if let Some(ln) = &mut self.inner_norm {
            ln.visit_params(&format!("{prefix}.inner_norm"), f);
        }
        if let (Some(wg), Some(dwg)) = (&mut self.wg, &mut self.dwg) {
            f(format!("{prefix}.wg"), wg, dwg);
        }
        if let (Some(bg), Some(dbg)) = (&mut self.bg, &mut self.dbg) {
            f(format!("{prefix}.bg"), bg, dbg);
        }
    }
}

/// Residual gMLP block: `Y = SGU(gelu(norm(X) U)) V + X`.
pub struct GmlpBlock<T: Scalar> {
    pub cfg: GmlpConfig,
    block_norm: Option<LayerNormTokens<T>>,
    u: Linear<T>,
    act: Activation<T>,
    sgu: Option<SpatialGatingUnit<T>>,
    v: Linear<T>,
    cache_x: Option<Tensor<T>>,
}

impl<T: Scalar> GmlpBlock<T> {
    pub fn init<R: Rng>(cfg: GmlpConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.d_model;
        let u = Linear::new(d, d, cfg.bias_uv, rng);
        let v = Linear::new(cfg.v_input_width(), d, cfg.bias_uv, rng);
        Ok(Self {
            block_norm: cfg.block_norm.then(|| LayerNormTokens::new(d)),
            u,
            act: Activation::new(ActKind::Gelu),
            sgu: if cfg.spatial_gating {
                Some(SpatialGatingUnit::init(cfg)?)
            } else {
                None
            },
            v,
            cfg,
            cache_x: None,
        })
    }

    /// Direct access for tests and structured initialization.
    pub fn v_weight_mut(&mut self) -> &mut Tensor<T> {
        &mut self.v.weight
    }

    pub fn sgu_mut(&mut self) -> Option<&mut SpatialGatingUnit<T>> {
        self.sgu.as_mut()
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        if x.rank() != 2 && x.rank() != 3 {
            return Err(Error::dim("gmlp block expects a rank-2 or rank-3 token tensor"));
        }
        let d = *x.shape().last().unwrap();
        if d != self.cfg.d_model {
            return Err(Error::dim(format!(
                "gmlp block: input width {d} vs d_model {}",
                self.cfg.d_model
            )));
        }
        let a = match &mut self.block_norm {
            Some(ln) => ln.forward(x)?,
            None => x.clone(),
        };
        let b = self.u.forward(&a)?;
        let c = self.act.forward(&b)?;
        let gated = match &mut self.sgu {
            Some(sgu) => sgu.forward(&c)?,
            // ablation: identity on Z, so V sees the full width
            None => c,
        };
        let e = self.v.forward(&gated)?;
        let y = if self.cfg.residual { e.add(x)? } else { e };
        self.cache_x = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let _x = self
            .cache_x
            .take()
            .ok_or_else(|| Error::State("gmlp block backward without forward".into()))?;
        let dgated = self.v.backward(dy)?;
        let dc = match &mut self.sgu {
            Some(sgu) => sgu.backward(&dgated)?,
            None => dgated,
        };
        let db = self.act.backward(&dc)?;
        let da = self.u.backward(&db)?;
        let mut dx = match &mut self.block_norm {
            Some(ln) => ln.backward(&da)?,
            None => da,
        };
        if self.cfg.residual {
            dx = dx.add(dy)?;
        }
        Ok(dx)
    }

    pub fn param_count(&self) -> usize {
        self.block_norm.as_ref().map_or(0, LayerNormTokens::param_count)
            + self.u.param_count()
            + self.sgu.as_ref().map_or(0, SpatialGatingUnit::param_count)
            + self.v.param_count()
    }

    pub fn zero_grads(&mut self) {
        if let Some(ln) = &mut self.block_norm {
            ln.zero_grads();
        }
        self.u.zero_grads();
        if let Some(sgu) = &mut self.sgu {
            sgu.zero_grads();
        }
        self.v.zero_grads();
    }

    pub fn visit_params(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(String, &mut Tensor<T>, &mut Tensor<T>),
    ) {
        if let Some(ln) = &mut self.block_norm {
            ln.visit_params(&format!("{prefix}.norm"), f);
        }
        self.u.visit_params(&format!("{prefix}.u"), f);
        if let Some(sgu) = &mut self.sgu {
            sgu.visit_params(&format!("{prefix}.sgu"), f);
        }
        self.v.visit_params(&format!("{prefix}.v"), f);
    }
}
