//! Dense row-major tensors and the primitive numeric ops layers are built on.
//!
//! Tensors are rank 1–4, contiguous, row-major. For an NCHW map the flat
//! index of `(n, c, h, w)` is `((n*C + c)*H + h)*W + w`; token matrices are
//! `(n_tokens, d)` with token `t = h*W + w`. There is no broadcasting: shapes
//! must match exactly, and per-channel parameters are expanded by layer code.
//!
//! Operations are pure, never mutate their inputs, and are deterministic
//! within one build (parallel kernels keep a fixed per-element summation
//! order). NaN/Inf in a result is treated as an error condition by the model
//! executor, never as a value to propagate silently.

use crate::error::{Error, Result};
use num_traits::Float;

pub(crate) mod matmul;

/// Scalar precision of a tensor. Single precision is the working dtype;
/// double precision is used for gradient checking.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn size_bytes(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Dtype> {
        match code {
            0 => Some(Dtype::F32),
            1 => Some(Dtype::F64),
            _ => None,
        }
    }
}

/// Scalar types a [`Tensor`] can hold (f32 and f64).
pub trait Scalar:
    Float
    + num_traits::NumAssign
    + Send
    + Sync
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + 'static
{
    const DTYPE: Dtype;
    const BYTES: usize;

    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f32 {
    const DTYPE: Dtype = Dtype::F32;
    const BYTES: usize = 4;

    fn from_f64(v: f64) -> Self {
        v as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]])
    }
}

impl Scalar for f64 {
    const DTYPE: Dtype = Dtype::F64;
    const BYTES: usize = 8;

    fn from_f64(v: f64) -> Self {
        v
    }

    fn as_f64(self) -> f64 {
        self
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes([
            bytes[0], bytes[1], bytes[2], bytes[3], bytes[4], bytes[5], bytes[6], bytes[7],
        ])
    }
}

pub const MAX_RANK: usize = 4;

/// Dense tensor: shape (rank 1–4, positive extents) plus contiguous
/// row-major data of exactly `product(shape)` scalars.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

pub(crate) fn checked_len(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.len() > MAX_RANK {
        return Err(Error::dim(format!(
            "rank must be 1..={MAX_RANK}, got {}",
            shape.len()
        )));
    }
    let mut n: usize = 1;
    for &e in shape {
        if e == 0 {
            return Err(Error::dim("zero extent in shape"));
        }
        n = n
            .checked_mul(e)
            .ok_or_else(|| Error::dim("shape element count overflows usize"))?;
    }
    Ok(n)
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let n = checked_len(shape)?;
        if n != data.len() {
            return Err(Error::dim(format!(
                "shape {:?} implies {} scalars, got {}",
                shape,
                n,
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = checked_len(shape).expect("valid shape");
        Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); n],
        }
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, T::one())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let n = checked_len(shape).expect("valid shape");
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        let n = checked_len(shape).expect("valid shape");
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn scalar(value: T) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dtype(&self) -> Dtype {
        T::DTYPE
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Same data, new shape. The element count must match; this is a copy-free
    /// relabeling, valid because storage is always contiguous row-major.
    pub fn with_shape(mut self, shape: &[usize]) -> Result<Self> {
        let n = checked_len(shape)?;
        if n != self.data.len() {
            return Err(Error::dim(format!(
                "cannot reshape {} scalars to {:?}",
                self.data.len(),
                shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn fill(&mut self, value: T) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    /// True iff every scalar is finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn zip_map(&self, other: &Self, op: &str, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::dim(format!(
                "{op}: shape {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Pointwise sum; shapes must match exactly.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "add", |a, b| a + b)
    }

    /// Pointwise difference; shapes must match exactly.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "sub", |a, b| a - b)
    }

    /// Hadamard product; shapes must match exactly.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "mul", |a, b| a * b)
    }

    /// In-place `self += other`.
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::dim(format!(
                "add_assign: shape {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        for (a, &b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
        Ok(())
    }

    /// Rank-2 matrix product `(m×k)·(k×p) -> (m×p)`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.rank() != 2 || other.rank() != 2 {
            return Err(Error::dim(format!(
                "matmul needs rank-2 operands, got {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        let (m, k) = (self.shape[0], self.shape[1]);
        let (k2, p) = (other.shape[0], other.shape[1]);
        if k != k2 {
            return Err(Error::dim(format!(
                "matmul inner extents differ: {k} vs {k2}"
            )));
        }
        let mut out = vec![T::zero(); m * p];
        matmul::mm(&self.data, m, k, &other.data, p, &mut out);
        Tensor::new(&[m, p], out)
    }

    /// Splits a rank-2 `(n, d)` tensor along the channel axis into two
    /// `(n, d/2)` halves. `d` must be even.
    pub fn split_channels(&self) -> Result<(Self, Self)> {
        if self.rank() != 2 {
            return Err(Error::dim(format!(
                "split_channels needs rank 2, got {:?}",
                self.shape
            )));
        }
        let (n, d) = (self.shape[0], self.shape[1]);
        if d % 2 != 0 {
            return Err(Error::dim(format!(
                "split_channels needs an even channel extent, got {d}"
            )));
        }
        let h = d / 2;
        let mut a = Vec::with_capacity(n * h);
        let mut b = Vec::with_capacity(n * h);
        for row in self.data.chunks_exact(d) {
            a.extend_from_slice(&row[..h]);
            b.extend_from_slice(&row[h..]);
        }
        Ok((Tensor::new(&[n, h], a)?, Tensor::new(&[n, h], b)?))
    }

    /// Concatenates two rank-2 tensors along the channel axis.
    pub fn concat_channels(a: &Self, b: &Self) -> Result<Self> {
        if a.rank() != 2 || b.rank() != 2 || a.shape[0] != b.shape[0] {
            return Err(Error::dim(format!(
                "concat_channels: incompatible shapes {:?} and {:?}",
                a.shape, b.shape
            )));
        }
        let (n, da, db) = (a.shape[0], a.shape[1], b.shape[1]);
        let mut out = Vec::with_capacity(n * (da + db));
        for (ra, rb) in a.data.chunks_exact(da).zip(b.data.chunks_exact(db)) {
            out.extend_from_slice(ra);
            out.extend_from_slice(rb);
        }
        Tensor::new(&[n, da + db], out)
    }

    /// Concatenates two NCHW maps along the channel axis.
    pub fn concat_nchw_channels(a: &Self, b: &Self) -> Result<Self> {
        if a.rank() != 4 || b.rank() != 4 {
            return Err(Error::dim("concat_nchw_channels needs rank 4"));
        }
        let (n, ca, h, w) = (a.shape[0], a.shape[1], a.shape[2], a.shape[3]);
        let cb = b.shape[1];
        if b.shape[0] != n || b.shape[2] != h || b.shape[3] != w {
            return Err(Error::dim(format!(
                "concat_nchw_channels: incompatible shapes {:?} and {:?}",
                a.shape, b.shape
            )));
        }
        let plane = h * w;
        let mut out = Vec::with_capacity(n * (ca + cb) * plane);
        for i in 0..n {
            out.extend_from_slice(&a.data[i * ca * plane..(i + 1) * ca * plane]);
            out.extend_from_slice(&b.data[i * cb * plane..(i + 1) * cb * plane]);
        }
        Tensor::new(&[n, ca + cb, h, w], out)
    }

    fn axis_split(&self, axis: usize, op: &str) -> Result<(usize, usize, usize)> {
        if axis >= self.rank() {
            return Err(Error::dim(format!(
                "{op}: axis {axis} out of range for rank {}",
                self.rank()
            )));
        }
        let outer: usize = self.shape[..axis].iter().product();
        let ax = self.shape[axis];
        let inner: usize = self.shape[axis + 1..].iter().product();
        Ok((outer, ax, inner))
    }

    fn reduced_shape(&self, axis: usize) -> Vec<usize> {
        let mut s = self.shape.clone();
        s[axis] = 1;
        s
    }

    /// Sum along `axis`; the result keeps extent 1 there.
    pub fn sum_axis(&self, axis: usize) -> Result<Self> {
        let (outer, ax, inner) = self.axis_split(axis, "sum_axis")?;
        let mut out = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for a in 0..ax {
                let base = (o * ax + a) * inner;
                for i in 0..inner {
                    out[o * inner + i] += self.data[base + i];
                }
            }
        }
        Tensor::new(&self.reduced_shape(axis), out)
    }

    /// Mean along `axis`; the result keeps extent 1 there.
    pub fn mean_axis(&self, axis: usize) -> Result<Self> {
        let ax = *self
            .shape
            .get(axis)
            .ok_or_else(|| Error::dim(format!("mean_axis: axis {axis} out of range")))?;
        let inv = T::one() / T::from_f64(ax as f64);
        Ok(self.sum_axis(axis)?.map(|v| v * inv))
    }

    /// Max along `axis` together with the argmax position on that axis.
    /// Ties break toward the lowest index.
    pub fn max_with_argmax(&self, axis: usize) -> Result<(Self, Vec<usize>)> {
        let (outer, ax, inner) = self.axis_split(axis, "max_with_argmax")?;
        let mut vals = vec![T::zero(); outer * inner];
        let mut idxs = vec![0usize; outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let mut best = self.data[(o * ax) * inner + i];
                let mut best_a = 0usize;
                for a in 1..ax {
                    let v = self.data[(o * ax + a) * inner + i];
                    if v > best {
                        best = v;
                        best_a = a;
                    }
                }
                vals[o * inner + i] = best;
                idxs[o * inner + i] = best_a;
            }
        }
        Ok((Tensor::new(&self.reduced_shape(axis), vals)?, idxs))
    }
}
