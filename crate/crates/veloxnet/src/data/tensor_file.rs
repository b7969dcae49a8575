//! Binary tensor container.
//!
//! Layout (all little-endian):
//! - magic `"VLXT"` (4 bytes)
//! - version u8 = 1
//! - dtype u8 (0 = single, 1 = double)
//! - rank u8 (1..=4)
//! - reserved u8 = 0
//! - extents: rank × u32
//! - payload: row-major scalars, 4 or 8 bytes each
//!
//! A 3×256×256 single-precision tensor therefore has a 20-byte header.

use crate::error::{Error, Result};
use crate::tensor::{Dtype, Scalar, Tensor};
use std::path::Path;

pub const TENSOR_MAGIC: &[u8; 4] = b"VLXT";
pub const TENSOR_VERSION: u8 = 1;

/// A decoded tensor of either precision.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyTensor {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl AnyTensor {
    pub fn dtype(&self) -> Dtype {
        match self {
            AnyTensor::F32(_) => Dtype::F32,
            AnyTensor::F64(_) => Dtype::F64,
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            AnyTensor::F32(t) => t.shape(),
            AnyTensor::F64(t) => t.shape(),
        }
    }

    pub fn into_f32(self) -> Result<Tensor<f32>> {
        match self {
            AnyTensor::F32(t) => Ok(t),
            AnyTensor::F64(_) => Err(Error::data("expected a single-precision tensor")),
        }
    }

    pub fn into_f64(self) -> Result<Tensor<f64>> {
        match self {
            AnyTensor::F64(t) => Ok(t),
            AnyTensor::F32(_) => Err(Error::data("expected a double-precision tensor")),
        }
    }
}

pub fn write_tensor_bytes<T: Scalar>(t: &Tensor<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * t.rank() + T::BYTES * t.len());
    out.extend_from_slice(TENSOR_MAGIC);
    out.push(TENSOR_VERSION);
    out.push(T::DTYPE.code());
    out.push(t.rank() as u8);
    out.push(0);
    for &e in t.shape() {
        out.extend_from_slice(&(e as u32).to_le_bytes());
    }
    for &v in t.data() {
        v.write_le(&mut out);
    }
    out
}

fn err_at(offset: usize, msg: impl std::fmt::Display) -> Error {
    Error::data(format!("{msg} (at byte offset {offset})"))
}

/// Decodes one tensor from the front of `bytes`, returning it together with
/// the number of bytes consumed. `base` offsets error messages for embedded
/// use (checkpoints).
pub(crate) fn read_tensor_prefix(bytes: &[u8], base: usize) -> Result<(AnyTensor, usize)> {
    if bytes.len() < 8 {
        return Err(err_at(base + bytes.len(), "truncated tensor header"));
    }
    if &bytes[0..4] != TENSOR_MAGIC {
        return Err(err_at(base, "bad tensor magic"));
    }
    if bytes[4] != TENSOR_VERSION {
        return Err(err_at(
            base + 4,
            format!("unsupported tensor version {}", bytes[4]),
        ));
    }
    let dtype = Dtype::from_code(bytes[5])
        .ok_or_else(|| err_at(base + 5, format!("unknown dtype code {}", bytes[5])))?;
    let rank = bytes[6] as usize;
    if rank == 0 || rank > crate::tensor::MAX_RANK {
        return Err(err_at(base + 6, format!("rank {rank} out of range 1..=4")));
    }
    if bytes[7] != 0 {
        return Err(err_at(base + 7, "nonzero reserved byte"));
    }
    let header = 8 + 4 * rank;
    if bytes.len() < header {
        return Err(err_at(base + bytes.len(), "truncated extent list"));
    }
    let mut shape = Vec::with_capacity(rank);
    let mut count: usize = 1;
    for i in 0..rank {
        let off = 8 + 4 * i;
        let e = u32::from_le_bytes([
            bytes[off],
            bytes[off + 1],
            bytes[off + 2],
            bytes[off + 3],
        ]) as usize;
        if e == 0 {
            return Err(err_at(base + off, "zero extent"));
        }
        count = count
            .checked_mul(e)
            .ok_or_else(|| err_at(base + off, "extent product overflows"))?;
        shape.push(e);
    }
    let scalar_bytes = dtype.size_bytes();
    let payload = count
        .checked_mul(scalar_bytes)
        .ok_or_else(|| err_at(base + header, "payload size overflows"))?;
    if bytes.len() < header + payload {
        return Err(err_at(
            base + bytes.len(),
            format!(
                "truncated payload: header promises {payload} bytes, {} remain",
                bytes.len() - header
            ),
        ));
    }
    let body = &bytes[header..header + payload];
    let tensor = match dtype {
        Dtype::F32 => {
            let data: Vec<f32> = body.chunks_exact(4).map(<f32 as Scalar>::read_le).collect();
            AnyTensor::F32(Tensor::new(&shape, data)?)
        }
        Dtype::F64 => {
            let data: Vec<f64> = body.chunks_exact(8).map(<f64 as Scalar>::read_le).collect();
            AnyTensor::F64(Tensor::new(&shape, data)?)
        }
    };
    Ok((tensor, header + payload))
}

/// Decodes a standalone tensor file image; trailing bytes are an error.
pub fn read_tensor_bytes(bytes: &[u8]) -> Result<AnyTensor> {
    let (tensor, consumed) = read_tensor_prefix(bytes, 0)?;
    if consumed != bytes.len() {
        return Err(err_at(
            consumed,
            format!("{} trailing bytes after payload", bytes.len() - consumed),
        ));
    }
    Ok(tensor)
}

pub fn save_tensor<T: Scalar>(path: impl AsRef<Path>, t: &Tensor<T>) -> Result<()> {
    std::fs::write(path, write_tensor_bytes(t))?;
    Ok(())
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<AnyTensor> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)
        .map_err(|e| Error::data(format!("cannot read '{}': {e}", path.display())))?;
    read_tensor_bytes(&bytes)
        .map_err(|e| Error::data(format!("'{}': {e}", path.display())))
}
