//! Checkpoint container: model id + preset strings, then named tensors
//! (parameters and batch-norm running statistics) as embedded tensor blobs.
//!
//! Layout (little-endian): magic `"VLXC"`, version u8 = 1, model id
//! (u16 length + UTF-8), preset (u16 length + UTF-8), entry count u32, then
//! per entry a name (u16 length + UTF-8) followed by one tensor file image.

use super::tensor_file::{read_tensor_prefix, write_tensor_bytes, AnyTensor};
use crate::error::{Error, Result};
use crate::models::Model;
use crate::tensor::{Scalar, Tensor};
use std::path::Path;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"VLXC";
pub const CHECKPOINT_VERSION: u8 = 1;

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model_id: String,
    pub preset: String,
    pub entries: Vec<(String, AnyTensor)>,
}

fn err_at(offset: usize, msg: impl std::fmt::Display) -> Error {
    Error::data(format!("{msg} (at byte offset {offset})"))
}

fn push_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u16).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn read_str<'a>(bytes: &'a [u8], pos: &mut usize, what: &str) -> Result<&'a str> {
    if bytes.len() < *pos + 2 {
        return Err(err_at(bytes.len(), format!("truncated {what} length")));
    }
    let len = u16::from_le_bytes([bytes[*pos], bytes[*pos + 1]]) as usize;
    *pos += 2;
    if bytes.len() < *pos + len {
        return Err(err_at(bytes.len(), format!("truncated {what}")));
    }
    let s = std::str::from_utf8(&bytes[*pos..*pos + len])
        .map_err(|_| err_at(*pos, format!("{what} is not UTF-8")))?;
    *pos += len;
    Ok(s)
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.push(CHECKPOINT_VERSION);
        push_str(&mut out, &self.model_id);
        push_str(&mut out, &self.preset);
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, tensor) in &self.entries {
            push_str(&mut out, name);
            match tensor {
                AnyTensor::F32(t) => out.extend_from_slice(&write_tensor_bytes(t)),
                AnyTensor::F64(t) => out.extend_from_slice(&write_tensor_bytes(t)),
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 5 {
            return Err(err_at(bytes.len(), "truncated checkpoint header"));
        }
        if &bytes[0..4] != CHECKPOINT_MAGIC {
            return Err(err_at(0, "bad checkpoint magic"));
        }
        if bytes[4] != CHECKPOINT_VERSION {
            return Err(err_at(
                4,
                format!("unsupported checkpoint version {}", bytes[4]),
            ));
        }
        let mut pos = 5;
        let model_id = read_str(bytes, &mut pos, "model id")?.to_string();
        let preset = read_str(bytes, &mut pos, "preset")?.to_string();
        if bytes.len() < pos + 4 {
            return Err(err_at(bytes.len(), "truncated entry count"));
        }
        let count = u32::from_le_bytes([
            bytes[pos],
            bytes[pos + 1],
            bytes[pos + 2],
            bytes[pos + 3],
        ]) as usize;
        pos += 4;
        let mut entries = Vec::new();
        for _ in 0..count {
            let name = read_str(bytes, &mut pos, "entry name")?.to_string();
            let (tensor, consumed) = read_tensor_prefix(&bytes[pos..], pos)?;
            pos += consumed;
            entries.push((name, tensor));
        }
        if pos != bytes.len() {
            return Err(err_at(
                pos,
                format!("{} trailing bytes after last entry", bytes.len() - pos),
            ));
        }
        Ok(Self {
            model_id,
            preset,
            entries,
        })
    }

    /// Captures every parameter and running statistic of a model.
    pub fn from_model<T: Scalar>(model: &mut Model<T>) -> Self {
        let mut entries = Vec::new();
        model.visit_params(&mut |name, value, _| {
            entries.push((name, any_of(value)));
        });
        model.visit_state(&mut |name, value| {
            entries.push((name, any_of(value)));
        });
        Self {
            model_id: model.graph.spec.model_id(),
            preset: model.graph.spec.preset.as_str().to_string(),
            entries,
        }
    }

    /// Restores parameters and running statistics into a freshly built model
    /// of the same id/preset. The entry set must match exactly.
    pub fn apply<T: Scalar>(&self, model: &mut Model<T>) -> Result<()> {
        if self.model_id != model.graph.spec.model_id() {
            return Err(Error::data(format!(
                "checkpoint is for '{}', model is '{}'",
                self.model_id,
                model.graph.spec.model_id()
            )));
        }
        if self.preset != model.graph.spec.preset.as_str() {
            return Err(Error::data(format!(
                "checkpoint preset '{}' vs model preset '{}'",
                self.preset,
                model.graph.spec.preset.as_str()
            )));
        }
        let mut remaining: std::collections::BTreeMap<&str, &AnyTensor> = self
            .entries
            .iter()
            .map(|(n, t)| (n.as_str(), t))
            .collect();
        if remaining.len() != self.entries.len() {
            return Err(Error::data("duplicate entry names in checkpoint"));
        }
        let mut failure: Option<Error> = None;
        let mut restore = |name: String, value: &mut Tensor<T>| {
            if failure.is_some() {
                return;
            }
            match remaining.remove(name.as_str()) {
                Some(entry) => {
                    if let Err(e) = copy_into(entry, value, &name) {
                        failure = Some(e);
                    }
                }
                None => {
                    failure = Some(Error::data(format!("checkpoint is missing tensor '{name}'")));
                }
            }
        };
        model.visit_params(&mut |name, value, _| restore(name, value));
        model.visit_state(&mut |name, value| restore(name, value));
        if let Some(e) = failure {
            return Err(e);
        }
        if let Some((name, _)) = remaining.into_iter().next() {
            return Err(Error::data(format!(
                "checkpoint has extra tensor '{name}' not present in the model"
            )));
        }
        model.mark_stats_ready();
        Ok(())
    }
}

fn any_of<T: Scalar>(t: &Tensor<T>) -> AnyTensor {
    // the scalar type decides which arm is real; the copy stays bit-exact
    match T::DTYPE {
        crate::tensor::Dtype::F32 => AnyTensor::F32(
            Tensor::new(t.shape(), t.data().iter().map(|v| v.as_f64() as f32).collect())
                .expect("same shape"),
        ),
        crate::tensor::Dtype::F64 => AnyTensor::F64(
            Tensor::new(t.shape(), t.data().iter().map(|v| v.as_f64()).collect())
                .expect("same shape"),
        ),
    }
}

fn copy_into<T: Scalar>(entry: &AnyTensor, value: &mut Tensor<T>, name: &str) -> Result<()> {
    if entry.shape() != value.shape() {
        return Err(Error::data(format!(
            "tensor '{name}': checkpoint shape {:?} vs model shape {:?}",
            entry.shape(),
            value.shape()
        )));
    }
    if entry.dtype() != T::DTYPE {
        return Err(Error::data(format!(
            "tensor '{name}': checkpoint dtype {:?} vs model dtype {:?}",
            entry.dtype(),
            T::DTYPE
        )));
    }
    match entry {
        AnyTensor::F32(t) => {
            for (dst, src) in value.data_mut().iter_mut().zip(t.data()) {
                *dst = T::from_f64(*src as f64);
            }
        }
        AnyTensor::F64(t) => {
            for (dst, src) in value.data_mut().iter_mut().zip(t.data()) {
                *dst = T::from_f64(*src);
            }
        }
    }
    Ok(())
}

pub fn save_checkpoint<T: Scalar>(path: impl AsRef<Path>, model: &mut Model<T>) -> Result<()> {
    std::fs::write(path, Checkpoint::from_model(model).to_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)
        .map_err(|e| Error::data(format!("cannot read '{}': {e}", path.display())))?;
    Checkpoint::from_bytes(&bytes)
        .map_err(|e| Error::data(format!("'{}': {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::Mode;
    use crate::models::{GraphSpec, ModelKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny_model(seed: u64) -> Model<f32> {
        let g = GraphSpec::new(ModelKind::SqueezenetReduced, 3)
            .build_graph()
            .unwrap();
        Model::init(g, seed).unwrap()
    }

    #[test]
    fn reload_reproduces_infer_logits_bit_exactly() {
        let mut m = tiny_model(1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let batch = Tensor::<f32>::from_fn(&[2, 3, 27, 27], |_| rng.gen_range(-1.0f32..1.0));
        let _ = m.forward(&batch, Mode::Train).unwrap(); // populate running stats
        let reference = m.forward(&batch, Mode::Infer).unwrap();

        let bytes = Checkpoint::from_model(&mut m).to_bytes();
        let ckpt = Checkpoint::from_bytes(&bytes).unwrap();
        let mut fresh = tiny_model(999); // different init
        ckpt.apply(&mut fresh).unwrap();
        let restored = fresh.forward(&batch, Mode::Infer).unwrap();
        assert!(reference
            .data()
            .iter()
            .zip(restored.data())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn id_and_preset_mismatches_rejected() {
        let mut m = tiny_model(1);
        let mut ckpt = Checkpoint::from_model(&mut m);
        ckpt.model_id = "veloxnet;classes=3;input=27;ablation=full".into();
        assert!(matches!(ckpt.apply(&mut tiny_model(0)), Err(Error::Data(_))));
    }

    #[test]
    fn corrupt_bytes_error_not_panic() {
        let mut m = tiny_model(1);
        let bytes = Checkpoint::from_model(&mut m).to_bytes();
        for cut in [0usize, 3, 4, 10, bytes.len() / 2, bytes.len() - 1] {
            assert!(Checkpoint::from_bytes(&bytes[..cut]).is_err(), "cut {cut}");
        }
        let mut bad = bytes.clone();
        bad[0] = b'Z';
        assert!(Checkpoint::from_bytes(&bad).is_err());
    }
}
