//! Seeded epoch iteration: every sample exactly once, Fisher–Yates shuffle,
//! last batch short.

use super::augment::{augment, AugmentMode, CROP_SIZE};
use super::manifest::{Manifest, Split};
use super::tensor_file::load_tensor;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

pub struct BatchStream<'a> {
    manifest: &'a Manifest,
    order: Vec<usize>,
    pos: usize,
    batch_size: usize,
    mode: AugmentMode,
    rng: ChaCha8Rng,
}

/// One epoch over `split`. Shuffling permutes the sample order with the
/// provided generator; augmentation draws follow in stream order.
pub fn batches<'a>(
    manifest: &'a Manifest,
    split: Split,
    batch_size: usize,
    shuffle: bool,
    mode: AugmentMode,
    mut rng: ChaCha8Rng,
) -> Result<BatchStream<'a>> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let mut order = manifest.split_indices(split);
    if order.is_empty() {
        return Err(Error::data(format!(
            "split '{}' has no samples",
            split.as_str()
        )));
    }
    if shuffle {
        order.shuffle(&mut rng);
    }
    Ok(BatchStream {
        manifest,
        order,
        pos: 0,
        batch_size,
        mode,
        rng,
    })
}

impl BatchStream<'_> {
    pub fn len_samples(&self) -> usize {
        self.order.len()
    }

    fn load_sample(&mut self, index: usize) -> Result<Tensor<f32>> {
        let entry = &self.manifest.entries[index];
        let path = self.manifest.resolve(entry);
        let tensor = load_tensor(&path)?.into_f32().map_err(|_| {
            Error::data(format!(
                "'{}': dataset samples must be single precision",
                path.display()
            ))
        })?;
        if tensor.shape() != [3, 256, 256] {
            return Err(Error::data(format!(
                "'{}': expected shape 3x256x256, got {:?}",
                path.display(),
                tensor.shape()
            )));
        }
        augment(&tensor, self.mode, &mut self.rng, &self.manifest.stats)
    }
}

impl Iterator for BatchStream<'_> {
    type Item = Result<(Tensor<f32>, Vec<usize>)>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let indices: Vec<usize> = self.order[self.pos..end].to_vec();
        self.pos = end;
        let n = indices.len();
        let mut batch = Tensor::zeros(&[n, 3, CROP_SIZE, CROP_SIZE]);
        let mut labels = Vec::with_capacity(n);
        let plane = 3 * CROP_SIZE * CROP_SIZE;
        for (i, &idx) in indices.iter().enumerate() {
            let sample = match self.load_sample(idx) {
                Ok(s) => s,
                Err(e) => return Some(Err(e)),
            };
            batch.data_mut()[i * plane..(i + 1) * plane].copy_from_slice(sample.data());
            labels.push(self.manifest.entries[idx].label);
        }
        Some(Ok((batch, labels)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_dataset;
    use rand::SeedableRng;

    #[test]
    fn epoch_covers_every_sample_once_with_short_tail() {
        let dir = tempfile::tempdir().unwrap();
        // 70 train samples: 14 per class across 5 classes
        let manifest = synth_dataset(dir.path(), 5, 16, 7).unwrap();
        let train = manifest.split_indices(Split::Train).len();
        assert_eq!(train, 70); // 16 per class -> 14 train each

        let stream = batches(
            &manifest,
            Split::Train,
            32,
            true,
            AugmentMode::Train,
            ChaCha8Rng::seed_from_u64(3),
        )
        .unwrap();
        let mut sizes = Vec::new();
        let mut label_multiset = Vec::new();
        for item in stream {
            let (batch, labels) = item.unwrap();
            sizes.push(batch.shape()[0]);
            label_multiset.extend(labels);
        }
        assert_eq!(sizes, vec![32, 32, 6]);
        label_multiset.sort_unstable();
        let mut expect: Vec<usize> = manifest
            .entries
            .iter()
            .filter(|e| e.split == Split::Train)
            .map(|e| e.label)
            .collect();
        expect.sort_unstable();
        assert_eq!(label_multiset, expect);
    }

    #[test]
    fn same_seed_same_permutation() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = synth_dataset(dir.path(), 3, 5, 11).unwrap();
        let collect = |seed: u64| -> Vec<Vec<usize>> {
            batches(
                &manifest,
                Split::Train,
                4,
                true,
                AugmentMode::Eval,
                ChaCha8Rng::seed_from_u64(seed),
            )
            .unwrap()
            .map(|b| b.unwrap().1)
            .collect()
        };
        assert_eq!(collect(5), collect(5));
        assert_ne!(collect(5), collect(6));
    }

    #[test]
    fn missing_file_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = synth_dataset(dir.path(), 2, 4, 0).unwrap();
        let victim = manifest.resolve(&manifest.entries[0]);
        std::fs::remove_file(&victim).unwrap();
        let stream = batches(
            &manifest,
            Split::Train,
            64,
            false,
            AugmentMode::Eval,
            ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        let err = stream
            .map(|r| r.err())
            .find(Option::is_some)
            .flatten()
            .expect("an error for the removed file");
        assert!(err.to_string().contains(victim.file_name().unwrap().to_str().unwrap()));
    }

    #[test]
    fn empty_split_rejected_up_front() {
        let dir = tempfile::tempdir().unwrap();
        let mut manifest = synth_dataset(dir.path(), 2, 4, 0).unwrap();
        manifest.entries.retain(|e| e.split != Split::Val);
        assert!(batches(
            &manifest,
            Split::Val,
            8,
            false,
            AugmentMode::Eval,
            ChaCha8Rng::seed_from_u64(0),
        )
        .is_err());
    }
}
