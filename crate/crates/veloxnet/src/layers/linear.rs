//! Per-token affine map along the channel dimension.

use crate::error::{Error, Result};
use crate::tensor::matmul::{mm, mm_a_bt, mm_at_b};
use crate::tensor::{Scalar, Tensor};
use rand::Rng;

pub struct Linear<T: Scalar> {
    /// (d_in, d_out)
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
    pub dweight: Tensor<T>,
    pub dbias: Option<Tensor<T>>,
    cache: Option<Tensor<T>>,
}

impl<T: Scalar> Linear<T> {
    pub fn new<R: Rng>(d_in: usize, d_out: usize, bias: bool, rng: &mut R) -> Self {
        let weight = super::glorot_uniform(rng, &[d_in, d_out], d_in, d_out);
        Self {
            dweight: Tensor::zeros(weight.shape()),
            weight,
            bias: bias.then(|| Tensor::zeros(&[d_out])),
            dbias: bias.then(|| Tensor::zeros(&[d_out])),
            cache: None,
        }
    }

    pub fn d_in(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn d_out(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (rows, d) = super::token_rows(x)
            .ok_or_else(|| Error::dim("linear expects a rank-2 or rank-3 token tensor"))?;
        if d != self.d_in() {
            return Err(Error::dim(format!(
                "linear: input width {d} vs weight d_in {}",
                self.d_in()
            )));
        }
        let d_out = self.d_out();
        let mut out = vec![T::zero(); rows * d_out];
        mm(x.data(), rows, d, self.weight.data(), d_out, &mut out);
        if let Some(b) = &self.bias {
            for row in out.chunks_exact_mut(d_out) {
                for (v, &bv) in row.iter_mut().zip(b.data()) {
                    *v += bv;
                }
            }
        }
        let mut shape = x.shape().to_vec();
        *shape.last_mut().unwrap() = d_out;
        self.cache = Some(x.clone());
        Tensor::new(&shape, out)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self
            .cache
            .take()
            .ok_or_else(|| Error::State("linear backward without forward".into()))?;
        let (rows, d_in) = super::token_rows(&x).expect("cached input shape");
        let d_out = self.d_out();
        // dW += xᵀ · dy
        mm_at_b(
            x.data(),
            rows,
            d_in,
            dy.data(),
            d_out,
            self.dweight.data_mut(),
        );
        if let Some(db) = &mut self.dbias {
            let dbd = db.data_mut();
            for row in dy.data().chunks_exact(d_out) {
                for (g, &v) in dbd.iter_mut().zip(row) {
                    *g += v;
                }
            }
        }
        // dx = dy · Wᵀ
        let mut dx = vec![T::zero(); rows * d_in];
        mm_a_bt(dy.data(), rows, d_out, self.weight.data(), d_in, &mut dx);
        Tensor::new(x.shape(), dx)
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

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bias_free_square_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let lin = Linear::<f32>::new(156, 156, false, &mut rng);
        assert_eq!(lin.param_count(), 24_336);
        let lin_b = Linear::<f32>::new(3, 5, true, &mut rng);
        assert_eq!(lin_b.param_count(), 20);
    }

    #[test]
    fn identity_weight_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut lin = Linear::<f64>::new(3, 3, false, &mut rng);
        lin.weight.fill(0.0);
        for i in 0..3 {
            lin.weight.data_mut()[i * 3 + i] = 1.0;
        }
        let x = Tensor::from_fn(&[4, 3], |i| i as f64 * 0.25);
        assert_eq!(lin.forward(&x).unwrap(), x);
    }

    #[test]
    fn width_mismatch_is_dimension_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut lin = Linear::<f32>::new(4, 2, false, &mut rng);
        let x = Tensor::ones(&[2, 3]);
        assert!(matches!(lin.forward(&x), Err(Error::Dimension(_))));
    }

    #[test]
    fn rank3_batched_tokens() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut lin = Linear::<f64>::new(3, 2, true, &mut rng);
        let x = Tensor::ones(&[2, 5, 3]);
        let y = lin.forward(&x).unwrap();
        assert_eq!(y.shape(), &[2, 5, 2]);
    }
}
