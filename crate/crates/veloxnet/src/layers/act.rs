//! GeLU (tanh approximation) and ReLU.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

const GELU_C: f64 = 0.044715;

/// gelu(x) = 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
pub fn gelu<T: Scalar>(x: T) -> T {
    let half = T::from_f64(0.5);
    let a = T::from_f64((2.0 / std::f64::consts::PI).sqrt());
    let c = T::from_f64(GELU_C);
    half * x * (T::one() + (a * (x + c * x * x * x)).tanh())
}

pub fn gelu_grad<T: Scalar>(x: T) -> T {
    let half = T::from_f64(0.5);
    let a = T::from_f64((2.0 / std::f64::consts::PI).sqrt());
    let c = T::from_f64(GELU_C);
    let three = T::from_f64(3.0);
    let u = a * (x + c * x * x * x);
    let t = u.tanh();
    let du = a * (T::one() + three * c * x * x);
    half * (T::one() + t) + half * x * (T::one() - t * t) * du
}

pub fn relu<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActKind {
    Relu,
    Gelu,
}

pub struct Activation<T: Scalar> {
    pub kind: ActKind,
    cache: Option<Tensor<T>>,
}

impl<T: Scalar> Activation<T> {
    pub fn new(kind: ActKind) -> Self {
        Self { kind, cache: None }
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let out = match self.kind {
            ActKind::Relu => x.map(relu),
            ActKind::Gelu => x.map(gelu),
        };
        self.cache = Some(x.clone());
        Ok(out)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self
            .cache
            .take()
            .ok_or_else(|| Error::State("activation backward without forward".into()))?;
        let grad = match self.kind {
            ActKind::Relu => x.map(|v| if v > T::zero() { T::one() } else { T::zero() }),
            ActKind::Gelu => x.map(gelu_grad),
        };
        dy.mul(&grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_points_and_asymptote() {
        assert_eq!(gelu(0.0f64), 0.0);
        assert_eq!(relu(-3.0f64), 0.0);
        assert!((gelu(10.0f64) - 10.0).abs() < 1e-4);
        // high-precision evaluation of the tanh-approximation formula
        assert!((gelu(1.0f64) - 0.84119199060827670478).abs() < 1e-12);
    }

    #[test]
    fn gelu_grad_matches_finite_differences() {
        let h = 1e-6;
        for &x in &[-2.5f64, -0.3, 0.0, 0.7, 1.9] {
            let num = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((gelu_grad(x) - num).abs() < 1e-8, "x = {x}");
        }
    }
}
