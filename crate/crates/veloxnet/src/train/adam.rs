//! Adam with bias correction.

use crate::error::{Error, Result};
use crate::models::Model;
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One Adam update over a flat parameter slice:
/// m ← β1 m + (1−β1) g;  v ← β2 v + (1−β2) g²;
/// θ ← θ − lr·m̂ / (√v̂ + ε) with bias-corrected m̂, v̂ at step `t` (1-based).
pub fn adam_update<T: Scalar>(
    params: &mut [T],
    grads: &[T],
    m: &mut [T],
    v: &mut [T],
    t: u64,
    cfg: &AdamConfig,
) {
    let b1 = T::from_f64(cfg.beta1);
    let b2 = T::from_f64(cfg.beta2);
    let lr = T::from_f64(cfg.lr);
    let eps = T::from_f64(cfg.eps);
    let c1 = T::one() / T::from_f64(1.0 - cfg.beta1.powi(t as i32));
    let c2 = T::one() / T::from_f64(1.0 - cfg.beta2.powi(t as i32));
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = b1 * m[i] + (T::one() - b1) * g;
        v[i] = b2 * v[i] + (T::one() - b2) * g * g;
        let m_hat = m[i] * c1;
        let v_hat = v[i] * c2;
        params[i] = params[i] - lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Per-parameter first/second moments mirroring a model's parameter tensors,
/// in visitation order.
pub struct AdamState<T: Scalar> {
    pub cfg: AdamConfig,
    pub t: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(model: &mut Model<T>, cfg: AdamConfig) -> Self {
        let mut m = Vec::new();
        model.visit_params(&mut |_, value, _| m.push(Tensor::zeros(value.shape())));
        let v = m.clone();
        Self { cfg, t: 0, m, v }
    }

    /// Applies one step from the model's accumulated gradients. Refuses the
    /// whole step if any gradient is non-finite.
    pub fn step(&mut self, model: &mut Model<T>) -> Result<()> {
        let mut bad: Option<String> = None;
        model.visit_params(&mut |name, _, grad| {
            if bad.is_none() && !grad.all_finite() {
                bad = Some(name);
            }
        });
        if let Some(name) = bad {
            return Err(Error::Numeric(format!(
                "non-finite gradient in '{name}', step refused"
            )));
        }
        self.t += 1;
        let (t, cfg) = (self.t, self.cfg);
        let mut idx = 0usize;
        let (m, v) = (&mut self.m, &mut self.v);
        model.visit_params(&mut |_, value, grad| {
            adam_update(
                value.data_mut(),
                grad.data(),
                m[idx].data_mut(),
                v[idx].data_mut(),
                t,
                &cfg,
            );
            idx += 1;
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{GraphSpec, ModelKind};

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut p = [1.5f64, -0.25];
        let g = [0.0f64; 2];
        let (mut m, mut v) = ([0.0f64; 2], [0.0f64; 2]);
        adam_update(&mut p, &g, &mut m, &mut v, 1, &AdamConfig::with_lr(0.1));
        assert_eq!(p, [1.5, -0.25]);
    }

    #[test]
    fn quadratic_descent_matches_scalar_simulation() {
        // f(t) = t^2, t0 = 1, lr = 0.1. The oracle simulation shows |t|
        // decreasing monotonically through step 11, then momentum overshoots
        // zero; |t_50| ends well under 0.1.
        let cfg = AdamConfig::with_lr(0.1);
        let mut p = [1.0f64];
        let (mut m, mut v) = ([0.0f64], [0.0f64]);
        let mut prev = p[0].abs();
        for t in 1..=50u64 {
            let g = [2.0 * p[0]];
            adam_update(&mut p, &g, &mut m, &mut v, t, &cfg);
            if t <= 10 {
                assert!(p[0].abs() < prev, "step {t}: |{}| >= {prev}", p[0]);
            }
            prev = p[0].abs();
        }
        assert!(p[0].abs() < 0.1, "theta_50 = {}", p[0]);
        assert!((p[0] - -0.004818223222661105).abs() < 1e-9);
    }

    #[test]
    fn first_step_magnitude_is_about_lr() {
        // bias correction makes m̂/√v̂ ≈ sign(g) on the first step
        for g0 in [3.0f64, 0.5, -2.0] {
            let cfg = AdamConfig::with_lr(0.1);
            let mut p = [0.0f64];
            let (mut m, mut v) = ([0.0f64], [0.0f64]);
            adam_update(&mut p, &[g0], &mut m, &mut v, 1, &cfg);
            assert!((p[0].abs() - 0.1).abs() < 1e-8, "g = {g0}: step {}", p[0]);
            assert_eq!(p[0] < 0.0, g0 > 0.0);
        }
    }

    #[test]
    fn lr_zero_is_bit_identical_and_nan_refused() {
        let g = GraphSpec::new(ModelKind::VeloxnetReduced, 3)
            .build_graph()
            .unwrap();
        let mut model = Model::<f32>::init(g, 0).unwrap();
        let mut before = Vec::new();
        model.visit_params(&mut |_, t, _| before.extend_from_slice(t.data()));

        let mut adam = AdamState::new(&mut model, AdamConfig::with_lr(0.0));
        model.visit_params(&mut |_, _, g| g.fill(0.5));
        for _ in 0..3 {
            adam.step(&mut model).unwrap();
        }
        let mut after = Vec::new();
        model.visit_params(&mut |_, t, _| after.extend_from_slice(t.data()));
        assert!(before
            .iter()
            .zip(&after)
            .all(|(a, b)| a.to_bits() == b.to_bits()));

        model.visit_params(&mut |name, _, g| {
            if name == "conv10.weight" {
                g.data_mut()[0] = f32::NAN;
            }
        });
        assert!(matches!(adam.step(&mut model), Err(Error::Numeric(_))));
    }
}
