//! Central finite-difference verification of every analytic backward pass.
//!
//! The numeric route only ever evaluates forward passes, so it stays
//! independent of the gradient code it is checking. All checks run in double
//! precision. Relative error uses `|a - n| / max(|a|, |n|, 1)` so that
//! near-zero gradients are compared absolutely.

use crate::error::Result;
use crate::fire::{Fire, FireConfig};
use crate::gmlp::{GmlpBlock, GmlpConfig, SpatialGatingUnit};
use crate::layers::{
    softmax_cross_entropy, ActKind, Activation, BatchNorm2d, Conv2d, GlobalAvgPool,
    GroupAffineNorm, LayerNormTokens, Linear, MaxPool2d, Mode, Rounding,
};
use crate::models::{GraphSpec, Model};
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: String,
    pub max_rel_err: f64,
    pub tol: f64,
    pub checked: usize,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_err.is_finite() && self.max_rel_err < self.tol
    }
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

/// Adds `delta` to the flat parameter index `idx` of whatever tensors the
/// visitor yields.
fn perturb<L>(
    layer: &mut L,
    visit: &impl Fn(&mut L, &mut dyn FnMut(&mut Tensor<f64>)),
    idx: usize,
    delta: f64,
) {
    let mut pos = 0usize;
    visit(layer, &mut |t| {
        let n = t.len();
        if idx >= pos && idx < pos + n {
            t.data_mut()[idx - pos] += delta;
        }
        pos += n;
    });
}

/// Core driver: checks the analytic gradient of `sum(r ⊙ forward(x))` with
/// respect to every parameter coordinate and every input coordinate.
#[allow(clippy::too_many_arguments)]
fn check_against_fd<L>(
    name: &str,
    layer: &mut L,
    x: &mut Tensor<f64>,
    r: &Tensor<f64>,
    tol: f64,
    step: f64,
    mut fwd: impl FnMut(&mut L, &Tensor<f64>) -> Tensor<f64>,
    mut bwd: impl FnMut(&mut L, &Tensor<f64>) -> Tensor<f64>,
    collect_grads: impl Fn(&mut L) -> Vec<f64>,
    visit: impl Fn(&mut L, &mut dyn FnMut(&mut Tensor<f64>)),
) -> CheckResult {
    // analytic pass
    let _ = fwd(layer, x);
    let dx = bwd(layer, r);
    let analytic_params = collect_grads(layer);

    let mut max_err: f64 = 0.0;
    let mut checked = 0usize;
    for (i, &a) in analytic_params.iter().enumerate() {
        perturb(layer, &visit, i, step);
        let lp = dot(fwd(layer, x).data(), r.data());
        perturb(layer, &visit, i, -2.0 * step);
        let lm = dot(fwd(layer, x).data(), r.data());
        perturb(layer, &visit, i, step);
        max_err = max_err.max(rel_err(a, (lp - lm) / (2.0 * step)));
        checked += 1;
    }
    for i in 0..x.len() {
        let a = dx.data()[i];
        x.data_mut()[i] += step;
        let lp = dot(fwd(layer, x).data(), r.data());
        x.data_mut()[i] -= 2.0 * step;
        let lm = dot(fwd(layer, x).data(), r.data());
        x.data_mut()[i] += step;
        max_err = max_err.max(rel_err(a, (lp - lm) / (2.0 * step)));
        checked += 1;
    }
    CheckResult {
        name: name.into(),
        max_rel_err: max_err,
        tol,
        checked,
    }
}

macro_rules! grads_of {
    () => {
        |l| {
            let mut g = Vec::new();
            l.visit_params("g", &mut |_, _, grad| g.extend_from_slice(grad.data()));
            g
        }
    };
}

macro_rules! params_of {
    () => {
        |l: &mut _, f: &mut dyn FnMut(&mut Tensor<f64>)| {
            l.visit_params("p", &mut |_, value, _| f(value))
        }
    };
}

fn check_conv(seed: u64, tol: f64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut conv = Conv2d::<f64>::new(3, 4, 3, 2, 1, true, &mut rng);
    let mut x = rand_tensor(&mut rng, &[2, 3, 5, 5]);
    let y_shape = [2, 4, 3, 3];
    let r = rand_tensor(&mut rng, &y_shape);
    check_against_fd(
        "conv2d",
        &mut conv,
        &mut x,
        &r,
        tol,
        FD_STEP,
        |l, x| l.forward(x).unwrap(),
        |l, r| {
            l.zero_grads();
            l.backward(r).unwrap()
        },
        grads_of!(),
        params_of!(),
    )
}

fn check_batchnorm(seed: u64, tol: f64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bn = BatchNorm2d::<f64>::new(3);
    bn.gamma.data_mut().copy_from_slice(&[1.1, 0.9, 1.3]);
    bn.beta.data_mut().copy_from_slice(&[0.1, -0.2, 0.3]);
    let mut x = rand_tensor(&mut rng, &[4, 3, 3, 3]);
    let r = rand_tensor(&mut rng, &[4, 3, 3, 3]);
    check_against_fd(
        "batchnorm2d",
        &mut bn,
        &mut x,
        &r,
        tol,
        FD_STEP,
        |l, x| l.forward(x, Mode::Train).unwrap(),
        |l, r| {
            l.zero_grads();
            l.backward(r).unwrap()
        },
        grads_of!(),
        params_of!(),
    )
}

fn check_group_norm(seed: u64, tol: f64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gn = GroupAffineNorm::<f64>::new(3);
    gn.gamma.data_mut().copy_from_slice(&[1.2, 0.8, 1.1]);
    gn.beta.data_mut().copy_from_slice(&[0.0, 0.1, -0.1]);
    let mut x = rand_tensor(&mut rng, &[2, 6, 3, 3]);
    let r = rand_tensor(&mut rng, &[2, 6, 3, 3]);
    check_against_fd(
        "group_affine_norm",
        &mut gn,
        &mut x,
        &r,
        tol,
        FD_STEP,
        |l, x| l.forward(x).unwrap(),
        |l, r| {
            l.zero_grads();
            l.backward(r).unwrap()
        },
        grads_of!(),
        params_of!(),
    )
}

fn check_layernorm(seed: u64, tol: f64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ln = LayerNormTokens::<f64>::new(7);
    for v in ln.gamma.data_mut() {
        *v = rng.gen_range(0.5..1.5);
    }
    let mut x = rand_tensor(&mut rng, &[5, 7]);
    let r = rand_tensor(&mut rng, &[5, 7]);
    check_against_fd(
        "layernorm_tokens",
        &mut ln,
        &mut x,
        &r,
        tol,
        FD_STEP,
        |l, x| l.forward(x).unwrap(),
        |l, r| {
            l.zero_grads();
            l.backward(r).unwrap()
        },
        grads_of!(),
        params_of!(),
    )
}

fn check_linear(seed: u64, tol: f64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lin = Linear::<f64>::new(4, 3, true, &mut rng);
    let mut x = rand_tensor(&mut rng, &[6, 4]);
    let r = rand_tensor(&mut rng, &[6, 3]);
    check_against_fd(
        "linear",
        &mut lin,
        &mut x,
        &r,
        tol,
        FD_STEP,
        |l, x| l.forward(x).unwrap(),
        |l, r| {
            l.zero_grads();
            l.backward(r).unwrap()
        },
        grads_of!(),
        params_of!(),
    )
}

fn check_activation(kind: ActKind, name: &str, seed: u64, tol: f64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut act = Activation::<f64>::new(kind);
    // keep inputs away from the ReLU kink
    let mut x = Tensor::from_fn(&[3, 8], |_| {
        let v: f64 = rng.gen_range(0.05..1.0);
        if rng.gen_bool(0.5) {
            v
        } else {
            -v
        }
    });
    let r = rand_tensor(&mut rng, &[3, 8]);
    check_against_fd(
        name,
        &mut act,
        &mut x,
        &r,
        tol,
        1e-6,
        |l, x| l.forward(x).unwrap(),
        |l, r| l.backward(r).unwrap(),
        |_| Vec::new(),
        |_, _| {},
    )
}

fn check_maxpool(rounding: Rounding, name: &str, seed: u64, tol: f64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool = MaxPool2d::<f64>::new(3, 2, rounding);
    let mut x = rand_tensor(&mut rng, &[2, 2, 7, 7]);
    let out_extent = crate::layers::pool_out_extent(7, 3, 2, rounding).unwrap();
    let r = rand_tensor(&mut rng, &[2, 2, out_extent, out_extent]);
    // tiny step keeps the perturbation from flipping any argmax
    check_against_fd(
        name,
        &mut pool,
        &mut x,
        &r,
        tol,
        1e-7,
        |l, x| l.forward(x).unwrap(),
        |l, r| l.backward(r).unwrap(),
        |_| Vec::new(),
        |_, _| {},
    )
}

fn check_global_avgpool(seed: u64, tol: f64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gap = GlobalAvgPool::<f64>::new();
    let mut x = rand_tensor(&mut rng, &[2, 3, 4, 4]);
    let r = rand_tensor(&mut rng, &[2, 3]);
    check_against_fd(
        "global_avgpool",
        &mut gap,
        &mut x,
        &r,
        tol,
        FD_STEP,
        |l, x| l.forward(x).unwrap(),
        |l, r| l.backward(r).unwrap(),
        |_| Vec::new(),
        |_, _| {},
    )
}

fn check_loss(seed: u64, tol: f64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let logits = rand_tensor(&mut rng, &[4, 5]);
    let labels: Vec<usize> = (0..4).map(|_| rng.gen_range(0..5)).collect();
    let (_, dl) = softmax_cross_entropy(&logits, &labels).unwrap();
    let mut max_err: f64 = 0.0;
    let mut work = logits.clone();
    for i in 0..work.len() {
        work.data_mut()[i] += FD_STEP;
        let (lp, _) = softmax_cross_entropy(&work, &labels).unwrap();
        work.data_mut()[i] -= 2.0 * FD_STEP;
        let (lm, _) = softmax_cross_entropy(&work, &labels).unwrap();
        work.data_mut()[i] += FD_STEP;
        max_err = max_err.max(rel_err(dl.data()[i], (lp - lm) / (2.0 * FD_STEP)));
    }
    CheckResult {
        name: "softmax_cross_entropy".into(),
        max_rel_err: max_err,
        tol,
        checked: logits.len(),
    }
}

fn sgu_with_random_params(cfg: GmlpConfig, rng: &mut ChaCha8Rng) -> SpatialGatingUnit<f64> {
    let mut sgu = SpatialGatingUnit::<f64>::init(cfg).unwrap();
    // move off the identity init so all gradient paths carry signal
    if let Some(wg) = &mut sgu.wg {
        for v in wg.data_mut() {
            *v = rng.gen_range(-0.5..0.5);
        }
    }
    if let Some(bg) = &mut sgu.bg {
        for v in bg.data_mut() {
            *v = rng.gen_range(0.5..1.5);
        }
    }
    sgu
}

fn check_sgu(cfg: GmlpConfig, name: &str, seed: u64, tol: f64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sgu = sgu_with_random_params(cfg, &mut rng);
    let width = match cfg.split {
        crate::gmlp::SplitMode::Half => cfg.d_model,
        crate::gmlp::SplitMode::None => cfg.d_model,
    };
    let mut x = rand_tensor(&mut rng, &[2, cfg.n_tokens, width]);
    let r = rand_tensor(&mut rng, &[2, cfg.n_tokens, cfg.gate_width()]);
    check_against_fd(
        name,
        &mut sgu,
        &mut x,
        &r,
        tol,
        FD_STEP,
        |l, x| l.forward(x).unwrap(),
        |l, r| {
            l.zero_grads();
            l.backward(r).unwrap()
        },
        grads_of!(),
        params_of!(),
    )
}

fn check_gmlp_block(cfg: GmlpConfig, name: &str, seed: u64, tol: f64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut block = GmlpBlock::<f64>::init(cfg, &mut rng).unwrap();
    if let Some(sgu) = block.sgu_mut() {
        if let Some(wg) = &mut sgu.wg {
            for v in wg.data_mut() {
                *v = rng.gen_range(-0.5..0.5);
            }
        }
    }
    let mut x = rand_tensor(&mut rng, &[2, cfg.n_tokens, cfg.d_model]);
    let r = rand_tensor(&mut rng, &[2, cfg.n_tokens, cfg.d_model]);
    check_against_fd(
        name,
        &mut block,
        &mut x,
        &r,
        tol,
        FD_STEP,
        |l, x| l.forward(x).unwrap(),
        |l, r| {
            l.zero_grads();
            l.backward(r).unwrap()
        },
        grads_of!(),
        params_of!(),
    )
}

fn check_fire(seed: u64, tol: f64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fire = Fire::<f64>::init(FireConfig::new(6, 2, 4, 4), &mut rng);
    let mut x = rand_tensor(&mut rng, &[2, 6, 5, 5]);
    let r = rand_tensor(&mut rng, &[2, 8, 5, 5]);
    check_against_fd(
        "fire",
        &mut fire,
        &mut x,
        &r,
        tol,
        FD_STEP,
        |l, x| l.forward(x, Mode::Train).unwrap(),
        |l, r| {
            l.zero_grads();
            l.backward(r).unwrap()
        },
        grads_of!(),
        params_of!(),
    )
}

/// The per-layer finite-difference suite.
pub fn layer_suite(seed: u64, tol: f64) -> Vec<CheckResult> {
    vec![
        check_conv(seed, tol),
        check_batchnorm(seed.wrapping_add(1), tol),
        check_group_norm(seed.wrapping_add(2), tol),
        check_layernorm(seed.wrapping_add(3), tol),
        check_linear(seed.wrapping_add(4), tol),
        check_activation(ActKind::Gelu, "gelu", seed.wrapping_add(5), tol),
        check_activation(ActKind::Relu, "relu", seed.wrapping_add(6), tol),
        check_maxpool(Rounding::Floor, "maxpool2d_floor", seed.wrapping_add(7), tol),
        check_maxpool(Rounding::Ceil, "maxpool2d_ceil", seed.wrapping_add(8), tol),
        check_global_avgpool(seed.wrapping_add(9), tol),
        check_loss(seed.wrapping_add(10), tol),
        check_sgu(
            GmlpConfig::paper_eq(6, 4),
            "sgu_paper_eq",
            seed.wrapping_add(11),
            tol,
        ),
        check_sgu(
            GmlpConfig::table_i(6, 4),
            "sgu_table_i",
            seed.wrapping_add(12),
            tol,
        ),
        check_gmlp_block(
            GmlpConfig::paper_eq(6, 9),
            "gmlp_block_paper_eq",
            seed.wrapping_add(13),
            tol,
        ),
        check_gmlp_block(
            GmlpConfig::table_i(6, 9),
            "gmlp_block_table_i",
            seed.wrapping_add(14),
            tol,
        ),
        check_fire(seed.wrapping_add(15), tol),
    ]
}

/// End-to-end check: the gradient of the scalar training loss with respect
/// to a sample of parameters (at least 1%, a few from every tensor) matches
/// finite differences on a freshly built model.
pub fn model_check(spec: GraphSpec, seed: u64, tol: f64) -> Result<CheckResult> {
    let graph = spec.build_graph()?;
    let mut model = Model::<f64>::init(graph, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(100));
    let (c, h, w) = model.graph.input_shape;
    let batch = Tensor::from_fn(&[2, c, h, w], |_| rng.gen_range(-1.0..1.0));
    let labels: Vec<usize> = (0..2).map(|_| rng.gen_range(0..spec.classes)).collect();

    // analytic gradients
    model.zero_grads();
    let logits = model.forward(&batch, Mode::Train)?;
    let (_, dlogits) = softmax_cross_entropy(&logits, &labels)?;
    model.backward(&dlogits)?;
    let mut analytic = Vec::new();
    model.visit_params(&mut |_, _, g| analytic.extend_from_slice(g.data()));

    // pick at least 1% of each tensor and at least two coordinates per tensor
    let mut picks: Vec<usize> = Vec::new();
    let mut pos = 0usize;
    model.visit_params(&mut |_, t, _| {
        let n = t.len();
        let k = (n / 100).max(2).min(n);
        for _ in 0..k {
            picks.push(pos + rng.gen_range(0..n));
        }
        pos += n;
    });
    picks.sort_unstable();
    picks.dedup();

    let loss_at = |model: &mut Model<f64>| -> f64 {
        let logits = model.forward(&batch, Mode::Train).unwrap();
        let (loss, _) = softmax_cross_entropy(&logits, &labels).unwrap();
        loss
    };
    let set = |model: &mut Model<f64>, idx: usize, delta: f64| {
        let mut p = 0usize;
        model.visit_params(&mut |_, t, _| {
            let n = t.len();
            if idx >= p && idx < p + n {
                t.data_mut()[idx - p] += delta;
            }
            p += n;
        });
    };

    let mut max_err: f64 = 0.0;
    for &idx in &picks {
        set(&mut model, idx, FD_STEP);
        let lp = loss_at(&mut model);
        set(&mut model, idx, -2.0 * FD_STEP);
        let lm = loss_at(&mut model);
        set(&mut model, idx, FD_STEP);
        let numeric = (lp - lm) / (2.0 * FD_STEP);
        max_err = max_err.max(rel_err(analytic[idx], numeric));
    }
    Ok(CheckResult {
        name: format!("model:{}", spec.kind.as_str()),
        max_rel_err: max_err,
        tol,
        checked: picks.len(),
    })
}
