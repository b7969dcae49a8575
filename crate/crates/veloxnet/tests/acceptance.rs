//! Acceptance suite: one test per release criterion, each printing a
//! `criterion N ... : PASS` line on success (run with `--nocapture` to see
//! them). Tolerances are pinned in code.
//!
//! Run: `cargo test -p veloxnet --test acceptance -- --nocapture`

use veloxnet::accounting;
use veloxnet::data::{
    batches, load_checkpoint, read_tensor_bytes, save_checkpoint, synth_dataset, write_tensor_bytes,
    AugmentMode, Split,
};
use veloxnet::gmlp::{map_from_tokens, tokens_from_map, GmlpBlock, GmlpConfig, SpatialGatingUnit};
use veloxnet::gradcheck;
use veloxnet::layers::{MaxPool2d, Mode, Rounding};
use veloxnet::models::{
    build_squeezenet, build_veloxnet, Ablation, GraphSpec, Model, ModelKind, Preset,
};
use veloxnet::tensor::Tensor;
use veloxnet::train::{evaluate, fit, metrics_from_confusion, FitConfig};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criterion 1: exact reconstruction of every published per-layer parameter
/// count and both totals (tolerance 0).
#[test]
fn criterion_1_parameter_reconstruction() {
    let v = accounting::count(&build_veloxnet(5, Preset::TableI, Ablation::Full).unwrap());
    assert_eq!(v.row("conv1 (3x3)").unwrap().params, 4_212);
    assert_eq!(v.row("batchnorm1").unwrap().params, 6);
    for i in 2..=9 {
        assert_eq!(v.row(&format!("gMLP{i}")).unwrap().params, 49_296);
    }
    assert_eq!(v.row("conv10").unwrap().params, 780);
    assert_eq!(v.total_params(), 399_366);

    let s = accounting::count(&build_squeezenet(5).unwrap());
    assert_eq!(s.row("conv1 (7x7)").unwrap().params, 14_112);
    assert_eq!(s.row("batchnorm1").unwrap().params, 192);
    let fire = [
        12_064u64, 12_576, 45_632, 49_728, 105_312, 111_456, 189_568, 197_760,
    ];
    for (i, expect) in fire.iter().enumerate() {
        assert_eq!(s.row(&format!("fire{}", i + 2)).unwrap().params, *expect);
    }
    assert_eq!(s.row("conv10").unwrap().params, 2_570);
    assert_eq!(s.total_params(), 740_970);

    // formula-vs-allocation cross-check on both built models
    let g = build_veloxnet(5, Preset::TableI, Ablation::Full).unwrap();
    let mut m = Model::<f32>::init(g.clone(), 0).unwrap();
    accounting::cross_check(&g, &mut m).unwrap();
    let g = build_squeezenet(5).unwrap();
    let mut m = Model::<f32>::init(g.clone(), 0).unwrap();
    accounting::cross_check(&g, &mut m).unwrap();

    println!("criterion 1 (parameter reconstruction, exact): PASS");
}

/// Criterion 2: every intermediate output shape matches the published
/// output-size column for both models (tolerance 0).
#[test]
fn criterion_2_shape_reconstruction() {
    let v = build_veloxnet(5, Preset::TableI, Ablation::Full).unwrap();
    let expect_v: &[(&str, (usize, usize, usize))] = &[
        ("conv1 (3x3)", (156, 111, 111)),
        ("batchnorm1", (156, 111, 111)),
        ("maxpool1", (156, 55, 55)),
        ("gMLP2", (156, 55, 55)),
        ("gMLP3", (156, 55, 55)),
        ("maxpool3", (156, 27, 27)),
        ("gMLP4", (156, 27, 27)),
        ("gMLP5", (156, 27, 27)),
        ("maxpool5", (156, 13, 13)),
        ("gMLP6", (156, 13, 13)),
        ("gMLP7", (156, 13, 13)),
        ("gMLP8", (156, 13, 13)),
        ("gMLP9", (156, 13, 13)),
        ("conv10", (5, 13, 13)),
        ("avgpool10", (5, 1, 1)),
    ];
    for (name, shape) in expect_v {
        assert_eq!(v.node(name).unwrap().out_shape, *shape, "{name}");
    }
    let s = build_squeezenet(5).unwrap();
    let expect_s: &[(&str, (usize, usize, usize))] = &[
        ("conv1 (7x7)", (96, 112, 112)),
        ("batchnorm1", (96, 112, 112)),
        ("maxpool1", (96, 56, 56)),
        ("fire2", (128, 56, 56)),
        ("fire3", (128, 56, 56)),
        ("fire4", (256, 56, 56)),
        ("maxpool4", (256, 28, 28)),
        ("fire5", (256, 28, 28)),
        ("fire6", (384, 28, 28)),
        ("fire7", (384, 28, 28)),
        ("fire8", (512, 28, 28)),
        ("maxpool8", (512, 14, 14)),
        ("fire9", (512, 14, 14)),
        ("conv10", (5, 14, 14)),
        ("avgpool10", (5, 1, 1)),
    ];
    for (name, shape) in expect_s {
        assert_eq!(s.node(name).unwrap().out_shape, *shape, "{name}");
    }

    // executed shapes are asserted per node inside forward
    let mut mv = Model::<f32>::init(v, 0).unwrap();
    let x = Tensor::zeros(&[2, 3, 224, 224]);
    assert_eq!(mv.forward(&x, Mode::Train).unwrap().shape(), &[2, 5]);
    let mut ms = Model::<f32>::init(s, 0).unwrap();
    let x = Tensor::zeros(&[1, 3, 224, 224]);
    assert_eq!(ms.forward(&x, Mode::Train).unwrap().shape(), &[1, 5]);

    println!("criterion 2 (shape reconstruction, exact): PASS");
}

/// Criterion 3: MAC totals within ±5% of the published 461M / 806M figures.
#[test]
fn criterion_3_flops_reconstruction() {
    let v = accounting::count(&build_veloxnet(5, Preset::TableI, Ablation::Full).unwrap());
    let rel_v = (v.total_macs() as f64 - 461e6).abs() / 461e6;
    assert!(rel_v < 0.05, "veloxnet {} MACs is {rel_v:.3} off", v.total_macs());

    let s = accounting::count(&build_squeezenet(5).unwrap());
    let rel_s = (s.total_macs() as f64 - 806e6).abs() / 806e6;
    assert!(rel_s < 0.05, "squeezenet {} MACs is {rel_s:.3} off", s.total_macs());

    println!(
        "criterion 3 (FLOPs within 5%): PASS (veloxnet {:.1}M at {:.1}%, squeezenet {:.1}M at {:.1}%)",
        v.total_macs() as f64 / 1e6,
        rel_v * 100.0,
        s.total_macs() as f64 / 1e6,
        rel_s * 100.0
    );
}

/// Criterion 4: storage = 4 bytes per parameter; 1.52 MiB at two decimals.
#[test]
fn criterion_4_size_reconstruction() {
    let v = accounting::count(&build_veloxnet(5, Preset::TableI, Ablation::Full).unwrap());
    assert_eq!(v.storage_bytes(), 399_366 * 4);
    assert_eq!(v.storage_bytes(), 1_597_464);
    let mib_2dp = (v.storage_mib_binary() * 100.0).round() / 100.0;
    assert_eq!(mib_2dp, 1.52);
    println!("criterion 4 (size 1.52 MiB): PASS");
}

/// Criterion 5: finite differences vs analytic gradients — every layer under
/// 1e-5, reduced end-to-end models under 1e-4 (double precision).
#[test]
fn criterion_5_gradient_correctness() {
    for res in gradcheck::layer_suite(20_240_817, 1e-5) {
        assert!(
            res.passed(),
            "{}: max rel err {:.3e}",
            res.name,
            res.max_rel_err
        );
    }
    for (kind, preset) in [
        (ModelKind::VeloxnetReduced, Preset::TableI),
        (ModelKind::VeloxnetReduced, Preset::PaperEq),
        (ModelKind::SqueezenetReduced, Preset::TableI),
    ] {
        let spec = GraphSpec::new(kind, 3).with_preset(preset);
        let res = gradcheck::model_check(spec, 7, 1e-4).unwrap();
        assert!(
            res.passed(),
            "{} ({}): max rel err {:.3e} over {} params",
            res.name,
            preset.as_str(),
            res.max_rel_err,
            res.checked
        );
    }
    println!("criterion 5 (gradient correctness): PASS");
}

/// Criterion 6: structural identities, all bit-exact.
#[test]
fn criterion_6_structural_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);

    // residual identity: V = 0 forces block(X) = X for every configuration
    for cfg in [
        GmlpConfig::table_i(156, 169),
        GmlpConfig::paper_eq(156, 169),
    ] {
        let mut block = GmlpBlock::<f32>::init(cfg, &mut rng).unwrap();
        block.v_weight_mut().fill(0.0);
        let x = Tensor::from_fn(&[1, 169, 156], |_| rng.gen_range(-2.0f32..2.0));
        let y = block.forward(&x).unwrap();
        assert_eq!(y, x);
    }

    // SGU init identity (dense): W_g = 0, b_g = 1 gives SGU(Z) = Z1 / Z
    let z = Tensor::from_fn(&[12, 8], |_| rng.gen_range(-2.0f64..2.0));
    let mut sgu = SpatialGatingUnit::<f64>::init(GmlpConfig::paper_eq(8, 12)).unwrap();
    let (z1, _) = z.split_channels().unwrap();
    assert_eq!(sgu.forward(&z).unwrap(), z1);
    let mut cfg_none = GmlpConfig::table_i(8, 12);
    cfg_none.spatial_mixing = veloxnet::gmlp::SpatialMixing::Dense;
    let mut sgu = SpatialGatingUnit::<f64>::init(cfg_none).unwrap();
    assert_eq!(sgu.forward(&z).unwrap(), z);

    // split/concat and tokens/map roundtrips
    let t = Tensor::from_fn(&[7, 10], |_| rng.gen_range(-1.0f32..1.0));
    let (a, b) = t.split_channels().unwrap();
    assert_eq!(Tensor::concat_channels(&a, &b).unwrap(), t);
    let map = Tensor::from_fn(&[2, 156, 13, 13], |_| rng.gen_range(-1.0f32..1.0));
    let tokens = tokens_from_map(&map).unwrap();
    assert_eq!(tokens.shape(), &[2, 169, 156]);
    assert_eq!(map_from_tokens(&tokens, 13, 13).unwrap(), map);

    // maxpool backward conserves gradient mass
    let mut pool = MaxPool2d::<f64>::new(3, 2, Rounding::Floor);
    let x = Tensor::from_fn(&[2, 4, 9, 9], |_| rng.gen_range(-1.0..1.0));
    let y = pool.forward(&x).unwrap();
    let dy = Tensor::from_fn(y.shape(), |_| rng.gen_range(-1.0..1.0));
    let dx = pool.backward(&dy).unwrap();
    let mass_in: f64 = dx.data().iter().sum();
    let mass_out: f64 = dy.data().iter().sum();
    assert!((mass_in - mass_out).abs() < 1e-12);

    println!("criterion 6 (structural invariants): PASS");
}

/// Criterion 7: weighted metrics equal a brute-force per-sample oracle on
/// 100+ random confusion matrices, within 1e-12.
#[test]
fn criterion_7_metric_correctness() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..120 {
        let k = rng.gen_range(2..=6);
        let mut confusion = vec![vec![0u64; k]; k];
        loop {
            for row in confusion.iter_mut() {
                for v in row.iter_mut() {
                    *v = rng.gen_range(0..9);
                }
            }
            if confusion.iter().flatten().sum::<u64>() > 0 {
                break;
            }
        }
        // brute-force oracle over expanded (true, pred) pairs
        let mut pairs = Vec::new();
        for (t, row) in confusion.iter().enumerate() {
            for (p, &n) in row.iter().enumerate() {
                for _ in 0..n {
                    pairs.push((t, p));
                }
            }
        }
        let n = pairs.len() as f64;
        let (mut wp, mut wr, mut wf) = (0.0f64, 0.0f64, 0.0f64);
        for c in 0..k {
            let tp = pairs.iter().filter(|&&(t, p)| t == c && p == c).count() as f64;
            let pred = pairs.iter().filter(|&&(_, p)| p == c).count() as f64;
            let sup = pairs.iter().filter(|&&(t, _)| t == c).count() as f64;
            let p = if pred > 0.0 { tp / pred } else { 0.0 };
            let r = if sup > 0.0 { tp / sup } else { 0.0 };
            let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
            wp += sup / n * p;
            wr += sup / n * r;
            wf += sup / n * f;
        }
        let m = metrics_from_confusion(&confusion, 0.0);
        assert!((m.weighted_precision - wp).abs() < 1e-12, "trial {trial}");
        assert!((m.weighted_recall - wr).abs() < 1e-12, "trial {trial}");
        assert!((m.weighted_f1 - wf).abs() < 1e-12, "trial {trial}");
    }
    println!("criterion 7 (metric correctness vs oracle): PASS");
}

/// Criterion 8: desk-scale learnability. Full VeloxNet (table-i, d = 156)
/// with Adam lr 0.001 and batch 8 on the seeded 5-class synthetic set must
/// reach ≥95% train accuracy within 200 epochs and cut the training loss to
/// under 20% of the first epoch's.
#[test]
fn criterion_8_desk_scale_learnability() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth_dataset(dir.path(), 5, 8, 2024).unwrap();
    let graph = build_veloxnet(5, Preset::TableI, Ablation::Full).unwrap();
    let mut model = Model::<f32>::init(graph, 1).unwrap();
    let cfg = FitConfig {
        epochs: 200,
        lr: 0.001,
        batch: 8,
        seed: 9,
        checkpoint: None,
    };
    let mut first_loss = f64::NAN;
    let mut reached = None;
    let log = fit(&mut model, &manifest, &cfg, |model, row| {
        if row.epoch == 1 {
            first_loss = row.train_loss;
        }
        // the accuracy pass only matters once the loss condition holds
        let loss_ok = row.train_loss < 0.2 * first_loss;
        let acc = if loss_ok {
            evaluate(model, &manifest, Split::Train).unwrap().accuracy
        } else {
            0.0
        };
        println!(
            "  epoch {:>3}: train loss {:.4} (first {:.4}), train acc {}",
            row.epoch,
            row.train_loss,
            first_loss,
            if loss_ok { format!("{acc:.3}") } else { "-".into() }
        );
        let done = loss_ok && acc >= 0.95;
        if done {
            reached = Some((row.epoch, acc, row.train_loss));
        }
        !done
    })
    .unwrap();
    let (epoch, acc, loss) = reached.unwrap_or_else(|| {
        panic!(
            "not learned in {} epochs: last loss {:.4} vs first {:.4}",
            log.len(),
            log.last().unwrap().train_loss,
            first_loss
        )
    });
    assert!(epoch <= 200 && acc >= 0.95 && loss < 0.2 * first_loss);
    println!(
        "criterion 8 (desk-scale learnability): PASS (acc {:.3}, loss {:.4} = {:.1}% of epoch-1 {:.4}, epoch {epoch})",
        acc,
        loss,
        100.0 * loss / first_loss,
        first_loss
    );
}

/// Criterion 9: bit-exact file formats and checkpoint logits reproduction.
#[test]
fn criterion_9_format_stability() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);

    // tensor file roundtrip
    let t = Tensor::<f32>::from_fn(&[3, 256, 256], |_| rng.gen_range(-5.0f32..5.0));
    let bytes = write_tensor_bytes(&t);
    let back = read_tensor_bytes(&bytes).unwrap().into_f32().unwrap();
    assert!(t
        .data()
        .iter()
        .zip(back.data())
        .all(|(a, b)| a.to_bits() == b.to_bits()));

    // checkpoint roundtrip reproduces infer-mode logits bit-exactly
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth_dataset(dir.path().join("data"), 3, 4, 3).unwrap();
    let graph = GraphSpec::new(ModelKind::SqueezenetReduced, 3)
        .with_input(224)
        .build_graph()
        .unwrap();
    let mut model = Model::<f32>::init(graph.clone(), 4).unwrap();
    let cfg = FitConfig {
        epochs: 1,
        lr: 0.001,
        batch: 4,
        seed: 1,
        checkpoint: None,
    };
    let _ = fit(&mut model, &manifest, &cfg, |_, _| true).unwrap();
    let ckpt_path = dir.path().join("model.vlxc");
    save_checkpoint(&ckpt_path, &mut model).unwrap();

    let stream = batches(
        &manifest,
        Split::Test,
        8,
        false,
        AugmentMode::Eval,
        ChaCha8Rng::seed_from_u64(0),
    )
    .unwrap();
    let (batch, _) = stream.into_iter().next().unwrap().unwrap();
    let reference = model.forward(&batch, Mode::Infer).unwrap();

    let mut restored = Model::<f32>::init(graph, 777).unwrap();
    load_checkpoint(&ckpt_path)
        .unwrap()
        .apply(&mut restored)
        .unwrap();
    let logits = restored.forward(&batch, Mode::Infer).unwrap();
    assert!(reference
        .data()
        .iter()
        .zip(logits.data())
        .all(|(a, b)| a.to_bits() == b.to_bits()));

    println!("criterion 9 (format stability): PASS");
}
