use std::fs;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use colorcaps_core::capsnet::{build_model, forward, train_step, ColorCapsNetConfig, ModelError, ModelParams, Optimizer};
use colorcaps_core::checkpoint::{Checkpoint, VGG_NAME_MAP};
use colorcaps_core::data::{build_pairs, image_to_lab, stack_batch, DatasetManifest};
use colorcaps_core::netpbm::{write_image, Image};
use colorcaps_core::ops::{AdamHyper, Mode};
use colorcaps_core::Tensor;

fn gray_batch(nb: usize, seed: u64) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(&[nb, 1, 9, 9], |_| rng.gen())
}

fn bits(t: &Tensor<f32>) -> Vec<u32> {
    t.data().iter().map(|v| v.to_bits()).collect()
}

fn vgg_checkpoint(f: usize, seed: u64) -> Checkpoint {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ckpt = Checkpoint::new();
    let mut put = |name: &str, shape: &[usize]| {
        ckpt.push(name, Tensor::from_fn(shape, |_| rng.gen_range(-0.3..0.3))).unwrap();
    };
    put("vgg.conv1_1.weight", &[f, 1, 3, 3]);
    put("vgg.conv1_1.bias", &[f]);
    put("vgg.conv1_2.weight", &[f, f, 3, 3]);
    put("vgg.conv1_2.bias", &[f]);
    ckpt
}

#[test]
fn imported_front_end_matches_direct_assignment() {
    let cfg = ColorCapsNetConfig::reduced();
    let vgg = vgg_checkpoint(cfg.conv_channels, 1);
    let imported = build_model(&cfg, 9, Some(&vgg)).unwrap();
    let mut manual = build_model(&cfg, 9, None).unwrap();
    for (src, dst) in VGG_NAME_MAP {
        *manual.slot_mut(dst).unwrap() = vgg.get(src).unwrap().clone();
    }
    assert_eq!(imported.parameters(), manual.parameters());
    let x = gray_batch(3, 2);
    let (a, b) = (
        forward(&imported, &x, Mode::Train).unwrap().lab,
        forward(&manual, &x, Mode::Train).unwrap().lab,
    );
    assert_eq!(bits(&a), bits(&b));
}

#[test]
fn import_names_every_bad_tensor() {
    let cfg = ColorCapsNetConfig::reduced();
    let mut vgg = Checkpoint::new();
    vgg.push("vgg.conv1_1.weight", Tensor::zeros(&[64, 1, 3, 3])).unwrap();
    vgg.push("vgg.conv1_2.weight", Tensor::zeros(&[8, 8, 3, 3])).unwrap();
    vgg.push("vgg.conv1_2.bias", Tensor::zeros(&[8])).unwrap();
    match build_model(&cfg, 0, Some(&vgg)) {
        Err(ModelError::Import { names, .. }) => {
            assert_eq!(names, vec!["vgg.conv1_1.weight".to_string(), "vgg.conv1_1.bias".to_string()]);
        }
        other => panic!("expected an import error, got {other:?}"),
    }
}

#[test]
fn disk_round_trip_preserves_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ColorCapsNetConfig::reduced();
    let mut model = build_model(&cfg, 4, None).unwrap();
    let mut opt = Optimizer::new(&model, AdamHyper::default());
    let lab = Tensor::from_fn(&[4, 3, 9, 9], |i| (i % 17) as f32 / 17.0);
    for _ in 0..3 {
        let step = train_step(&model, &opt, &gray_batch(4, 5), &lab).unwrap();
        model = step.model;
        opt = step.optimizer;
    }
    let path = dir.path().join("m.ccps");
    model.to_checkpoint().save(&path).unwrap();
    let loaded = ModelParams::from_checkpoint(&Checkpoint::load(&path).unwrap()).unwrap();
    assert_eq!(loaded.parameters(), model.parameters());
    assert_eq!(loaded.buffers(), model.buffers());
    let x = gray_batch(6, 8);
    for mode in [Mode::Train, Mode::Infer] {
        assert_eq!(
            bits(&forward(&model, &x, mode).unwrap().lab),
            bits(&forward(&loaded, &x, mode).unwrap().lab)
        );
    }
}

#[test]
fn small_batch_overfits() {
    let cfg = ColorCapsNetConfig::reduced();
    let mut model = build_model(&cfg, 6, None).unwrap();
    let mut opt = Optimizer::new(&model, AdamHyper::default());
    let gray = gray_batch(4, 7);
    let lab = Tensor::from_fn(&[4, 3, 9, 9], |i| 0.2 + 0.6 * ((i as f32) * 0.05).sin().abs());
    let mut losses = Vec::new();
    for _ in 0..200 {
        let step = train_step(&model, &opt, &gray, &lab).unwrap();
        losses.push(step.loss);
        model = step.model;
        opt = step.optimizer;
    }
    assert!(losses[199] < 0.25 * losses[0], "{} -> {}", losses[0], losses[199]);
}

#[test]
fn seeds_decide_the_trajectory() {
    let cfg = ColorCapsNetConfig::reduced();
    let lab = Tensor::from_fn(&[3, 3, 9, 9], |i| (i % 5) as f32 / 5.0);
    let trajectory = |seed| {
        let mut model = build_model(&cfg, seed, None).unwrap();
        let mut opt = Optimizer::new(&model, AdamHyper::default());
        let mut losses = Vec::new();
        for _ in 0..4 {
            let step = train_step(&model, &opt, &gray_batch(3, 1), &lab).unwrap();
            losses.push(step.loss.to_bits());
            model = step.model;
            opt = step.optimizer;
        }
        losses
    };
    assert_eq!(trajectory(10), trajectory(10));
    assert_ne!(trajectory(10), trajectory(11));
}

#[test]
fn manifest_pairs_fall_back_to_lightness_and_skip_mismatches() {
    let dir = tempfile::tempdir().unwrap();
    let color = Image::new(3, 18, 9, (0..486).map(|i| (i * 5 % 256) as u8).collect()).unwrap();
    write_image(dir.path().join("a.ppm"), &color).unwrap();
    write_image(dir.path().join("b.ppm"), &color).unwrap();
    write_image(dir.path().join("b.pgm"), &Image::new(1, 9, 9, vec![0; 81]).unwrap()).unwrap();
    let manifest = dir.path().join("m.json");
    fs::write(
        &manifest,
        r#"{"records": [{"color": "a.ppm"}, {"color": "b.ppm", "gray": "b.pgm"}]}"#,
    )
    .unwrap();
    let m = DatasetManifest::load(&manifest).unwrap();
    assert_eq!((m.n, m.seed), (9, 42));
    let mut it = build_pairs(&m, 9);
    let pairs = it.by_ref().collect::<Result<Vec<_>, _>>().unwrap();
    assert_eq!((pairs.len(), it.skipped()), (2, 1));

    let lab = image_to_lab(&color);
    let (gray, target) = stack_batch(&pairs, &[0, 1]);
    assert_eq!(target.shape(), [2, 3, 9, 9]);
    // Lightness plane of the first patch, quantized to 8 bits, is the gray input.
    for (k, &g) in gray.data()[..81].iter().enumerate() {
        let l = lab.data()[(k / 9) * 9 + k % 9];
        assert!((g - l).abs() <= 0.5 / 255.0 + 1e-6, "{g} vs {l}");
    }
}
