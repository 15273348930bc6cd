mod common;

use std::collections::BTreeMap;

use common::simdata::sim_set;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wivi_core::csi::{ActivityLabel, CsiSample, FEATURE_LEN};
use wivi_ml::nn::{
    batch_tensor, cnn_logits, cnn_mean_loss, eval_cnn, load_cnn, load_winn, save_cnn, save_winn, train_cnn_with,
    train_winn_with, winn_features_for_svm, winn_heatmaps, winn_mean_mse, Cnn, NetConfig, NnError, Winn,
};

fn small() -> NetConfig {
    NetConfig {
        input_side: 16,
        blocks: vec![4, 8],
        depth: 1,
        batch: 8,
        epochs: 2,
        winn_hidden: 4,
        ..NetConfig::default()
    }
}

fn noise_set(n: usize, seed: u64) -> Vec<CsiSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let v = (0..FEATURE_LEN).map(|_| rng.random_range(0.0..10.0)).collect();
            CsiSample::new(v, ActivityLabel::from_id(rng.random_range(0..9)).unwrap()).unwrap()
        })
        .collect()
}

#[test]
fn parameter_counts_are_stable() {
    let cfg = NetConfig::default();
    let a = Cnn::<f32>::new(&cfg).unwrap();
    let b = Cnn::<f32>::new(&cfg).unwrap();
    assert_eq!(a.num_params(), 701_769);
    assert_eq!(a.num_params(), b.num_params());
    assert_eq!(a.backbone.conv_layers() + 1, 18);
    assert_eq!(Winn::<f32>::new(&cfg).unwrap().num_params(), 719_346);
}

#[test]
fn decoder_output_is_two_by_18_by_18() {
    for side in [16, 56, 112] {
        let cfg = NetConfig {
            input_side: side,
            ..small()
        };
        let m = Winn::<f32>::new(&cfg).unwrap();
        let x = batch_tensor::<f32>(&noise_set(2, 1), &[0, 1], side, 6).unwrap();
        assert_eq!(m.forward(&x).unwrap().dims(), [2, 2, 18, 18]);
        assert_eq!(m.extract(&x).unwrap().dims(), [2, 8, 18, 18]);
    }
}

#[test]
fn paper_scale_shapes() {
    let cfg = NetConfig::paper_scale();
    let x = batch_tensor::<f32>(&noise_set(1, 2), &[0], 224, 6).unwrap();
    let cnn = Cnn::<f32>::new(&cfg).unwrap();
    assert_eq!(cnn.forward(&x).unwrap().dims(), [1, 9, 1, 1]);
    let winn = Winn::<f32>::new(&cfg).unwrap();
    assert_eq!(winn.extract(&x).unwrap().dims(), [1, 512, 18, 18]);
}

#[test]
fn cnn_memorizes_random_labels() {
    let set = noise_set(32, 5);
    let cfg = NetConfig {
        epochs: 200,
        ..NetConfig::default()
    };
    let mut first_perfect = None;
    let (m, log) = train_cnn_with::<f32>(&set, &cfg, &mut |e| {
        if e.train_acc == 1.0 && first_perfect.is_none() {
            first_perfect = Some(e.epoch);
        }
    })
    .unwrap();
    assert!(first_perfect.is_some(), "best train acc {:?}", log.epochs.iter().map(|e| e.train_acc).fold(0.0, f64::max));
    let preds = eval_cnn(&m, &set).unwrap();
    assert_eq!(preds, eval_cnn(&m, &set).unwrap());
}

#[test]
fn one_epoch_lowers_the_loss_on_simulated_activities() {
    let (set, _) = sim_set(&ActivityLabel::ALL, 4.0, 10);
    let cfg = NetConfig {
        epochs: 1,
        ..NetConfig::default()
    };
    let init = cnn_mean_loss(&Cnn::<f32>::new(&cfg).unwrap(), &set).unwrap();
    let (m, log) = train_cnn_with::<f32>(&set, &cfg, &mut |_| {}).unwrap();
    let after = cnn_mean_loss(&m, &set).unwrap();
    assert!(after < init, "loss {init} -> {after}");
    assert_eq!(log.epochs.len(), 1);
    assert!(log.to_csv().starts_with("epoch,loss,train_acc\n1,"));
}

#[test]
fn winn_halves_heatmap_error_in_five_epochs() {
    let (set, maps) = sim_set(&ActivityLabel::ALL, 4.0, 20);
    let cfg = NetConfig::default();
    let init = winn_mean_mse(&Winn::<f32>::new(&cfg).unwrap(), &set, &maps).unwrap();
    let (m, _) = train_winn_with::<f32>(&set, &maps, &cfg, &mut |_| {}).unwrap();
    let after = winn_mean_mse(&m, &set, &maps).unwrap();
    assert!(after < 0.5 * init, "mse {init:.3e} -> {after:.3e}");
}

#[test]
fn winn_features_are_two_normalized_maps() {
    let (set, maps) = sim_set(&[ActivityLabel::Jumping, ActivityLabel::Seating], 2.0, 3);
    let (m, _) = train_winn_with::<f32>(&set, &maps, &small(), &mut |_| {}).unwrap();
    let f = winn_features_for_svm(&m, &set[3]).unwrap();
    assert_eq!(f.len(), 648);
    assert!((f.iter().sum::<f64>() - 2.0).abs() < 1e-5);
    assert!((f[..324].iter().sum::<f64>() - 1.0).abs() < 1e-5);
    assert_eq!(f, winn_features_for_svm(&m, &set[3]).unwrap());
    assert!(matches!(
        train_winn_with::<f32>(&set, &maps[1..], &small(), &mut |_| {}),
        Err(NnError::Misaligned { .. })
    ));
}

#[test]
fn inference_is_batch_order_invariant() {
    let set = noise_set(70, 6);
    let (m, _) = train_cnn_with::<f32>(&set, &small(), &mut |_| {}).unwrap();
    let fwd = cnn_logits(&m, &set).unwrap();
    let rev: Vec<CsiSample> = set.iter().rev().cloned().collect();
    let mut back = cnn_logits(&m, &rev).unwrap();
    back.reverse();
    for (a, b) in fwd.iter().zip(&back) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= 1e-5 * x.abs().max(1.0), "{x} vs {y}");
        }
    }
}

#[test]
fn training_is_bit_reproducible_and_checkpoints_round_trip() {
    let set = noise_set(24, 7);
    let cfg = NetConfig { seed: 42, ..small() };
    let (a, la) = train_cnn_with::<f32>(&set, &cfg, &mut |_| {}).unwrap();
    let (b, lb) = train_cnn_with::<f32>(&set, &cfg, &mut |_| {}).unwrap();
    assert_eq!(la, lb);
    let meta = BTreeMap::from([("segmentation_s".to_string(), "2".to_string())]);
    let bytes = save_cnn(&a, &meta);
    assert_eq!(bytes, save_cnn(&b, &meta));
    let (back, m2) = load_cnn::<f32>(&bytes).unwrap();
    assert_eq!(m2, meta);
    assert_eq!(save_cnn(&back, &meta), bytes);
    assert_eq!(cnn_logits(&back, &set).unwrap(), cnn_logits(&a, &set).unwrap());
    assert!(load_cnn::<f32>(&bytes[..bytes.len() - 3]).is_err());
    assert!(load_winn::<f32>(&bytes).is_err());

    let other = NetConfig { seed: 43, ..cfg.clone() };
    let (c, _) = train_cnn_with::<f32>(&set, &other, &mut |_| {}).unwrap();
    assert_ne!(save_cnn(&c, &meta), bytes);

    let (set, maps) = sim_set(&[ActivityLabel::Falling, ActivityLabel::Drinking], 2.0, 4);
    let (w, _) = train_winn_with::<f32>(&set, &maps, &cfg, &mut |_| {}).unwrap();
    let wb = save_winn(&w, &meta);
    let (w2, _) = load_winn::<f32>(&wb).unwrap();
    assert_eq!(winn_heatmaps(&w2, &set).unwrap(), winn_heatmaps(&w, &set).unwrap());
}

#[test]
fn empty_sets_are_rejected() {
    assert!(matches!(train_cnn_with::<f32>(&[], &small(), &mut |_| {}), Err(NnError::EmptySet)));
    let m = Cnn::<f32>::new(&small()).unwrap();
    assert!(eval_cnn(&m, &[]).is_err());
}
