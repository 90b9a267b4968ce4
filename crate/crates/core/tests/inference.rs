mod common;

use image::{GrayImage, Luma};
use okannet::checkpoint::{decode, encode, CheckpointMeta};
use okannet::data::{scan_split, LoadedDataset};
use okannet::model::build_okannet;
use okannet::train::{evaluate, predict, train, TrainConfig};
use okannet::Error;

fn names() -> Vec<String> {
    common::PATTERN_NAMES.iter().map(|s| s.to_string()).collect()
}

#[test]
fn predict_probabilities_are_a_distribution_and_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let mut model = build_okannet(4, 32, 8).unwrap();
    for (i, level) in [0u8, 97, 128, 255].into_iter().enumerate() {
        let path = dir.path().join(format!("img{i}.png"));
        GrayImage::from_fn(50, 41, |x, y| Luma([level.wrapping_add(((x * y) % 7) as u8)])).save(&path).unwrap();
        let (class, p1) = predict(&mut model, &path, &names()).unwrap();
        let (class2, p2) = predict(&mut model, &path, &names()).unwrap();
        assert_eq!((class.clone(), p1.clone()), (class2, p2));
        assert!((p1.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        let best = p1.iter().cloned().fold(f32::MIN, f32::max);
        assert_eq!(p1[names().iter().position(|n| *n == class).unwrap()], best);
    }
    // constant gray input: BN must not produce NaNs
    let gray = dir.path().join("gray.png");
    GrayImage::from_pixel(32, 32, Luma([128])).save(&gray).unwrap();
    let (_, p) = predict(&mut model, &gray, &names()).unwrap();
    assert!(p.iter().all(|v| v.is_finite()));
}

#[test]
fn decode_failure_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.png");
    std::fs::write(&path, b"\x89PNG garbage").unwrap();
    let mut model = build_okannet(4, 16, 0).unwrap();
    let err = predict(&mut model, &path, &names()).unwrap_err();
    assert!(matches!(err, Error::Decode { .. }));
    assert!(err.to_string().contains("broken.png"));
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn constant_predictor_scores_chance_on_balanced_set() {
    let data = common::pattern_dataset(5, 16, 3);
    let mut model = build_okannet(4, 16, 0).unwrap();
    // zero output weights and a bias favouring class 0 make a constant predictor
    for (name, t) in model.named_state_mut() {
        if name == "FC_Out.weight" {
            t.data_mut().fill(0.0);
        }
        if name == "FC_Out.bias" {
            t.data_mut().copy_from_slice(&[5.0, 0.0, 0.0, 0.0]);
        }
    }
    let (cm, m) = evaluate(&mut model, &data).unwrap();
    assert_eq!(m.accuracy, 0.25);
    assert_eq!(cm.col_sum(0), 20);
    // precision only defined for class 0 (5/20); recall 1, 0, 0, 0
    assert!((m.macro_precision - 0.25).abs() < 1e-12);
    assert!((m.macro_recall - 0.25).abs() < 1e-12);
}

#[test]
fn folder_dataset_trains_and_checkpoints_in_memory() {
    let dir = tempfile::tempdir().unwrap();
    common::write_pattern_folders(dir.path(), 4, 2, 20, 5);
    let (train_idx, test_idx) = scan_split(dir.path()).unwrap();
    assert_eq!(train_idx.class_names, names());
    assert_eq!(train_idx.class_counts(), vec![4; 4]);
    let train_data = LoadedDataset::load(&train_idx, 16).unwrap();
    let test_data = LoadedDataset::load(&test_idx, 16).unwrap();
    let cfg = TrainConfig { epochs: 2, batch_size: 4, image_size: 16, validation_frequency: 3, ..Default::default() };
    let out = train(build_okannet(4, 16, 1).unwrap(), &train_data, Some(&test_data), &cfg).unwrap();
    assert_eq!(out.iterations(), 8);
    let validated: Vec<usize> =
        out.history.rows().iter().filter(|r| r.val_loss.is_some()).map(|r| r.iteration).collect();
    assert_eq!(validated, vec![3, 6]);

    let mut model = out.model;
    let meta = CheckpointMeta { class_names: names(), config: Some(cfg), final_metrics: None };
    let bytes = encode(&model, &meta).unwrap();
    let (mut back, meta_back) = decode(&bytes).unwrap();
    assert_eq!(meta_back.config.unwrap().epochs, 2);
    assert_eq!(evaluate(&mut model, &test_data).unwrap(), evaluate(&mut back, &test_data).unwrap());
}

#[test]
fn wall_time_grows_with_epochs() {
    let data = common::pattern_dataset(4, 16, 2);
    let run = |epochs| {
        let cfg = TrainConfig { epochs, batch_size: 4, image_size: 16, ..Default::default() };
        train(build_okannet(4, 16, 0).unwrap(), &data, None, &cfg).unwrap().wall_seconds
    };
    // coarse: allow for scheduler noise
    assert!(run(4) >= run(1) * 0.8);
}
