use leafgraph_core::dataset::{split, synth_dataset, DatasetManifest, FeatureStore, Split, SplitFractions};
use leafgraph_core::explain::ClassScore;
use leafgraph_core::model::{train, Arch, ModelConfig, ModelInputs, SageModel, SplitData, LGCK_MAGIC};
use leafgraph_core::nn::LayerParams;
use leafgraph_core::numerics::finite_diff_check;
use leafgraph_core::{Error, Rng, Tensor};

fn small_data(seed: u64) -> (DatasetManifest, FeatureStore) {
    let (m, store) = synth_dataset(4, 16, 12, 0.3, &mut Rng::named(seed, "synth")).unwrap();
    let m = split(&m, SplitFractions::default(), &mut Rng::named(seed, "split")).unwrap();
    (m, store)
}

fn small_config(arch: Arch) -> ModelConfig {
    ModelConfig {
        arch,
        hidden_dims: vec![8, 6],
        layers: 2,
        fan_outs: vec![4, 3],
        epochs: 3,
        batch_size: 8,
        theta: 0.3,
        min_degree: 2,
        lr: 0.01,
        ..ModelConfig::default()
    }
}

fn trained(arch: Arch, seed: u64) -> (SageModel, DatasetManifest, FeatureStore) {
    let (m, store) = small_data(seed);
    let cfg = ModelConfig {
        seed,
        ..small_config(arch)
    };
    let (model, _) = train(&cfg, ModelInputs::pooled(&store), &m).unwrap();
    (model, m, store)
}

fn classes(k: usize) -> Vec<String> {
    (0..k).map(|i| format!("c{i}")).collect()
}

#[test]
fn parameter_counts_match_closed_forms() {
    let seq = ModelConfig {
        arch: Arch::Sequential,
        hidden_dims: vec![64],
        layers: 1,
        fan_outs: vec![10],
        ..ModelConfig::default()
    };
    let m = SageModel::build(seq, 1280, classes(10)).unwrap();
    // SAGE weight sees [self ∥ aggregate]
    assert_eq!(m.count_parameters(), (64 * 2 * 1280 + 64) + (10 * 64 + 10));
    assert_eq!(m.count_parameters(), 164_554);

    let cnn = ModelConfig {
        arch: Arch::CnnOnly,
        hidden_dims: vec![128],
        layers: 1,
        fan_outs: vec![10],
        ..ModelConfig::default()
    };
    let m = SageModel::build(cnn, 1280, classes(10)).unwrap();
    assert_eq!(m.count_parameters(), 165_258);

    assert_eq!(LayerParams::glorot("l", 10, 5, true, 0).parameter_count(), 55);
    assert_eq!(LayerParams::glorot("l", 10, 5, false, 0).parameter_count(), 50);
}

#[test]
fn zero_hidden_width_is_rejected() {
    let cfg = ModelConfig {
        arch: Arch::CnnOnly,
        hidden_dims: vec![0],
        layers: 1,
        fan_outs: vec![5],
        ..ModelConfig::default()
    };
    assert!(matches!(SageModel::build(cfg, 16, classes(3)), Err(Error::Config(_))));
}

#[test]
fn parallel_concatenates_both_branches() {
    let cfg = ModelConfig {
        arch: Arch::Parallel,
        hidden_dims: vec![7, 5],
        ..small_config(Arch::Parallel)
    };
    let m = SageModel::build(cfg, 12, classes(4)).unwrap();
    assert_eq!(m.penultimate_width(), 7 + 5);
    let m = SageModel::build(small_config(Arch::Sequential), 12, classes(4)).unwrap();
    assert_eq!(m.penultimate_width(), 6);
    let m = SageModel::build(small_config(Arch::CnnOnly), 12, classes(4)).unwrap();
    assert_eq!(m.penultimate_width(), 8);
}

#[test]
fn zero_epochs_leaves_model_at_initialization() {
    let (m, store) = small_data(1);
    let cfg = ModelConfig {
        epochs: 0,
        ..small_config(Arch::Sequential)
    };
    let (model, report) = train(&cfg, ModelInputs::pooled(&store), &m).unwrap();
    assert!(report.epochs.is_empty());
    assert_eq!(report.first_batch_loss, None);
    let fresh = SageModel::build(cfg, store.row_len(), m.class_table().to_vec()).unwrap();
    assert_eq!(model.params(), fresh.params());
}

#[test]
fn same_seed_gives_identical_checkpoints() {
    for arch in [Arch::CnnOnly, Arch::Parallel, Arch::Sequential] {
        let a = trained(arch, 3).0.to_checkpoint().unwrap();
        let b = trained(arch, 3).0.to_checkpoint().unwrap();
        assert_eq!(a, b, "{arch}");
        let c = trained(arch, 4).0.to_checkpoint().unwrap();
        assert_ne!(a, c, "{arch}");
    }
}

#[test]
fn checkpoint_round_trip_preserves_predictions_bit_for_bit() {
    for arch in [Arch::CnnOnly, Arch::Parallel, Arch::Sequential] {
        let (model, m, store) = trained(arch, 5);
        let test = SplitData::gather(&store, &m, Split::Test).unwrap();
        let bytes = model.to_checkpoint().unwrap();
        let loaded = SageModel::from_checkpoint(&bytes).unwrap();
        assert_eq!(loaded.to_checkpoint().unwrap(), bytes, "{arch}");
        let before = model.predict(&test.features).unwrap();
        let after = loaded.predict(&test.features).unwrap();
        for (p, q) in before.iter().zip(&after) {
            let pb: Vec<u64> = p.probs.iter().map(|v| v.to_bits()).collect();
            let qb: Vec<u64> = q.probs.iter().map(|v| v.to_bits()).collect();
            assert_eq!(pb, qb, "{arch}");
            assert_eq!(p.neighbors, q.neighbors);
        }
    }
}

#[test]
fn corrupted_checkpoints_are_classified() {
    let bytes = trained(Arch::Sequential, 6).0.to_checkpoint().unwrap();
    assert_eq!(&bytes[..4], LGCK_MAGIC);

    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(SageModel::from_checkpoint(&bad), Err(Error::Format { offset: 0, .. })));

    let mut bad = bytes.clone();
    bad[4..8].copy_from_slice(&9u32.to_le_bytes());
    assert!(matches!(
        SageModel::from_checkpoint(&bad),
        Err(Error::UnsupportedVersion { found: 9, .. })
    ));

    let bad = &bytes[..bytes.len() - 4];
    assert!(matches!(SageModel::from_checkpoint(bad), Err(Error::Length { .. })));

    let bad = &bytes[..10];
    assert!(matches!(SageModel::from_checkpoint(bad), Err(Error::Length { .. })));

    let mut bad = bytes.clone();
    bad.extend_from_slice(&[0; 4]);
    assert!(matches!(SageModel::from_checkpoint(&bad), Err(Error::Format { .. })));

    let mut bad = bytes.clone();
    bad[12] = b'!';
    assert!(matches!(SageModel::from_checkpoint(&bad), Err(Error::Format { offset: 12, .. })));
}

#[test]
fn training_sample_matches_transductive_forward() {
    for arch in [Arch::Parallel, Arch::Sequential] {
        let (model, m, store) = trained(arch, 7);
        let train_rows = SplitData::gather(&store, &m, Split::Train).unwrap();
        let full = model.transductive_logits().unwrap();
        let one_by_one = model.logits(&train_rows.features).unwrap();
        assert_eq!(full.shape(), one_by_one.shape());
        for (a, b) in full.data().iter().zip(one_by_one.data()) {
            assert!((a - b).abs() < 1e-6, "{arch}: {a} vs {b}");
        }
    }
}

#[test]
fn duplicate_queries_get_identical_probabilities() {
    let (model, m, store) = trained(Arch::Sequential, 8);
    let train_rows = SplitData::gather(&store, &m, Split::Train).unwrap();
    let x = train_rows.features.select_rows(&[3, 3, 0, 3]);
    let p = model.predict(&x).unwrap();
    assert_eq!(p[0].probs, p[1].probs);
    assert_eq!(p[0].probs, p[3].probs);
    assert_eq!(p[0].neighbors, p[1].neighbors);
}

#[test]
fn orthogonal_query_uses_self_path_only() {
    // training rows live in the first 4 coordinates; the query in the last
    let mut rng = Rng::new(9);
    let ids: Vec<String> = (0..12).map(|i| format!("t{i}")).collect();
    let rows: Vec<Vec<f64>> = (0..12)
        .map(|_| {
            let mut r: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
            r.extend([0.0; 4]);
            r
        })
        .collect();
    let labels = (0..12).map(|i| i % 3).collect();
    let train_rows = SplitData {
        ids,
        features: Tensor::from_rows(&rows).unwrap(),
        labels,
    };
    let cfg = ModelConfig {
        theta: 0.5,
        min_degree: 0,
        ..small_config(Arch::Sequential)
    };
    let mut model = SageModel::build(cfg, 8, classes(3)).unwrap();
    model.fit(&train_rows, None).unwrap();
    let q = Tensor::new(vec![1, 8], vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
    let p = &model.predict(&q).unwrap()[0];
    assert!(p.neighbors.is_empty());
    assert!((p.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    assert!(p.probs.iter().all(|&v| v > 0.0 && v < 1.0));
}

#[test]
fn predictions_do_not_depend_on_batching() {
    for arch in [Arch::CnnOnly, Arch::Parallel, Arch::Sequential] {
        let (model, m, store) = trained(arch, 10);
        let test = SplitData::gather(&store, &m, Split::Test).unwrap();
        let all = model.predict(&test.features).unwrap();
        for i in 0..test.len() {
            let one = model.predict(&test.features.select_rows(&[i])).unwrap();
            for (a, b) in all[i].probs.iter().zip(&one[0].probs) {
                assert!((a - b).abs() < 1e-9);
            }
        }
        for (a, p) in all.iter().enumerate() {
            assert!((p.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9, "row {a}");
        }
    }
}

#[test]
fn first_batch_loss_equals_hand_computed_cross_entropy() {
    for arch in [Arch::CnnOnly, Arch::Parallel, Arch::Sequential] {
        let (m, store) = small_data(11);
        let cfg = ModelConfig {
            dropout: 0.0,
            epochs: 1,
            fan_outs: vec![1000, 1000],
            seed: 11,
            ..small_config(arch)
        };
        let data = SplitData::gather(&store, &m, Split::Train).unwrap();
        let mut fresh = SageModel::build(cfg.clone(), store.row_len(), m.class_table().to_vec()).unwrap();
        fresh.set_training_rows(data.ids.clone(), data.features.clone()).unwrap();
        let logits = if arch.uses_graph() {
            fresh.transductive_logits().unwrap()
        } else {
            fresh.logits(&data.features).unwrap()
        };

        let mut order: Vec<usize> = (0..data.len()).collect();
        Rng::named(cfg.seed, "shuffle").shuffle(&mut order);
        let batch = &order[..cfg.batch_size];
        let mut expected = 0.0;
        for &i in batch {
            let z = logits.row(i);
            let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            expected += lse - z[data.labels[i]];
        }
        expected /= batch.len() as f64;

        let (_, report) = train(&cfg, ModelInputs::pooled(&store), &m).unwrap();
        let got = report.first_batch_loss.unwrap();
        assert!((got - expected).abs() < 1e-9, "{arch}: {got} vs {expected}");
    }
}

#[test]
fn non_finite_loss_reports_coordinates() {
    let train_rows = SplitData {
        ids: (0..6).map(|i| format!("t{i}")).collect(),
        features: Tensor::full(&[6, 3], f64::INFINITY),
        labels: vec![0, 1, 0, 1, 0, 1],
    };
    let mut model = SageModel::build(small_config(Arch::CnnOnly), 3, classes(2)).unwrap();
    let err = model.fit(&train_rows, None).unwrap_err();
    assert_eq!(err, Error::Divergence { epoch: 1, batch: 1 });
}

#[test]
fn wrong_query_width_is_rejected() {
    let (model, _, _) = trained(Arch::Sequential, 12);
    let q = Tensor::zeros(&[1, 5]);
    assert!(matches!(model.predict(&q), Err(Error::Shape { .. })));
}

#[test]
fn smoke_training_learns() {
    let (m, store) = synth_dataset(10, 50, 64, 0.35, &mut Rng::named(0, "synth")).unwrap();
    let m = split(&m, SplitFractions::default(), &mut Rng::named(0, "split")).unwrap();
    let (_, report) = train(&ModelConfig::default(), ModelInputs::pooled(&store), &m).unwrap();
    let first = report.epochs.first().unwrap();
    let last = report.epochs.last().unwrap();
    assert_eq!(report.epochs.len(), 20);
    assert!(last.loss < first.loss, "{} !< {}", last.loss, first.loss);
    let acc = last.val_accuracy.unwrap();
    assert!(acc > 0.1 + 0.2, "val accuracy {acc}");
}

#[test]
fn model_input_gradient_matches_finite_differences() {
    for arch in [Arch::CnnOnly, Arch::Parallel, Arch::Sequential] {
        let (model, m, store) = trained(arch, 13);
        let test = SplitData::gather(&store, &m, Split::Test).unwrap();
        for i in 0..3 {
            let x = test.features.row(i).to_vec();
            let class = model.predict(&test.features.select_rows(&[i])).unwrap()[0].class;
            let (_, g) = model.score_and_grad(&x, class).unwrap();
            let err = finite_diff_check(
                |t| model.logits(&Tensor::new(vec![1, t.len()], t.data().to_vec()).unwrap()).unwrap().get(0, class),
                &Tensor::vector(x.clone()),
                &Tensor::vector(g),
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-3, "{arch} sample {i}: {err}");
        }
    }
}

#[test]
fn raw_pixel_model_has_no_grad_cam() {
    let (m, store) = small_data(14);
    let data = SplitData::gather(&store, &m, Split::Train).unwrap();
    let mut model = SageModel::build(small_config(Arch::GnnOnly), store.row_len(), m.class_table().to_vec()).unwrap();
    model.set_training_rows(data.ids.clone(), data.features.clone()).unwrap();
    assert!(matches!(model.score_and_grad(data.features.row(0), 0), Err(Error::Unsupported(_))));
}
