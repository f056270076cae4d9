use labeler_core::corpus::{generate, GeneratorConfig, LabeledDataset, TemplateBank};
use labeler_core::model::{
    adamw_step, encode, fine_tune, train, AdamState, AdamWConfig, Checkpoint, DataSplit, EncoderConfig, Fraction,
    ModelDims, ModelLabeler, ModelParams, Regime, SparseVector, TrainConfig, TrainingData, CHECKPOINT_VERSION,
    HEAD_ROWS,
};
use labeler_core::schema::{validate_labels, Finding, LabelValue, ReportLabels};
use labeler_core::text::{tokenize, NormalizerConfig};
use labeler_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_labels(rng: &mut ChaCha8Rng) -> ReportLabels {
    ReportLabels::from_fn(|f| {
        let classes = f.num_classes();
        LabelValue::ALL[rng.random_range(0..classes)]
    })
}

fn random_input(rng: &mut ChaCha8Rng, dim: usize) -> SparseVector {
    let mut pairs = Vec::new();
    for j in 0..dim as u32 {
        if rng.random_bool(0.4) {
            pairs.push((j, rng.random_range(-1.0..1.0)));
        }
    }
    SparseVector::from_pairs(pairs)
}

fn batch_refs(batch: &[(SparseVector, ReportLabels)]) -> Vec<(&SparseVector, &ReportLabels)> {
    batch.iter().map(|(x, y)| (x, y)).collect()
}

#[test]
fn gradient_matches_central_differences() {
    let dims = ModelDims { input: 32, hidden: 8 };
    let step = 1e-5;
    for instance in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + instance);
        let mut params = ModelParams::init(dims, instance);
        // Larger head weights than the default init make every block
        // contribute visibly to the loss.
        for p in params.as_mut_slice()[dims.input * dims.hidden..].iter_mut() {
            *p = rng.random_range(-1.0..1.0);
        }
        let batch: Vec<_> = (0..3).map(|_| (random_input(&mut rng, 32), random_labels(&mut rng))).collect();
        let refs = batch_refs(&batch);
        let analytic = params.grad(&refs).unwrap();
        for i in 0..dims.len() {
            let original = params.as_slice()[i];
            params.as_mut_slice()[i] = original + step;
            let up = params.loss(&refs).unwrap();
            params.as_mut_slice()[i] = original - step;
            let down = params.loss(&refs).unwrap();
            params.as_mut_slice()[i] = original;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic.as_slice()[i];
            // Rounding noise of the difference quotient is about 1e-11, so entries
            // below 1e-6 are compared on an absolute scale.
            let scale = a.abs().max(numeric.abs()).max(1e-6);
            let rel = (a - numeric).abs() / scale;
            assert!(rel < 1e-4, "instance {instance}, param {i}: analytic {a}, numeric {numeric}");
        }
    }
}

#[test]
fn saturated_correct_predictions_have_tiny_gradient() {
    let dims = ModelDims { input: 16, hidden: 4 };
    let mut params = ModelParams::zeros(dims);
    let y = ReportLabels::all_blank()
        .with(Finding::Edema, LabelValue::Uncertain)
        .with(Finding::Pneumothorax, LabelValue::Negative);
    for f in Finding::ALL {
        params.head_bias_mut(f)[y.get(f).class_index()] = 50.0;
    }
    let x = SparseVector::from_pairs(vec![(3, 1.0)]);
    let (loss, grad) = params.loss_and_grad(&[(&x, &y)]).unwrap();
    assert!(loss < 1e-12);
    let norm = grad.as_slice().iter().map(|g| g * g).sum::<f64>().sqrt();
    assert!(norm < 1e-6, "{norm}");
}

#[test]
fn duplicated_rows_leave_loss_and_gradient_unchanged() {
    let dims = ModelDims { input: 32, hidden: 8 };
    let params = ModelParams::init(dims, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random_input(&mut rng, 32);
    let y = random_labels(&mut rng);
    let (l1, g1) = params.loss_and_grad(&[(&x, &y)]).unwrap();
    let (l2, g2) = params.loss_and_grad(&[(&x, &y), (&x, &y)]).unwrap();
    assert!((l1 - l2).abs() < 1e-12);
    for (a, b) in g1.as_slice().iter().zip(g2.as_slice()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn confident_correct_distributions_drive_loss_to_zero() {
    let dims = ModelDims { input: 4, hidden: 2 };
    let x = SparseVector::default();
    let y = ReportLabels::all_blank().with(Finding::Fracture, LabelValue::Positive);
    let mut previous = f64::INFINITY;
    for scale in [1.0, 5.0, 20.0, 40.0] {
        let mut params = ModelParams::zeros(dims);
        for f in Finding::ALL {
            params.head_bias_mut(f)[y.get(f).class_index()] = scale;
        }
        let loss = params.loss(&[(&x, &y)]).unwrap();
        assert!(loss < previous);
        previous = loss;
    }
    assert!(previous < 1e-15);
}

#[test]
fn invalid_target_labels_are_rejected() {
    let params = ModelParams::zeros(ModelDims { input: 4, hidden: 2 });
    let y = ReportLabels::all_blank().with(Finding::NoFinding, LabelValue::Uncertain);
    let err = params.loss(&[(&SparseVector::default(), &y)]).unwrap_err();
    assert!(matches!(err, Error::InvalidLabel { .. }), "{err}");
}

#[test]
fn oversized_input_is_a_dimension_error() {
    let params = ModelParams::zeros(ModelDims { input: 4, hidden: 2 });
    let x = SparseVector::from_pairs(vec![(4, 1.0)]);
    assert!(matches!(params.forward(&x), Err(Error::Dimension { expected: 4, actual: 5 })));
}

#[test]
fn zero_params_predict_blank_everywhere() {
    let params = ModelParams::zeros(ModelDims { input: 8, hidden: 3 });
    let d = params.forward(&SparseVector::from_pairs(vec![(1, 1.0)])).unwrap();
    assert_eq!(d.labels(), ReportLabels::all_blank());
    assert!(d.head(Finding::NoFinding).iter().all(|&p| p == 0.5));
    assert!(d.head(Finding::Edema).iter().all(|&p| p == 0.25));
}

#[test]
fn argmax_picks_the_largest_class() {
    let mut params = ModelParams::zeros(ModelDims { input: 8, hidden: 3 });
    let target = [0.1f64, 0.7, 0.1, 0.1];
    for (c, p) in target.iter().enumerate() {
        params.head_bias_mut(Finding::Pneumothorax)[c] = p.ln();
    }
    let d = params.forward(&SparseVector::default()).unwrap();
    for (got, want) in d.head(Finding::Pneumothorax).iter().zip(target) {
        assert!((got - want).abs() < 1e-12);
    }
    assert_eq!(d.labels().get(Finding::Pneumothorax), LabelValue::Positive);
}

fn oracle_fnv(seed: u64, key: &str) -> u64 {
    let mut h: u64 = 14695981039346656037;
    for b in seed.to_le_bytes().iter().chain(key.as_bytes()) {
        h ^= *b as u64;
        h = h.wrapping_mul(1099511628211);
    }
    h
}

#[test]
fn word_unigram_encoding_at_dim_eight() {
    let config = EncoderConfig {
        dim: 8,
        word_orders: vec![1],
        char_orders: vec![],
        seed: 0,
        normalize: true,
    };
    let v = encode(&tokenize("kein erguss"), &config);
    let a = (oracle_fnv(0, "kein") % 8) as usize;
    let b = (oracle_fnv(0, "erguss") % 8) as usize;
    let dense = v.to_dense(8);
    for (j, &value) in dense.iter().enumerate() {
        let expected = match (j == a, j == b) {
            (true, true) => 1.0,
            (true, false) | (false, true) => 1.0 / 2f64.sqrt(),
            (false, false) => 0.0,
        };
        assert!((value - expected).abs() < 1e-15, "bucket {j}");
    }
    assert_eq!(v.nnz(), if a == b { 1 } else { 2 });
}

#[test]
fn adamw_zero_gradient_without_decay_is_a_fixed_point() {
    let mut params = vec![0.3, -1.7, 42.0];
    let before = params.clone();
    let mut state = AdamState::new(3);
    let config = AdamWConfig {
        weight_decay: 0.0,
        learning_rate: 1e-2,
        ..AdamWConfig::default()
    };
    for _ in 0..5 {
        adamw_step(&mut params, &[0.0; 3], &mut state, &config).unwrap();
    }
    assert_eq!(params, before);
}

#[test]
fn adamw_decay_shrinks_by_constant_factor() {
    let config = AdamWConfig {
        learning_rate: 1e-2,
        weight_decay: 0.1,
        ..AdamWConfig::default()
    };
    let factor = 1.0 - config.learning_rate * config.weight_decay;
    let mut params = vec![2.0, -0.5];
    let mut state = AdamState::new(2);
    for step in 1..=10 {
        adamw_step(&mut params, &[0.0; 2], &mut state, &config).unwrap();
        let expected = [2.0 * factor.powi(step), -0.5 * factor.powi(step)];
        for (p, e) in params.iter().zip(expected) {
            assert!((p - e).abs() <= 1e-14 * e.abs());
        }
    }
}

#[test]
fn adamw_scalar_first_step() {
    let mut p = [0.0];
    let mut state = AdamState::new(1);
    let config = AdamWConfig {
        learning_rate: 1e-3,
        weight_decay: 0.0,
        ..AdamWConfig::default()
    };
    adamw_step(&mut p, &[1.0], &mut state, &config).unwrap();
    // m_hat = v_hat = 1, so the step is lr / (1 + eps).
    assert!((p[0] - -1e-3 / (1.0 + 1e-8)).abs() < 1e-18);
    assert!((p[0] - -9.99999995e-4).abs() < 1e-11);
}

fn small_corpus(seed: u64, n: usize, prefix: &str) -> LabeledDataset {
    let config = GeneratorConfig {
        seed,
        id_prefix: prefix.into(),
        ..GeneratorConfig::default()
    };
    generate(&config, &TemplateBank::default_german(), n).unwrap()
}

fn small_encoder() -> EncoderConfig {
    EncoderConfig {
        dim: 1 << 10,
        ..EncoderConfig::default()
    }
}

fn small_train_config() -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-2,
        hidden: 8,
        epochs: 3,
        eval_interval: 10_000,
        seed: 5,
        ..TrainConfig::default()
    }
}

#[test]
fn training_lowers_the_loss() {
    let data = small_corpus(11, 200, "smoke");
    let encoder = small_encoder();
    let normalizer = NormalizerConfig::default();
    let config = small_train_config();
    let split = DataSplit {
        train: &data,
        validation: &data,
    };
    let outcome = train(
        Regime::WeaklySupervised,
        TrainingData {
            weak: Some(split),
            manual: None,
        },
        &encoder,
        &normalizer,
        &config,
    )
    .unwrap();
    let examples = labeler_core::model::encode_dataset(&data, &encoder, &normalizer).unwrap();
    let batch = batch_refs(&examples);
    let initial = ModelParams::init(
        ModelDims {
            input: encoder.dim,
            hidden: config.hidden,
        },
        config.seed,
    );
    let before = initial.loss(&batch).unwrap();
    let after = outcome.checkpoint.params.loss(&batch).unwrap();
    assert!(after < before, "{after} >= {before}");
    assert_eq!(outcome.checkpoint.step, 75);
    assert_eq!(outcome.history.len(), 2);
}

#[test]
fn training_is_bit_reproducible() {
    let data = small_corpus(12, 120, "det");
    let run = || {
        let split = DataSplit {
            train: &data,
            validation: &data,
        };
        let config = TrainConfig {
            eval_interval: 5,
            ..small_train_config()
        };
        train(
            Regime::WeaklySupervised,
            TrainingData {
                weak: Some(split),
                manual: None,
            },
            &small_encoder(),
            &NormalizerConfig::default(),
            &config,
        )
        .unwrap()
        .checkpoint
        .to_bytes()
        .unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn zero_learning_rate_fine_tune_returns_the_start_checkpoint() {
    let weak = small_corpus(13, 100, "weak");
    let manual = small_corpus(14, 100, "man");
    let (train_half, val_half) = manual.reports().split_at(80);
    let manual_train = LabeledDataset::new(train_half.to_vec()).unwrap();
    let manual_val = LabeledDataset::new(val_half.to_vec()).unwrap();
    let ws = train(
        Regime::WeaklySupervised,
        TrainingData {
            weak: Some(DataSplit {
                train: &weak,
                validation: &weak,
            }),
            manual: None,
        },
        &small_encoder(),
        &NormalizerConfig::default(),
        &small_train_config(),
    )
    .unwrap();
    let frozen = TrainConfig {
        learning_rate: 0.0,
        eval_interval: 3,
        ..small_train_config()
    };
    let tuned = fine_tune(
        &ws.checkpoint,
        DataSplit {
            train: &manual_train,
            validation: &manual_val,
        },
        Fraction::Full,
        &frozen,
    )
    .unwrap();
    assert_eq!(tuned.checkpoint.params, ws.checkpoint.params);
    assert_eq!(tuned.checkpoint.step, 0);
    assert_eq!(tuned.checkpoint.regime, Regime::Hybrid(Fraction::Full));
}

#[test]
fn supervised_fraction_sizes_follow_the_quarter_rule() {
    let manual = small_corpus(15, 1013, "man");
    let ids = manual.ids();
    let train_set = manual.subset(&ids[..810]).unwrap();
    let val_set = manual.subset(&ids[810..]).unwrap();
    let config = TrainConfig {
        epochs: 0,
        ..small_train_config()
    };
    for (fraction, sizes) in Fraction::ALL.into_iter().zip([(203, 51), (406, 101), (608, 152), (810, 203)]) {
        let outcome = train(
            Regime::Supervised(fraction),
            TrainingData {
                weak: None,
                manual: Some(DataSplit {
                    train: &train_set,
                    validation: &val_set,
                }),
            },
            &small_encoder(),
            &NormalizerConfig::default(),
            &config,
        )
        .unwrap();
        assert_eq!((outcome.train_size, outcome.validation_size), sizes);
    }
}

#[test]
fn empty_training_split_is_an_error() {
    let data = small_corpus(16, 10, "x");
    let empty = LabeledDataset::new(Vec::new()).unwrap();
    let result = train(
        Regime::WeaklySupervised,
        TrainingData {
            weak: Some(DataSplit {
                train: &empty,
                validation: &data,
            }),
            manual: None,
        },
        &small_encoder(),
        &NormalizerConfig::default(),
        &small_train_config(),
    );
    assert!(matches!(result, Err(Error::Dataset(_))));
}

#[test]
fn checkpoint_file_round_trip() {
    let ck = Checkpoint {
        encoder: small_encoder(),
        normalizer: NormalizerConfig::default(),
        train: small_train_config(),
        regime: Regime::Supervised(Fraction::Half),
        step: 12,
        metric: 0.75,
        params: ModelParams::init(ModelDims { input: 1 << 10, hidden: 8 }, 3),
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    ck.save(&path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..4], b"RLCK");
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), CHECKPOINT_VERSION);
    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(loaded, ck);
    let labeler = ModelLabeler::new(loaded);
    let text = "Kein Pneumothorax. Erguss rechts.";
    assert_eq!(labeler.predict(text).unwrap(), ModelLabeler::new(ck).predict(text).unwrap());
}

fn arb_params() -> impl Strategy<Value = (ModelParams, SparseVector)> {
    (any::<u64>(), -3.0f64..3.0).prop_map(|(seed, scale)| {
        let dims = ModelDims { input: 16, hidden: 4 };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ModelParams::init(dims, seed);
        for p in params.as_mut_slice().iter_mut() {
            *p *= scale;
            *p += rng.random_range(-0.5..0.5);
        }
        let x = random_input(&mut rng, 16);
        (params, x)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn distributions_are_normalized((params, x) in arb_params()) {
        let d = params.forward(&x).unwrap();
        for f in Finding::ALL {
            let head = d.head(f);
            prop_assert_eq!(head.len(), f.num_classes());
            prop_assert!(head.iter().all(|p| (0.0..=1.0).contains(p)));
            prop_assert!((head.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        prop_assert_eq!(d.probs.len(), HEAD_ROWS);
    }

    #[test]
    fn predictions_are_always_valid((params, x) in arb_params()) {
        prop_assert!(validate_labels(&params.forward(&x).unwrap().labels()).is_ok());
    }

    #[test]
    fn shifting_one_head_keeps_predictions((params, x) in arb_params(), head in 0usize..14, shift in -20i32..20) {
        let finding = Finding::ALL[head];
        let mut shifted = params.clone();
        for b in shifted.head_bias_mut(finding) {
            *b += f64::from(shift);
        }
        let before = params.forward(&x).unwrap().labels();
        let after = shifted.forward(&x).unwrap().labels();
        prop_assert_eq!(before, after);
    }

    #[test]
    fn encoding_is_deterministic(text in "[a-zäöü .,]{0,60}", seed in any::<u64>()) {
        let config = EncoderConfig { dim: 256, seed, ..EncoderConfig::default() };
        let tokens = tokenize(&text);
        let a = encode(&tokens, &config);
        prop_assert_eq!(&a, &encode(&tokens, &config));
        prop_assert!(a.is_zero() || (a.norm() - 1.0).abs() < 1e-12);
    }
}
