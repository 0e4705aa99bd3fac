mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tabformer::data::{fit_standardizer, generate_synthetic, stratified_holdout, Dataset, GeneratorSpec};
use tabformer::eval::{apply_threshold, confusion_metrics};
use tabformer::model::{predict_proba, InputLayout, Model, ModelConfig, ModelKind, ParamSet};
use tabformer::tensor::Tensor;
use tabformer::train::{
    adamw_step, balanced_bce, batch_gradients, bce, evaluate_loss, train, AdamState, ClassWeights, EarlyStopping,
    TrainConfig, TrainLog,
};

fn split(ds: &Dataset, seed: u64) -> (Dataset, Dataset) {
    let rows: Vec<usize> = (0..ds.n_rows()).collect();
    let (tr, va) = stratified_holdout(&rows, ds.labels(), 0.125, seed).unwrap();
    let st = fit_standardizer(ds, &tr).unwrap();
    (st.apply(&ds.subset(&tr)).unwrap(), st.apply(&ds.subset(&va)).unwrap())
}

fn logistic(ds: &Dataset, seed: u64) -> Model {
    Model::new(ModelKind::Logistic, &ModelConfig::default(), &InputLayout::from_schema(ds.schema()), seed).unwrap()
}

fn quick(seed: u64) -> TrainConfig {
    TrainConfig {
        lr: 0.01,
        batch_size: 32,
        max_epochs: 30,
        patience: 5,
        seed,
        ..Default::default()
    }
}

#[test]
fn balanced_bce_oracles() {
    let probs = [0.2, 0.7, 0.9, 0.4];
    let labels = [0, 1, 1, 0];
    let w = ClassWeights::from_labels(&labels).unwrap();
    assert_eq!(balanced_bce(&probs, &labels, w).unwrap(), bce(&probs, &labels).unwrap());

    let mut labels = vec![0u8; 10];
    labels[0] = 1;
    let w = ClassWeights::from_labels(&labels).unwrap();
    let loss = balanced_bce(&[0.5], &[1], w).unwrap();
    assert!((loss - 5.0 * 2f64.ln()).abs() < 1e-12);
}

#[test]
fn adamw_hand_stepped_reference() {
    let cfg = TrainConfig {
        lr: 0.001,
        weight_decay: 0.0,
        ..Default::default()
    };
    let mut p = ParamSet::new();
    p.push("theta", Tensor::scalar(0.0), true);
    let mut state = AdamState::new(&p);
    adamw_step(&mut p, &[Tensor::scalar(1.0)], &mut state, &cfg, 1);
    // m_hat = 1, v_hat = 1 after bias correction.
    let m = 0.1 * 1.0;
    let v = 0.001 * 1.0;
    let expected = -0.001 * (m / 0.1) / ((v / 0.001f64).sqrt() + 1e-8);
    assert!((p.values()[0].data()[0] - expected).abs() < 1e-12);

    let cfg = TrainConfig::default();
    let mut p = ParamSet::new();
    p.push("w", Tensor::from_rows(&[vec![1.5, -2.0]]).unwrap(), true);
    p.push("b", Tensor::from_rows(&[vec![0.75]]).unwrap(), false);
    let mut state = AdamState::new(&p);
    adamw_step(&mut p, &[Tensor::zeros(&[1, 2]), Tensor::zeros(&[1, 1])], &mut state, &cfg, 1);
    let f = 1.0 - cfg.lr * cfg.weight_decay;
    assert_eq!(p.values()[0].data(), &[1.5 * f, -2.0 * f]);
    assert_eq!(p.values()[1].data(), &[0.75]);
}

#[test]
fn one_small_step_descends_on_logistic() {
    let ds = generate_synthetic(256, &GeneratorSpec::numeric(4, &[(0, 2.0), (2, -1.0)], 0.3, 1)).unwrap();
    let (tr, _) = split(&ds, 0);
    let mut model = logistic(&tr, 3);
    let w = ClassWeights::from_labels(tr.labels()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (before, grads) = batch_gradients(&model, tr.features(), tr.labels(), w, &mut rng).unwrap();
    let cfg = TrainConfig {
        lr: 1e-3,
        weight_decay: 0.0,
        ..Default::default()
    };
    let mut state = AdamState::new(model.params());
    adamw_step(model.params_mut(), &grads, &mut state, &cfg, 1);
    let (after, _) = batch_gradients(&model, tr.features(), tr.labels(), w, &mut rng).unwrap();
    assert!(after < before);
}

#[test]
fn training_is_deterministic_and_restores_the_best_epoch() {
    let ds = generate_synthetic(600, &GeneratorSpec::numeric(5, &[(1, 1.5)], -1.0, 2)).unwrap();
    let (tr, va) = split(&ds, 1);
    let cfg = ModelConfig {
        embed_dim: 8,
        n_heads: 2,
        n_blocks: 1,
        ffn_dim: 8,
        ..Default::default()
    };
    let init = Model::new(ModelKind::Transformer, &cfg, &InputLayout::from_schema(tr.schema()), 4).unwrap();
    let (m1, log1) = train(&init, &tr, &va, &quick(9)).unwrap();
    let (m2, log2) = train(&init, &tr, &va, &quick(9)).unwrap();
    assert_eq!(log1, log2);
    assert_eq!(m1.params().flatten(), m2.params().flatten());

    let best = log1.epochs.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
    assert_eq!(log1.best_val_loss, best);
    assert_eq!(log1.epochs[log1.best_epoch - 1].val_loss, best);
    assert_eq!(evaluate_loss(&m1, &va, log1.class_weights).unwrap(), log1.best_val_loss);

    let json = serde_json::to_string(&log1).unwrap();
    assert_eq!(serde_json::from_str::<TrainLog>(&json).unwrap(), log1);
}

#[test]
fn equal_class_weights_leave_training_unchanged() {
    // Balanced labels give w0 = w1 = 1 exactly, so weighted and plain BCE
    // produce the same trajectory.
    let mut ds = generate_synthetic(400, &GeneratorSpec::numeric(3, &[(0, 3.0)], 0.0, 8)).unwrap();
    let pos: Vec<usize> = (0..ds.n_rows()).filter(|&i| ds.labels()[i] == 1).collect();
    let neg: Vec<usize> = (0..ds.n_rows()).filter(|&i| ds.labels()[i] == 0).collect();
    let m = pos.len().min(neg.len());
    let rows: Vec<usize> = pos[..m].iter().chain(&neg[..m]).copied().collect();
    ds = ds.subset(&rows);
    let all: Vec<usize> = (0..ds.n_rows()).collect();
    let (tr_rows, va_rows) = stratified_holdout(&all, ds.labels(), 0.125, 0).unwrap();
    let (tr, va) = (ds.subset(&tr_rows), ds.subset(&va_rows));
    assert_eq!(tr.positives() * 2, tr.n_rows());
    let init = logistic(&tr, 1);
    let balanced = train(&init, &tr, &va, &quick(2)).unwrap();
    let plain = train(&init, &tr, &va, &TrainConfig { balanced: false, ..quick(2) }).unwrap();
    assert_eq!(balanced.0.params().flatten(), plain.0.params().flatten());
}

#[test]
fn single_class_training_split_is_an_error() {
    let ds = generate_synthetic(50, &GeneratorSpec::numeric(2, &[], 0.0, 0)).unwrap();
    let neg: Vec<usize> = (0..50).filter(|&i| ds.labels()[i] == 0).collect();
    let tr = ds.subset(&neg);
    let err = train(&logistic(&tr, 0), &tr, &ds, &quick(0)).unwrap_err();
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn noisy_losses_follow_patience_arithmetic() {
    let losses = [1.0, 0.8, 0.85, 0.7, 0.75, 0.72, 0.71, 0.9, 0.69, 0.7, 0.7, 0.7, 0.7];
    let mut es = EarlyStopping::new(3);
    let mut stopped = None;
    for (i, &l) in losses.iter().enumerate() {
        if es.observe(i + 1, l).stop {
            stopped = Some(i + 1);
            break;
        }
    }
    // Improvements at epochs 1, 2, 4 then three stale epochs (5, 6, 7).
    assert_eq!(stopped, Some(7));
    assert_eq!(es.best_epoch(), 4);
}

#[test]
fn separable_data_reaches_high_validation_f1() {
    let ds = generate_synthetic(4000, &common::separable_spec(1)).unwrap();
    let (tr, va) = split(&ds, 2);
    let cfg = TrainConfig {
        lr: 0.01,
        seed: 5,
        ..Default::default()
    };
    let (model, log) = train(&logistic(&tr, 5), &tr, &va, &cfg).unwrap();
    let probs = predict_proba(&model, &va).unwrap();
    let f1 = confusion_metrics(&apply_threshold(&probs, 0.5), va.labels()).unwrap().f1;
    assert!(f1 > 0.95, "validation F1 {f1} after {} epochs", log.epochs.len());
}
