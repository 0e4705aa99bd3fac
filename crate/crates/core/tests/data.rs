mod common;

use proptest::prelude::*;
use tabformer::data::{
    fit_standardizer, generate_synthetic, load_csv, stratified_k_fold, Dataset, GeneratorSpec, LoadOptions,
};
use tabformer::Error;

fn labels_with(n: usize, positives: usize) -> Vec<u8> {
    // Positives spread through the index range so the per-class shuffle
    // has something to do.
    let mut labels = vec![0u8; n];
    for i in 0..positives {
        labels[i * n / positives] = 1;
    }
    labels
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn folds_partition_and_stay_within_one_of_proportional(
        n in 20usize..600,
        prevalence in 0.05f64..0.95,
        k in 2usize..8,
        seed in any::<u64>(),
    ) {
        let positives = ((n as f64 * prevalence).round() as usize).clamp(k, n - k);
        let labels = labels_with(n, positives);
        let folds = stratified_k_fold(&labels, k, seed).unwrap();

        let mut seen = vec![0usize; n];
        for f in 0..k {
            for r in folds.test_rows(f) {
                seen[r] += 1;
            }
            let pos = folds.test_rows(f).iter().filter(|&&r| labels[r] == 1).count() as f64;
            let share = positives as f64 / k as f64;
            prop_assert!(pos >= share.floor() - 1.0 && pos <= share.ceil() + 1.0);
            let mut all: Vec<usize> = folds.train_rows(f);
            all.extend(folds.test_rows(f));
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
        prop_assert!(seen.iter().all(|&c| c == 1));

        let again = stratified_k_fold(&labels, k, seed).unwrap();
        prop_assert_eq!(serde_json::to_vec(&folds).unwrap(), serde_json::to_vec(&again).unwrap());
    }
}

#[test]
fn thousand_rows_ten_percent_positive() {
    let labels = labels_with(1000, 100);
    let folds = stratified_k_fold(&labels, 5, 3).unwrap();
    for f in 0..5 {
        let pos = folds.test_rows(f).iter().filter(|&&r| labels[r] == 1).count();
        assert!((19..=21).contains(&pos));
    }
}

#[test]
fn csv_ingestion_contract() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    std::fs::write(&path, "a,b,y\n1.5,x,1\n,y,0\n2.0,x,1\n").unwrap();
    let ds = load_csv(&path, "y", &LoadOptions::default()).unwrap();
    assert_eq!(ds.positives(), 2);
    assert_eq!(ds.row(1)[0], 0.0);
    assert!(!ds.schema().columns()[1].is_numeric());

    std::fs::write(&path, "a,b,y\n1,2,1\n3,0\n").unwrap();
    let err = load_csv(&path, "y", &LoadOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Data(_)));
    assert!(err.to_string().contains("row 2"), "{err}");

    std::fs::write(&path, "a,y\n1,2\n").unwrap();
    assert!(load_csv(&path, "y", &LoadOptions::default()).is_err());
    assert!(matches!(
        load_csv(&dir.path().join("missing.csv"), "y", &LoadOptions::default()),
        Err(Error::Io { .. })
    ));
}

#[test]
fn imputation_happens_before_standardization() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    std::fs::write(&path, "a,y\n4,1\n6,0\n8,1\n,0\n").unwrap();
    let ds = load_csv(&path, "y", &LoadOptions::default()).unwrap();
    let st = fit_standardizer(&ds, &[0, 1, 2]).unwrap();
    let out = st.apply(&ds).unwrap();
    let (mean, std) = (6.0, (8.0f64 / 3.0).sqrt());
    assert!((out.row(3)[0] - (-mean / std)).abs() < 1e-12);
}

#[test]
fn generator_marginals_and_determinism() {
    let n = 4000;
    let spec = common::separable_spec(21);
    let ds = generate_synthetic(n, &spec).unwrap();
    for j in 0..ds.n_features() {
        let col = ds.column(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "column {j} mean {mean}");
        assert!((var - 1.0).abs() < 0.2, "column {j} var {var}");
    }
    assert_eq!(ds, generate_synthetic(n, &spec).unwrap());
}

#[test]
fn null_columns_are_independent_of_the_label() {
    let ds: Dataset = generate_synthetic(4000, &common::separable_spec(5)).unwrap();
    let corr = |j: usize| {
        let x = ds.column(j);
        let y: Vec<f64> = ds.labels().iter().map(|&v| v as f64).collect();
        let (mx, my) = (x.iter().sum::<f64>() / 4000.0, y.iter().sum::<f64>() / 4000.0);
        let cov: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
        cov / (vx * vy).sqrt()
    };
    assert!(corr(0) > 0.7);
    for j in 1..8 {
        assert!(corr(j).abs() < 0.06, "column {j}");
    }
}

#[test]
fn threshold_rule_on_weight_eight_feature() {
    // Bayes rule for a single active feature with zero bias is x0 >= 0.
    let spec = GeneratorSpec::numeric(4, &[(0, 8.0)], 0.0, 13);
    let (_, labels) = common::bayes_scores(&spec, 4000);
    let ds = generate_synthetic(4000, &spec).unwrap();
    assert_eq!(ds.labels(), &labels[..]);
    let x0 = ds.column(0);
    assert!(common::f1_at(&x0, &labels, 0.0) > 0.9);
}
