#![allow(dead_code)]

use tabformer::data::{generate_table, GeneratorSpec, Interaction};

/// Only `x0` matters; weight 30 leaves almost no Bayes error.
pub fn separable_spec(seed: u64) -> GeneratorSpec {
    GeneratorSpec::numeric(8, &[(0, 30.0)], 0.0, seed)
}

/// `y` depends on the sign of `x0 * x1` only.
pub fn xor_spec(seed: u64) -> GeneratorSpec {
    let mut spec = GeneratorSpec::numeric(6, &[], 0.0, seed);
    spec.interactions.push(Interaction {
        a: "x0".into(),
        b: "x1".into(),
        weight: 12.0,
    });
    spec
}

/// Single active feature with a moderate weight plus null features.
pub fn known_dependency_spec(seed: u64) -> GeneratorSpec {
    GeneratorSpec::numeric(6, &[(0, 8.0)], 0.0, seed)
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// True posterior `P(y = 1 | x)` for every generated row of a numeric
/// spec, recomputed from the raw cells, with the drawn labels.
pub fn bayes_scores(spec: &GeneratorSpec, n: usize) -> (Vec<f64>, Vec<u8>) {
    let table = generate_table(n, spec).unwrap();
    let col = |name: &str| table.header.iter().position(|h| h == name).unwrap();
    let target = col(&spec.target);
    let mut scores = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for row in &table.rows {
        let x = |name: &str| row[col(name)].parse::<f64>().unwrap();
        let mut logit = spec.bias;
        for (name, w) in &spec.weights {
            logit += w * x(name);
        }
        for it in &spec.interactions {
            logit += it.weight * x(&it.a) * x(&it.b);
        }
        scores.push(sigmoid(logit));
        labels.push(if row[target] == "1" { 1 } else { 0 });
    }
    (scores, labels)
}

/// (tp, fp, tn, fn) by direct counting.
pub fn count(preds: &[u8], labels: &[u8]) -> (usize, usize, usize, usize) {
    let mut c = (0, 0, 0, 0);
    for (&p, &y) in preds.iter().zip(labels) {
        match (p, y) {
            (1, 1) => c.0 += 1,
            (1, 0) => c.1 += 1,
            (0, 0) => c.2 += 1,
            _ => c.3 += 1,
        }
    }
    c
}

pub fn f1_at(scores: &[f64], labels: &[u8], threshold: f64) -> f64 {
    let preds: Vec<u8> = scores.iter().map(|&s| (s >= threshold) as u8).collect();
    let (tp, fp, _, fn_) = count(&preds, labels);
    if tp == 0 {
        return 0.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
}

/// Average precision by visiting every distinct threshold.
pub fn reference_average_precision(scores: &[f64], labels: &[u8]) -> f64 {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let positives = labels.iter().filter(|&&y| y == 1).count() as f64;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    let (mut tp, mut fp, mut prev_recall, mut ap) = (0.0, 0.0, 0.0, 0.0);
    let mut i = 0;
    for t in thresholds {
        while i < order.len() && scores[order[i]] >= t {
            if labels[order[i]] == 1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        let recall = tp / positives;
        ap += (recall - prev_recall) * tp / (tp + fp);
        prev_recall = recall;
    }
    ap
}
