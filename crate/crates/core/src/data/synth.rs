use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, LoadOptions, RawTable};
use crate::error::{Error, Result};
use crate::tensor::sigmoid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GenColumnKind {
    Numeric,
    Categorical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenColumn {
    pub name: String,
    pub kind: GenColumnKind,
    /// Category count (categorical only).
    #[serde(default = "default_categories")]
    pub categories: usize,
    /// Per-category additive logit effect (categorical only; empty = none).
    #[serde(default)]
    pub effects: Vec<f64>,
    /// Subject to `missing_rate` when true.
    #[serde(default)]
    pub lab: bool,
}

fn default_categories() -> usize {
    3
}

/// Pairwise product term `weight * x_a * x_b` in the logit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interaction {
    pub a: String,
    pub b: String,
    pub weight: f64,
}

/// Ground-truth generator: numeric features are standard normal,
/// categorical ones uniform, and `y ~ Bernoulli(sigmoid(logit))` with
/// `logit = bias + Σ weights[c]·x_c + Σ effects + Σ interactions`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub columns: Vec<GenColumn>,
    /// Sparse weights keyed by numeric column name.
    #[serde(default)]
    pub weights: BTreeMap<String, f64>,
    #[serde(default)]
    pub bias: f64,
    #[serde(default)]
    pub interactions: Vec<Interaction>,
    /// Probability of flipping each label after sampling.
    #[serde(default)]
    pub noise_rate: f64,
    /// Probability that a `lab` cell is left empty.
    #[serde(default)]
    pub missing_rate: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_target")]
    pub target: String,
}

fn default_target() -> String {
    "y".into()
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, rate) in [("noise_rate", self.noise_rate), ("missing_rate", self.missing_rate)] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {rate}")));
            }
        }
        if self.columns.is_empty() {
            return Err(Error::Config("generator needs at least one column".into()));
        }
        let numeric = |name: &str| {
            self.columns
                .iter()
                .any(|c| c.name == name && c.kind == GenColumnKind::Numeric)
        };
        for name in self.weights.keys() {
            if !numeric(name) {
                return Err(Error::Config(format!("weight for unknown numeric column {name:?}")));
            }
        }
        for it in &self.interactions {
            if !numeric(&it.a) || !numeric(&it.b) {
                return Err(Error::Config(format!(
                    "interaction {:?} x {:?} must reference numeric columns",
                    it.a, it.b
                )));
            }
        }
        for c in &self.columns {
            if c.name == self.target {
                return Err(Error::Config(format!("column {:?} collides with target", c.name)));
            }
            if c.kind == GenColumnKind::Categorical {
                if c.categories == 0 {
                    return Err(Error::Config(format!("column {:?} needs at least one category", c.name)));
                }
                if !c.effects.is_empty() && c.effects.len() != c.categories {
                    return Err(Error::Config(format!(
                        "column {:?}: {} effects for {} categories",
                        c.name,
                        c.effects.len(),
                        c.categories
                    )));
                }
            }
        }
        Ok(())
    }

    /// Numeric-only spec with `n_features` columns named `x0..`, the given
    /// sparse weights and no noise.
    pub fn numeric(n_features: usize, weights: &[(usize, f64)], bias: f64, seed: u64) -> Self {
        GeneratorSpec {
            columns: (0..n_features)
                .map(|j| GenColumn {
                    name: format!("x{j}"),
                    kind: GenColumnKind::Numeric,
                    categories: default_categories(),
                    effects: Vec::new(),
                    lab: false,
                })
                .collect(),
            weights: weights.iter().map(|&(j, w)| (format!("x{j}"), w)).collect(),
            bias,
            interactions: Vec::new(),
            noise_rate: 0.0,
            missing_rate: 0.0,
            seed,
            target: default_target(),
        }
    }
}

/// Draws `n` rows as string cells (missing cells empty), target last.
/// Each row consumes the stream in column order, then the label draw, the
/// noise draw, and one missingness draw per lab column.
pub fn generate_table(n: usize, spec: &GeneratorSpec) -> Result<RawTable> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let index: BTreeMap<&str, usize> = spec.columns.iter().enumerate().map(|(j, c)| (c.name.as_str(), j)).collect();
    let weights: Vec<(usize, f64)> = spec.weights.iter().map(|(k, &w)| (index[k.as_str()], w)).collect();
    let interactions: Vec<(usize, usize, f64)> = spec
        .interactions
        .iter()
        .map(|it| (index[it.a.as_str()], index[it.b.as_str()], it.weight))
        .collect();

    let mut header: Vec<String> = spec.columns.iter().map(|c| c.name.clone()).collect();
    header.push(spec.target.clone());
    let mut rows = Vec::with_capacity(n);
    let mut values = vec![0.0; spec.columns.len()];
    for _ in 0..n {
        let mut logit = spec.bias;
        let mut cells = Vec::with_capacity(header.len());
        for (j, col) in spec.columns.iter().enumerate() {
            match col.kind {
                GenColumnKind::Numeric => {
                    let v: f64 = rng.sample(StandardNormal);
                    values[j] = v;
                    cells.push(format!("{v}"));
                }
                GenColumnKind::Categorical => {
                    let c = rng.gen_range(0..col.categories);
                    values[j] = c as f64;
                    if let Some(e) = col.effects.get(c) {
                        logit += e;
                    }
                    cells.push(format!("c{c}"));
                }
            }
        }
        for &(j, w) in &weights {
            logit += w * values[j];
        }
        for &(a, b, w) in &interactions {
            logit += w * values[a] * values[b];
        }
        let mut y = rng.gen::<f64>() < sigmoid(logit);
        if rng.gen::<f64>() < spec.noise_rate {
            y = !y;
        }
        for (j, col) in spec.columns.iter().enumerate() {
            if col.lab && rng.gen::<f64>() < spec.missing_rate {
                cells[j].clear();
            }
        }
        cells.push(if y { "1" } else { "0" }.to_string());
        rows.push(cells);
    }
    Ok(RawTable { header, rows })
}

/// [`generate_table`] followed by the standard ingestion path.
pub fn generate_synthetic(n: usize, spec: &GeneratorSpec) -> Result<Dataset> {
    let table = generate_table(n, spec)?;
    let mut opts = LoadOptions::default();
    for c in &spec.columns {
        let hint = match c.kind {
            GenColumnKind::Numeric => super::KindHint::Numeric,
            GenColumnKind::Categorical => super::KindHint::Categorical,
        };
        opts.schema_hints.insert(c.name.clone(), hint);
    }
    Dataset::from_raw(&table, &spec.target, &opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_rates() {
        let mut spec = GeneratorSpec::numeric(2, &[], 0.0, 0);
        spec.noise_rate = 1.5;
        assert!(generate_table(10, &spec).is_err());
        spec.noise_rate = 0.0;
        spec.missing_rate = -0.1;
        assert!(generate_table(10, &spec).is_err());
    }

    #[test]
    fn zero_weights_give_fair_coin() {
        let spec = GeneratorSpec::numeric(3, &[], 0.0, 11);
        let ds = generate_synthetic(4000, &spec).unwrap();
        let sigma = (0.25f64 / 4000.0).sqrt();
        assert!((ds.prevalence() - 0.5).abs() < 3.0 * sigma, "{}", ds.prevalence());
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = GeneratorSpec::numeric(3, &[(0, 2.0)], 0.0, 5);
        assert_eq!(generate_synthetic(200, &spec).unwrap(), generate_synthetic(200, &spec).unwrap());
        let mut other = spec.clone();
        other.seed = 6;
        assert_ne!(generate_table(200, &spec).unwrap(), generate_table(200, &other).unwrap());
    }

    #[test]
    fn missing_cells_are_empty_and_imputed() {
        let mut spec = GeneratorSpec::numeric(2, &[(0, 1.0)], 0.0, 2);
        spec.columns[1].lab = true;
        spec.missing_rate = 0.5;
        let t = generate_table(500, &spec).unwrap();
        let empty = t.rows.iter().filter(|r| r[1].is_empty()).count();
        assert!(empty > 150 && empty < 350, "{empty}");
        assert!(t.rows.iter().all(|r| !r[0].is_empty()));
        let ds = generate_synthetic(500, &spec).unwrap();
        assert_eq!(ds.column(1).iter().filter(|&&v| v == 0.0).count(), empty);
    }

    #[test]
    fn categorical_columns_roundtrip() {
        let spec = GeneratorSpec {
            columns: vec![GenColumn {
                name: "site".into(),
                kind: GenColumnKind::Categorical,
                categories: 4,
                effects: vec![-2.0, 0.0, 0.0, 2.0],
                lab: false,
            }],
            ..GeneratorSpec::numeric(0, &[], 0.0, 1)
        };
        let ds = generate_synthetic(300, &spec).unwrap();
        assert_eq!(ds.schema().columns()[0].cardinality(), Some(5));
    }

    #[test]
    fn spec_json_field_names() {
        let json = r#"{"columns":[{"name":"a","kind":"numeric"}],"weights":{"a":1.0},
            "bias":0.5,"noise_rate":0.1,"missing_rate":0.0,"seed":3}"#;
        let spec: GeneratorSpec = serde_json::from_str(json).unwrap();
        assert_eq!(spec.weights["a"], 1.0);
        assert_eq!(spec.target, "y");
    }
}
