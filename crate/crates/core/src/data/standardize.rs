use serde::{Deserialize, Serialize};

use super::{ColumnStats, Dataset};
use crate::error::{Error, Result};

/// Lower bound on the divisor used for standardization.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-column statistics; `None` for categorical columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    stats: Vec<Option<ColumnStats>>,
}

/// Fits mean and population std of every numeric column over `rows` only.
pub fn fit_standardizer(data: &Dataset, rows: &[usize]) -> Result<Standardizer> {
    if rows.len() < 2 {
        return Err(Error::Data(format!(
            "standardizer needs at least 2 training rows, got {}",
            rows.len()
        )));
    }
    let n = rows.len() as f64;
    let stats = data
        .schema()
        .columns()
        .iter()
        .enumerate()
        .map(|(j, col)| {
            col.is_numeric().then(|| {
                let mean = rows.iter().map(|&r| data.row(r)[j]).sum::<f64>() / n;
                let var = rows
                    .iter()
                    .map(|&r| {
                        let d = data.row(r)[j] - mean;
                        d * d
                    })
                    .sum::<f64>()
                    / n;
                ColumnStats { mean, std: var.sqrt() }
            })
        })
        .collect();
    Ok(Standardizer { stats })
}

impl Standardizer {
    pub fn from_stats(stats: Vec<Option<ColumnStats>>) -> Self {
        Standardizer { stats }
    }

    pub fn stats(&self) -> &[Option<ColumnStats>] {
        &self.stats
    }

    /// Maps numeric columns to `(x - mean) / max(std, STD_FLOOR)` and
    /// records the statistics in the output schema.
    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        let d = data.n_features();
        if self.stats.len() != d {
            return Err(Error::Data(format!("standardizer has {} columns, dataset {d}", self.stats.len())));
        }
        for (j, (col, st)) in data.schema().columns().iter().zip(&self.stats).enumerate() {
            if col.is_numeric() != st.is_some() {
                return Err(Error::Data(format!("standardizer column {j} kind does not match {:?}", col.name)));
            }
        }
        let (mut features, labels, mut schema, row_ids) = data.clone().into_parts();
        for row in features.chunks_mut(d) {
            for (v, st) in row.iter_mut().zip(&self.stats) {
                if let Some(st) = st {
                    *v = (*v - st.mean) / st.std.max(STD_FLOOR);
                }
            }
        }
        for (col, st) in schema.columns_mut().iter_mut().zip(&self.stats) {
            col.stats = *st;
        }
        Dataset::with_row_ids(features, labels, schema, row_ids)
    }
}
