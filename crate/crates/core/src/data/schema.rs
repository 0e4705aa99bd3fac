use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    /// Vocabulary in first-appearance order. Index `vocabulary.len()` is
    /// the reserved unknown-category slot.
    Categorical { vocabulary: Vec<String> },
}

/// Standardization statistics of a numeric column.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    #[serde(flatten)]
    pub kind: ColumnKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<ColumnStats>,
}

impl ColumnSchema {
    pub fn numeric(name: impl Into<String>) -> Self {
        ColumnSchema {
            name: name.into(),
            kind: ColumnKind::Numeric,
            stats: None,
        }
    }

    pub fn categorical(name: impl Into<String>, vocabulary: Vec<String>) -> Self {
        ColumnSchema {
            name: name.into(),
            kind: ColumnKind::Categorical { vocabulary },
            stats: None,
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self.kind, ColumnKind::Numeric)
    }

    /// Number of distinct encoded values including the unknown slot, or
    /// `None` for numeric columns.
    pub fn cardinality(&self) -> Option<usize> {
        match &self.kind {
            ColumnKind::Numeric => None,
            ColumnKind::Categorical { vocabulary } => Some(vocabulary.len() + 1),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    columns: Vec<ColumnSchema>,
}

impl FeatureSchema {
    pub fn new(columns: Vec<ColumnSchema>) -> Result<Self> {
        let mut names = HashSet::new();
        for c in &columns {
            if !names.insert(c.name.as_str()) {
                return Err(Error::Data(format!("duplicate column name {:?}", c.name)));
            }
            if let ColumnKind::Categorical { vocabulary } = &c.kind {
                let mut seen = HashSet::new();
                if let Some(dup) = vocabulary.iter().find(|v| !seen.insert(v.as_str())) {
                    return Err(Error::Data(format!("duplicate category {dup:?} in column {:?}", c.name)));
                }
            }
            if let Some(s) = c.stats {
                if !(s.std >= 0.0) {
                    return Err(Error::Data(format!("negative std in column {:?}", c.name)));
                }
            }
        }
        Ok(FeatureSchema { columns })
    }

    pub fn columns(&self) -> &[ColumnSchema] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Encoded index of a category token; unknown tokens map to the
    /// reserved slot.
    pub fn category_index(&self, column: usize, token: &str) -> Option<usize> {
        match &self.columns[column].kind {
            ColumnKind::Numeric => None,
            ColumnKind::Categorical { vocabulary } => Some(
                vocabulary
                    .iter()
                    .position(|v| v == token)
                    .unwrap_or(vocabulary.len()),
            ),
        }
    }

    pub(crate) fn columns_mut(&mut self) -> &mut [ColumnSchema] {
        &mut self.columns
    }

    /// Hex SHA-256 over names, kinds and vocabularies. Standardization
    /// statistics are not part of the fingerprint.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for c in &self.columns {
            h.update(c.name.as_bytes());
            h.update([0u8]);
            match &c.kind {
                ColumnKind::Numeric => h.update(b"numeric"),
                ColumnKind::Categorical { vocabulary } => {
                    h.update(b"categorical");
                    for v in vocabulary {
                        h.update([0u8]);
                        h.update(v.as_bytes());
                    }
                }
            }
            h.update([1u8]);
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}
