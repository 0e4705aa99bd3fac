use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{InputLayout, Model, ModelConfig, ModelKind, ParamMeta};
use crate::data::{ColumnStats, FeatureSchema, Standardizer};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "tabformer-checkpoint/1";

/// JSON half of a checkpoint. Parameter values live next to it in a flat
/// little-endian f64 file, in declaration order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub kind: ModelKind,
    pub config: ModelConfig,
    pub schema_fingerprint: String,
    /// Schema including the standardization statistics the model was
    /// trained with.
    pub schema: FeatureSchema,
    pub seed: u64,
    pub params: Vec<ParamMeta>,
    pub params_file: String,
}

impl CheckpointManifest {
    pub fn standardizer(&self) -> Standardizer {
        Standardizer::from_stats(
            self.schema
                .columns()
                .iter()
                .map(|c| if c.is_numeric() { Some(c.stats.unwrap_or(ColumnStats { mean: 0.0, std: 1.0 })) } else { None })
                .collect(),
        )
    }
}

fn params_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

pub fn save_checkpoint(
    model: &Model,
    config: &ModelConfig,
    schema: &FeatureSchema,
    seed: u64,
    manifest_path: &Path,
) -> Result<CheckpointManifest> {
    if InputLayout::from_schema(schema) != *model.layout() {
        return Err(Error::Data("schema does not match the model's input layout".into()));
    }
    let bin = params_path(manifest_path);
    let manifest = CheckpointManifest {
        format: CHECKPOINT_FORMAT.into(),
        kind: model.kind(),
        config: config.clone(),
        schema_fingerprint: schema.fingerprint(),
        schema: schema.clone(),
        seed,
        params: model.params().meta(),
        params_file: bin
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    let bytes: Vec<u8> = model.params().flatten().iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))?;
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(manifest_path, json).map_err(|e| Error::io(manifest_path, e))?;
    Ok(manifest)
}

pub fn load_checkpoint(manifest_path: &Path) -> Result<(Model, CheckpointManifest)> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: CheckpointManifest = serde_json::from_str(&text)?;
    if manifest.format != CHECKPOINT_FORMAT {
        return Err(Error::Data(format!("unsupported checkpoint format {:?}", manifest.format)));
    }
    if manifest.schema.fingerprint() != manifest.schema_fingerprint {
        return Err(Error::Data("checkpoint schema does not match its fingerprint".into()));
    }
    let layout = InputLayout::from_schema(&manifest.schema);
    let mut model = Model::new(manifest.kind, &manifest.config, &layout, manifest.seed)?;
    if model.params().meta() != manifest.params {
        return Err(Error::Data("checkpoint parameter list does not match the model architecture".into()));
    }
    let bin = manifest_path.with_file_name(&manifest.params_file);
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Data(format!("{}: length {} is not a multiple of 8", bin.display(), bytes.len())));
    }
    let flat: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    model.params_mut().load_flat(&flat)?;
    Ok((model, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ColumnSchema;

    #[test]
    fn roundtrip_and_tamper_detection() {
        let dir = tempfile::tempdir().unwrap();
        let schema = FeatureSchema::new(vec![
            ColumnSchema::numeric("a"),
            ColumnSchema::categorical("c", vec!["x".into(), "y".into()]),
        ])
        .unwrap();
        let cfg = ModelConfig {
            embed_dim: 4,
            n_heads: 2,
            n_blocks: 1,
            ffn_dim: 8,
            ..Default::default()
        };
        let model = Model::new(ModelKind::Transformer, &cfg, &InputLayout::from_schema(&schema), 9).unwrap();
        let path = dir.path().join("m.json");
        save_checkpoint(&model, &cfg, &schema, 9, &path).unwrap();
        let raw = fs::read(dir.path().join("m.bin")).unwrap();
        assert_eq!(raw.len(), model.params().numel() * 8);
        assert_eq!(&raw[..8], &model.params().flatten()[0].to_le_bytes());

        let (loaded, manifest) = load_checkpoint(&path).unwrap();
        assert_eq!(loaded, model);
        assert_eq!(manifest.schema_fingerprint, schema.fingerprint());

        let text = fs::read_to_string(&path).unwrap().replace("\"x\"", "\"z\"");
        fs::write(&path, text).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
