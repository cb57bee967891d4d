use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Model, PipelineError, Result};
use crate::analytics::OpVocabulary;
use crate::sage::{ArchConfig, ModelParams, SageError, WeightsDoc};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    version: u32,
    arch: ArchConfig,
    vocab: OpVocabulary,
    weights: WeightsDoc,
}

/// Writes the model as one compact JSON document. Floats are printed in
/// shortest round-trip form, so reloading is exact.
pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    let doc = ModelDoc {
        version: MODEL_FORMAT_VERSION,
        arch: model.params.arch.clone(),
        vocab: model.vocab.clone(),
        weights: WeightsDoc::from_weights(&model.params.weights),
    };
    let mut text = serde_json::to_string(&doc).expect("model serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_model(path: &Path) -> Result<Model> {
    let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let malformed = |reason: String| PipelineError::Malformed {
        path: path.to_path_buf(),
        reason,
    };
    let value: Value = serde_json::from_str(&text).map_err(|e| malformed(e.to_string()))?;
    let version = value
        .get("version")
        .and_then(Value::as_u64)
        .ok_or_else(|| malformed("missing `version`".into()))?;
    if version != u64::from(MODEL_FORMAT_VERSION) {
        return Err(PipelineError::VersionMismatch(
            u32::try_from(version).unwrap_or(u32::MAX),
        ));
    }
    let doc: ModelDoc = serde_json::from_value(value).map_err(|e| malformed(e.to_string()))?;
    if doc.vocab.len() != doc.arch.vocab_size {
        return Err(SageError::ShapeMismatch("vocab".into()).into());
    }
    let weights = doc.weights.into_weights(&doc.arch)?;
    let params = ModelParams {
        arch: doc.arch,
        weights,
    };
    params.validate()?;
    Ok(Model {
        params,
        vocab: doc.vocab,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sage::init_params;

    fn small_model() -> Model {
        let vocab = OpVocabulary::from_names(
            ["<unk>", "add", "load"].iter().map(|s| s.to_string()).collect(),
        )
        .unwrap();
        let arch = ArchConfig {
            embed_dim: 3,
            hidden_dim: 4,
            num_sage_layers: 2,
            ..ArchConfig::new(vocab.len())
        };
        Model {
            params: init_params(&arch, 5).unwrap(),
            vocab,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let m = small_model();
        save_model(&m, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), m);
    }

    #[test]
    fn load_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_model(&small_model(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();

        std::fs::write(&path, &text[..text.len() / 2]).unwrap();
        match load_model(&path) {
            Err(PipelineError::Malformed { path: p, .. }) => assert_eq!(p, path),
            other => panic!("{other:?}"),
        }

        std::fs::write(&path, text.replacen("\"version\":1", "\"version\":2", 1)).unwrap();
        assert!(matches!(load_model(&path), Err(PipelineError::VersionMismatch(2))));

        std::fs::write(&path, text.replacen("\"hidden_dim\":4", "\"hidden_dim\":5", 1)).unwrap();
        assert!(matches!(
            load_model(&path),
            Err(PipelineError::Sage(SageError::ShapeMismatch(_)))
        ));

        assert!(matches!(
            load_model(&dir.path().join("missing.json")),
            Err(PipelineError::Io { .. })
        ));
    }
}
