//! Candidate classifiers and their on-disk format.
//!
//! Model files are single JSON documents carrying a format version and a
//! `kind` tag, so a file trained as one model type cannot be silently
//! loaded as another.

pub mod ert;
pub mod mlp;

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::core::N_SUPERLAYERS;

pub use ert::{ErtHyperparams, ErtModel};
pub use mlp::{MlpHyperparams, MlpModel};

/// Version tag every model file must carry.
pub const MODEL_FORMAT: &str = "trackcull-model-v1";

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("bad hyperparameters: {reason}")]
    BadHyperparams { reason: String },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training loss became non-finite at epoch {epoch}, batch {batch} (lr {lr:e})")]
    NonFiniteLoss { epoch: usize, batch: usize, lr: f64 },
    #[error("unsupported model format {found:?} (expected {MODEL_FORMAT:?})")]
    FormatVersion { found: String },
    #[error("model kind {found:?} where {expected:?} was required")]
    KindMismatch {
        expected: &'static str,
        found: String,
    },
    #[error("malformed model file: {0}")]
    MalformedJson(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Anything that scores a candidate into `(p_invalid, p_valid)`.
/// The pair is a probability distribution: non-negative, summing to one.
/// `Send + Sync` so reconstruction can score events from parallel workers.
pub trait Classifier: Send + Sync {
    fn predict_proba(&self, features: &[f64; N_SUPERLAYERS]) -> (f64, f64);
}

/// A trained model of either kind, as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Model {
    Mlp(MlpModel),
    Ert(ErtModel),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Mlp(_) => "mlp",
            Model::Ert(_) => "ert",
        }
    }

    pub fn into_mlp(self) -> Result<MlpModel, ModelError> {
        match self {
            Model::Mlp(m) => Ok(m),
            other => Err(ModelError::KindMismatch {
                expected: "mlp",
                found: other.kind().to_string(),
            }),
        }
    }

    pub fn into_ert(self) -> Result<ErtModel, ModelError> {
        match self {
            Model::Ert(m) => Ok(m),
            other => Err(ModelError::KindMismatch {
                expected: "ert",
                found: other.kind().to_string(),
            }),
        }
    }
}

impl Classifier for Model {
    fn predict_proba(&self, features: &[f64; N_SUPERLAYERS]) -> (f64, f64) {
        match self {
            Model::Mlp(m) => m.predict_proba(features),
            Model::Ert(m) => m.predict_proba(features),
        }
    }
}

#[derive(Serialize)]
struct ModelFileRef<'a> {
    format: &'a str,
    #[serde(flatten)]
    model: &'a Model,
}

pub fn save_model<W: Write>(writer: W, model: &Model) -> Result<(), ModelError> {
    let mut w = BufWriter::new(writer);
    serde_json::to_writer(
        &mut w,
        &ModelFileRef {
            format: MODEL_FORMAT,
            model,
        },
    )?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Parse a model file, distinguishing a wrong format version, an unknown
/// or unexpected kind, and plain JSON damage.
pub fn load_model<R: Read>(reader: R) -> Result<Model, ModelError> {
    let value: serde_json::Value = serde_json::from_reader(BufReader::new(reader))?;
    let format = value.get("format").and_then(|v| v.as_str()).unwrap_or("");
    if format != MODEL_FORMAT {
        return Err(ModelError::FormatVersion {
            found: format.to_string(),
        });
    }
    let kind = value
        .get("kind")
        .and_then(|v| v.as_str())
        .unwrap_or("")
        .to_string();
    if kind != "mlp" && kind != "ert" {
        return Err(ModelError::KindMismatch {
            expected: "mlp or ert",
            found: kind,
        });
    }
    Ok(serde_json::from_value(value)?)
}

pub fn save_model_file<P: AsRef<Path>>(path: P, model: &Model) -> Result<(), ModelError> {
    save_model(File::create(path)?, model)
}

pub fn load_model_file<P: AsRef<Path>>(path: P) -> Result<Model, ModelError> {
    load_model(File::open(path)?)
}

/// Load a file that must contain a network.
pub fn load_mlp_file<P: AsRef<Path>>(path: P) -> Result<MlpModel, ModelError> {
    load_model_file(path)?.into_mlp()
}

/// Load a file that must contain a forest.
pub fn load_ert_file<P: AsRef<Path>>(path: P) -> Result<ErtModel, ModelError> {
    load_model_file(path)?.into_ert()
}
