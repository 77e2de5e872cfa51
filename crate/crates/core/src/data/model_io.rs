//! Versioned JSON model documents.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::Dataset;
use crate::deep::{project_deep, DeepModel};
use crate::error::{Error, Result};
use crate::kernel::{project_kernel, project_rff, KernelModel, RffModel};
use crate::linalg::Matrix;
use crate::linear::{project, LinearModel};

pub const MODEL_VERSION: &str = "mvembed-model/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "model", rename_all = "lowercase")]
pub enum Model {
    Linear(LinearModel),
    Kernel(KernelModel),
    Rff(RffModel),
    Deep(DeepModel),
}

impl Model {
    pub fn family(&self) -> &'static str {
        match self {
            Model::Linear(_) => "linear",
            Model::Kernel(_) => "kernel",
            Model::Rff(_) => "rff",
            Model::Deep(_) => "deep",
        }
    }

    pub fn method_name(&self) -> &'static str {
        match self {
            Model::Linear(m) => m.spec.method.name(),
            Model::Kernel(m) => m.spec.method.name(),
            Model::Rff(m) => m.linear.spec.method.name(),
            Model::Deep(m) => m.method.name(),
        }
    }

    pub fn num_views(&self) -> usize {
        match self {
            Model::Linear(m) => m.num_views(),
            Model::Kernel(m) => m.num_views(),
            Model::Rff(m) => m.maps.len(),
            Model::Deep(m) => m.num_views(),
        }
    }

    pub fn eigenvalues(&self) -> &[f64] {
        match self {
            Model::Linear(m) => &m.solution.eigenvalues,
            Model::Kernel(m) => &m.eigenvalues,
            Model::Rff(m) => &m.linear.solution.eigenvalues,
            Model::Deep(m) => &m.eigenvalues,
        }
    }

    /// Latent features of every view.
    pub fn project(&self, data: &Dataset) -> Result<Vec<Matrix>> {
        match self {
            Model::Linear(m) => project(m, data),
            Model::Kernel(m) => project_kernel(m, data),
            Model::Rff(m) => project_rff(m, data),
            Model::Deep(m) => project_deep(m, data),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub version: String,
    pub method: String,
    pub views: usize,
    /// SHA-256 of the stored training matrices, kernel models only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training_checksum: Option<String>,
    /// Free-form settings recorded by the caller.
    #[serde(default)]
    pub metadata: serde_json::Value,
    #[serde(flatten)]
    pub model: Model,
}

impl ModelDocument {
    pub fn new(model: Model, metadata: serde_json::Value) -> Self {
        ModelDocument {
            version: MODEL_VERSION.into(),
            method: model.method_name().into(),
            views: model.num_views(),
            training_checksum: kernel_checksum(&model),
            metadata,
            model,
        }
    }
}

/// Hex SHA-256 over the shapes and bit patterns of the matrices.
pub fn matrices_checksum<'a>(ms: impl IntoIterator<Item = &'a Matrix>) -> String {
    let mut h = Sha256::new();
    for m in ms {
        h.update((m.nrows() as u64).to_le_bytes());
        h.update((m.ncols() as u64).to_le_bytes());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                h.update(m[(r, c)].to_bits().to_le_bytes());
            }
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn kernel_checksum(model: &Model) -> Option<String> {
    match model {
        Model::Kernel(k) => Some(matrices_checksum(k.views.iter().map(|v| &v.train))),
        _ => None,
    }
}

pub fn save_model(doc: &ModelDocument, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(doc).map_err(|e| Error::Parse(e.to_string()))?;
    text.push('\n');
    super::io::write_text(path, &text)
}

/// Reads and validates a model document. Nothing is returned unless the whole
/// file parses and its checks pass.
pub fn load_model(path: &Path) -> Result<ModelDocument> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let version = value
        .get("version")
        .and_then(|v| v.as_str())
        .ok_or_else(|| Error::Parse(format!("{}: missing `version`", path.display())))?;
    if version != MODEL_VERSION {
        return Err(Error::VersionMismatch {
            found: version.to_string(),
            expected: MODEL_VERSION.into(),
        });
    }
    let doc: ModelDocument =
        serde_json::from_value(value).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    if doc.training_checksum != kernel_checksum(&doc.model) {
        return Err(Error::Load {
            path: path.to_path_buf(),
            field: "training_checksum".into(),
            message: "does not match the stored training data".into(),
        });
    }
    if doc.views != doc.model.num_views() {
        return Err(Error::Load {
            path: path.to_path_buf(),
            field: "views".into(),
            message: format!("declares {} views, model has {}", doc.views, doc.model.num_views()),
        });
    }
    Ok(doc)
}
