//! Model documents and warm start.

use serde::{Deserialize, Serialize};

use super::{Architecture, DeepTuneError, DeepTuneModel};
use crate::nn::{Network, NetworkDoc};
use crate::space::ConfigSpace;
use crate::Scalar;

pub const MODEL_FORMAT: &str = "crashtune-model";
pub const MODEL_VERSION: u32 = 1;

/// Serialized surrogate: architecture, layout fingerprint and all weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDoc {
    pub format: String,
    pub version: u32,
    pub fingerprint: String,
    pub input_width: usize,
    pub architecture: Architecture,
    pub trained: bool,
    pub trunk: NetworkDoc,
    pub crash_head: NetworkDoc,
    pub perf_head: NetworkDoc,
    pub rbf: Vec<NetworkDoc>,
    pub var_head: NetworkDoc,
}

impl<T: Scalar> DeepTuneModel<T> {
    pub fn to_doc(&self) -> ModelDoc {
        ModelDoc {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            fingerprint: self.fingerprint.clone(),
            input_width: self.input_width,
            architecture: self.arch.clone(),
            trained: self.trained,
            trunk: self.trunk.to_doc(),
            crash_head: self.crash_head.to_doc(),
            perf_head: self.perf_head.to_doc(),
            rbf: self.rbf.iter().map(Network::to_doc).collect(),
            var_head: self.var_head.to_doc(),
        }
    }

    pub fn save(&self) -> String {
        serde_json::to_string(&self.to_doc()).expect("model serializes")
    }

    /// Rebuild a model from its document. Optimizer state starts fresh.
    pub fn from_doc(doc: &ModelDoc) -> Result<Self, DeepTuneError> {
        if doc.format != MODEL_FORMAT || doc.version != MODEL_VERSION {
            return Err(DeepTuneError::Format(format!(
                "expected {MODEL_FORMAT} version {MODEL_VERSION}, found {} version {}",
                doc.format, doc.version
            )));
        }
        let trunk = Network::from_doc(&doc.trunk)?;
        let crash_head = Network::from_doc(&doc.crash_head)?;
        let perf_head = Network::from_doc(&doc.perf_head)?;
        let rbf = doc.rbf.iter().map(Network::from_doc).collect::<Result<Vec<_>, _>>()?;
        let var_head = Network::from_doc(&doc.var_head)?;
        let arch = doc.architecture.clone();
        if trunk.input_width() != Some(doc.input_width)
            || trunk.layers().len() != 3 * arch.hidden.len()
            || rbf.len() != arch.hidden.len()
        {
            return Err(DeepTuneError::Format("networks do not match the declared architecture".into()));
        }
        let optimizers = (0..4 + rbf.len()).map(|_| super::optimizer(&arch)).collect();
        Ok(Self {
            arch,
            fingerprint: doc.fingerprint.clone(),
            input_width: doc.input_width,
            trunk,
            crash_head,
            perf_head,
            rbf,
            var_head,
            optimizers,
            centroids_ready: true,
            trained: doc.trained,
        })
    }

    pub fn load(text: &str) -> Result<Self, DeepTuneError> {
        let doc: ModelDoc = serde_json::from_str(text).map_err(|e| DeepTuneError::Format(e.to_string()))?;
        Self::from_doc(&doc)
    }

    /// Load a saved model for a search over `space`, which must have exactly
    /// the encoding layout the model was trained on.
    pub fn warm_start(text: &str, space: &ConfigSpace) -> Result<Self, DeepTuneError> {
        let model = Self::load(text)?;
        let layout = space.layout();
        if layout.width() != model.input_width {
            return Err(DeepTuneError::LayoutMismatch(format!(
                "model expects {} features, space encodes to {}",
                model.input_width,
                layout.width()
            )));
        }
        let fp = layout.fingerprint(space);
        if fp != model.fingerprint {
            return Err(DeepTuneError::LayoutMismatch(format!(
                "layout fingerprint {fp} differs from the model's {}",
                model.fingerprint
            )));
        }
        Ok(model)
    }
}
