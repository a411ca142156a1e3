use crate::diffcore::ParamVector;
use serde::{Deserialize, Serialize};

use super::features::feature_schema_hash;
use super::scorer::{JudgeParams, ScorerShape};
use super::JudgeError;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Serialized judge: parameters in fixed order, τ, the feature layout it
/// was trained on and the run that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeCheckpoint {
    pub version: u32,
    pub shape: ScorerShape,
    pub params: Vec<f64>,
    pub tau: f64,
    pub feature_schema_hash: String,
    pub manifest_id: String,
}

impl JudgeCheckpoint {
    pub fn new(judge: &JudgeParams, manifest_id: impl Into<String>) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            shape: judge.shape,
            params: judge.params.values.clone(),
            tau: judge.tau,
            feature_schema_hash: feature_schema_hash(),
            manifest_id: manifest_id.into(),
        }
    }

    /// Validates version, feature layout, parameter count and τ.
    pub fn judge(&self) -> Result<JudgeParams, JudgeError> {
        if self.version != CHECKPOINT_VERSION {
            return Err(JudgeError::Checkpoint(format!(
                "unsupported version {} (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        if self.feature_schema_hash != feature_schema_hash() {
            return Err(JudgeError::Checkpoint(
                "feature schema hash mismatch".into(),
            ));
        }
        if self.params.len() != self.shape.num_params() {
            return Err(JudgeError::Dimension {
                expected: self.shape.num_params(),
                got: self.params.len(),
            });
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(JudgeError::Checkpoint(format!(
                "temperature must be positive, got {}",
                self.tau
            )));
        }
        Ok(JudgeParams {
            shape: self.shape,
            params: ParamVector::new(self.params.clone()),
            tau: self.tau,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, JudgeError> {
        serde_json::from_str(s).map_err(|e| JudgeError::Checkpoint(e.to_string()))
    }
}
