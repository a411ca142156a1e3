//! Run manifests: the seeded, versioned record that replays an artifact.

use crate::rng::content_hash;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub master_seed: u64,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub corpus_hashes: BTreeMap<String, String>,
    /// Wall-clock creation time. Informational only: excluded from [`Self::id`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<String>,
}

impl RunManifest {
    pub fn new(command: &str, master_seed: u64, config: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            tool_version: TOOL_VERSION.to_string(),
            master_seed,
            config,
            seeds: BTreeMap::new(),
            corpus_hashes: BTreeMap::new(),
            created_at: None,
        }
    }

    /// Content hash of everything except the timestamp.
    pub fn id(&self) -> String {
        let mut bare = self.clone();
        bare.created_at = None;
        content_hash(
            serde_json::to_string(&bare)
                .expect("manifest serializes")
                .as_bytes(),
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}
