use std::path::Path;

use serde::{Deserialize, Serialize};

use super::atomic::{read_bytes, write_atomic};
use crate::error::{Error, Result};
use crate::geometry::{Point, TemporalArtifact};

/// JSON document `{"steps": [[[dx, dy] x N] x (T-1)], "provenance"?}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactFile {
    pub steps: Vec<Vec<Point>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

impl ArtifactFile {
    pub fn from_artifact(artifact: &TemporalArtifact) -> Self {
        Self {
            steps: artifact.to_nested(),
            provenance: None,
        }
    }

    pub fn artifact(&self) -> Result<TemporalArtifact> {
        TemporalArtifact::from_steps(self.steps.clone())
    }

    pub fn load(path: &Path) -> Result<Self> {
        serde_json::from_slice(&read_bytes(path)?).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec(self).map_err(|e| Error::format(path, e.to_string()))?;
        bytes.push(b'\n');
        write_atomic(path, &bytes)
    }
}
