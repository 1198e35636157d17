use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::{artifact_l1, FaceRegion, TemporalArtifact};

/// Total artifact L1 and its split over the face regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactSummary {
    pub artifact_l1: f64,
    pub regions: BTreeMap<String, f64>,
}

pub fn summarize_artifact(artifact: &TemporalArtifact) -> ArtifactSummary {
    ArtifactSummary {
        artifact_l1: artifact_l1(artifact),
        regions: FaceRegion::ALL
            .iter()
            .filter(|r| r.indices().end <= artifact.num_points())
            .map(|r| (r.name().to_string(), artifact.l1_over(r.indices())))
            .collect(),
    }
}
