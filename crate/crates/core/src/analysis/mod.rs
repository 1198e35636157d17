//! Temporal-artifact statistics and noise baselines.

pub mod baselines;
pub mod correlation;
pub mod summary;

pub use baselines::{
    cholesky_factor, estimate_artifact_covariance, iid_noise_baseline, multivariate_noise_baseline,
    rigid_region_fixture, MAX_JITTER,
};
pub use correlation::{
    artifact_series, block_structure_score, correlation_matrix, region_blocks, ArtifactSeries,
    CorrelationMatrix, SeriesComponent,
};
pub use summary::{summarize_artifact, ArtifactSummary};
