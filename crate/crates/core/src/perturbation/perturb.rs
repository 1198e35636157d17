//! Latent-weight perturbation, region sampling and landmark composition.

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{temporal_artifacts, InnerRegion, LandmarkSequence, TemporalArtifact};
use crate::lpn::{LpnModel, WeightMatrix};

/// Default noise standard deviation on the perturbed weight column.
pub const DEFAULT_SIGMA: f64 = 0.007;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "rule", content = "regions")]
pub enum RegionRule {
    /// Uniform over the non-empty subsets of the inner-face regions.
    #[default]
    UniformSubset,
    /// Always the given regions.
    Fixed(Vec<InnerRegion>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbationSpec {
    pub sigma: f64,
    /// Number of distinct weight columns perturbed per clip.
    pub columns: usize,
    pub region_rule: RegionRule,
    pub seed: u64,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        Self {
            sigma: DEFAULT_SIGMA,
            columns: 1,
            region_rule: RegionRule::UniformSubset,
            seed: 0,
        }
    }
}

impl PerturbationSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config("sigma must be finite and non-negative".into()));
        }
        if self.columns == 0 {
            return Err(Error::Config("at least one column must be perturbed".into()));
        }
        if let RegionRule::Fixed(r) = &self.region_rule {
            if r.is_empty() {
                return Err(Error::Config("fixed region set is empty".into()));
            }
        }
        Ok(())
    }
}

/// Adds i.i.d. `N(0, sigma^2)` noise over time to `spec.columns` distinct
/// columns chosen uniformly. Returns the new matrix and the chosen columns.
/// Every other entry is left untouched; `sigma = 0` returns `w` unchanged.
pub fn perturb_weights(
    w: &WeightMatrix,
    spec: &PerturbationSpec,
    rng: &mut ChaCha8Rng,
) -> Result<(WeightMatrix, Vec<usize>)> {
    spec.validate()?;
    let k = w.bases();
    if spec.columns > k {
        return Err(Error::invalid(format!(
            "cannot perturb {} of {k} columns",
            spec.columns
        )));
    }
    let columns: Vec<usize> = if spec.columns == 1 {
        vec![rng.random_range(0..k)]
    } else {
        sample(rng, k, spec.columns).into_vec()
    };
    let mut out = w.clone();
    if spec.sigma > 0.0 {
        let noise = Normal::new(0.0, spec.sigma).expect("sigma validated");
        let values = out.values_mut();
        for &c in &columns {
            for t in 0..values.nrows() {
                values[[t, c]] += noise.sample(rng);
            }
        }
    }
    Ok((out, columns))
}

/// Draws the regions whose landmarks take the perturbed positions.
pub fn sample_regions(spec: &PerturbationSpec, rng: &mut ChaCha8Rng) -> Vec<InnerRegion> {
    match &spec.region_rule {
        RegionRule::Fixed(regions) => {
            let mut r = regions.clone();
            r.sort();
            r.dedup();
            r
        }
        RegionRule::UniformSubset => {
            let subsets = (1u32 << InnerRegion::ALL.len()) - 1;
            let mask = rng.random_range(1..=subsets);
            InnerRegion::ALL
                .into_iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, r)| r)
                .collect()
        }
    }
}

/// Landmarks of `regions` from `perturbed`, everything else from `original`.
pub fn compose_landmarks(
    original: &LandmarkSequence,
    perturbed: &LandmarkSequence,
    regions: &[InnerRegion],
) -> Result<LandmarkSequence> {
    original.check_same_shape(perturbed, "compose_landmarks")?;
    let mut selected = vec![false; original.num_points()];
    for j in regions.iter().flat_map(|r| r.indices()) {
        if j >= selected.len() {
            return Err(Error::invalid("region index outside the landmark layout"));
        }
        selected[j] = true;
    }
    Ok(original.map_points(|t, j, p| if selected[j] { perturbed.point(t, j) } else { p }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationMetadata {
    pub columns: Vec<usize>,
    pub regions: Vec<InnerRegion>,
    pub sigma: f64,
    pub seed: u64,
}

/// Output of the landmark stage of the pipeline.
#[derive(Debug, Clone)]
pub struct PseudoFake {
    /// Morphing target.
    pub target: LandmarkSequence,
    /// `temporal_artifacts(target, original)`.
    pub artifact: TemporalArtifact,
    pub metadata: PerturbationMetadata,
}

/// encode -> perturb one column -> decode -> keep the sampled regions.
pub fn generate_pseudofake_landmarks(
    model: &LpnModel,
    seq: &LandmarkSequence,
    spec: &PerturbationSpec,
    rng: &mut ChaCha8Rng,
) -> Result<PseudoFake> {
    let w = model.encode(seq)?;
    let (perturbed_w, columns) = perturb_weights(&w, spec, rng)?;
    let decoded = model.decode(&perturbed_w)?;
    let regions = sample_regions(spec, rng);
    let target = compose_landmarks(seq, &decoded, &regions)?;
    let artifact = temporal_artifacts(&target, seq)?;
    Ok(PseudoFake {
        target,
        artifact,
        metadata: PerturbationMetadata {
            columns,
            regions,
            sigma: spec.sigma,
            seed: spec.seed,
        },
    })
}
