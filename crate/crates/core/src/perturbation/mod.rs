//! Stochastic stages: clip sampling, latent perturbation and region
//! composition.

pub mod perturb;
pub mod sampler;

pub use perturb::{
    compose_landmarks, generate_pseudofake_landmarks, perturb_weights, sample_regions,
    PerturbationMetadata, PerturbationSpec, PseudoFake, RegionRule, DEFAULT_SIGMA,
};
pub use sampler::{max_nonrigid_timestep, Clip, ClipCorpus, ClipSampler, SamplingMode};
