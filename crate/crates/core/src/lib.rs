//! Synthesis of pseudo-fake face videos carrying subtle kinematic
//! inconsistencies.
//!
//! A landmark-sequence autoencoder with a deformation-basis bottleneck
//! ([`lpn`]) is perturbed in latent space to break the natural coupling of
//! facial motion ([`perturbation`]); the perturbed landmarks are then pushed
//! back into pristine frames by piecewise-affine morphing ([`morphing`]).

pub mod analysis;
pub mod config;
pub mod error;
pub mod geometry;
pub mod io;
pub mod lpn;
pub mod morphing;
pub mod perturbation;
pub mod pipeline;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};
