//! Project configuration, accepted as TOML or JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::atomic::read_bytes;
use crate::io::FileFormat;
use crate::lpn::{LpnConfig, TrainOptions};
use crate::morphing::MorphOptions;
use crate::perturbation::{ClipSampler, PerturbationSpec};
use crate::synth::SyntheticFaceCorpus;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Directory of landmark files. Without it the synthetic corpus is used.
    pub landmarks: Option<PathBuf>,
    /// Directory holding one frame directory per landmark file, named after
    /// the file stem.
    pub frames: Option<PathBuf>,
    pub outputs: PathBuf,
    /// Existing checkpoint to use instead of training.
    pub checkpoint: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            landmarks: None,
            frames: None,
            outputs: PathBuf::from("out"),
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineOptions {
    /// Pseudo-fake clips to produce.
    pub clips: usize,
    /// Morph frames for every clip. Synthetic corpora render their own.
    pub morph_frames: bool,
    pub output_format: FileFormat,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            clips: 16,
            morph_frames: true,
            output_format: FileFormat::Json,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectConfig {
    pub seed: u64,
    pub paths: Paths,
    pub model: LpnConfig,
    pub train: TrainOptions,
    pub perturbation: PerturbationSpec,
    pub sampler: ClipSampler,
    pub morph: MorphOptions,
    pub synthetic: SyntheticFaceCorpus,
    pub pipeline: PipelineOptions,
}

impl ProjectConfig {
    /// Parses TOML or JSON, chosen by extension (`.json` is JSON, anything
    /// else is tried as TOML first). Relative paths are resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = read_bytes(path)?;
        let text = std::str::from_utf8(&bytes).map_err(|e| Error::format(path, e.to_string()))?;
        let is_json = path.extension().is_some_and(|e| e == "json");
        let mut cfg = if is_json {
            Self::from_json(text)?
        } else {
            Self::from_toml(text).or_else(|toml_err| Self::from_json(text).map_err(|_| toml_err))?
        };
        if let Some(dir) = path.parent() {
            cfg.paths.resolve_against(dir);
        }
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks every section and every referenced input path.
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.perturbation.validate()?;
        if self.sampler.clip_length != self.model.t {
            return Err(Error::Config(format!(
                "sampler clip_length {} differs from model t {}",
                self.sampler.clip_length, self.model.t
            )));
        }
        if self.paths.landmarks.is_none() {
            self.synthetic.validate()?;
            if self.synthetic.min_length < self.model.t {
                return Err(Error::Config("synthetic sequences are shorter than a clip".into()));
            }
        }
        if let Some(dir) = &self.paths.landmarks {
            if !dir.is_dir() {
                return Err(Error::CorpusNotFound(dir.clone()));
            }
        }
        if let Some(dir) = &self.paths.frames {
            if !dir.is_dir() {
                return Err(Error::CorpusNotFound(dir.clone()));
            }
        }
        if let Some(ckpt) = &self.paths.checkpoint {
            if !ckpt.is_file() {
                return Err(Error::Config(format!("checkpoint {} does not exist", ckpt.display())));
            }
        }
        Ok(())
    }
}

impl Paths {
    fn resolve_against(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.outputs);
        for p in [&mut self.landmarks, &mut self.frames, &mut self.checkpoint].into_iter().flatten() {
            fix(p);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturbation::RegionRule;
    use crate::geometry::InnerRegion;

    fn sample() -> ProjectConfig {
        let mut c = ProjectConfig::default();
        c.seed = 123_456_789;
        c.paths.landmarks = Some(PathBuf::from("/data/lmk"));
        c.model.d = 32;
        c.model.heads = 2;
        c.train.learning_rate = 3.3e-4;
        c.train.clip_grad_norm = 0.0;
        c.perturbation.region_rule = RegionRule::Fixed(vec![InnerRegion::Mouth, InnerRegion::Eyes]);
        c.sampler.guided_std = Some(5.5);
        c.morph.anti_alias = true;
        c.synthetic.template = Some(crate::synth::default_template());
        c.pipeline.output_format = FileFormat::Bin;
        c
    }

    #[test]
    fn toml_and_json_round_trip() {
        let c = sample();
        assert_eq!(ProjectConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
        assert_eq!(ProjectConfig::from_json(&c.to_json()).unwrap(), c);
        let d = ProjectConfig::default();
        assert_eq!(ProjectConfig::from_toml(&d.to_toml().unwrap()).unwrap(), d);
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let c = ProjectConfig::from_toml("seed = 4\n[model]\nk = 8\n").unwrap();
        assert_eq!(c.seed, 4);
        assert_eq!(c.model.k, 8);
        assert_eq!(c.model.t, 16);
        assert!(ProjectConfig::from_toml("[model]\nbogus = 1\n").is_err());
    }

    #[test]
    fn missing_corpus_is_reported() {
        let mut c = ProjectConfig::default();
        c.paths.landmarks = Some(PathBuf::from("/definitely/not/here"));
        assert_eq!(c.validate().unwrap_err().kind(), "corpus-not-found");
        assert!(ProjectConfig::default().validate().is_ok());
    }

    #[test]
    fn load_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cfg.toml");
        std::fs::write(&p, "[paths]\noutputs = \"run\"\n").unwrap();
        let c = ProjectConfig::load(&p).unwrap();
        assert_eq!(c.paths.outputs, dir.path().join("run"));
        let j = dir.path().join("cfg.json");
        std::fs::write(&j, "{\"seed\": 9}").unwrap();
        assert_eq!(ProjectConfig::load(&j).unwrap().seed, 9);
    }
}
