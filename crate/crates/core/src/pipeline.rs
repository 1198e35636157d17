//! End-to-end run: corpus -> LPN -> clip perturbation -> morphing ->
//! artifact analysis, with a hashed manifest of everything written.

use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    artifact_series, block_structure_score, correlation_matrix, region_blocks, summarize_artifact,
    SeriesComponent,
};
use crate::config::ProjectConfig;
use crate::error::{Error, Result};
use crate::geometry::{AlignedSequence, TemporalArtifact};
use crate::io::{
    load_corpus, load_frames, save_frames, sha256_file, sha256_hex, write_json_atomic, write_loss_history,
    ArtifactFile, LandmarkFile,
};
use crate::lpn::{load_checkpoint, save_checkpoint, train, LpnModel};
use crate::morphing::{face_mesh, morph_sequence, FrameSequence};
use crate::perturbation::{generate_pseudofake_landmarks, ClipCorpus, PerturbationSpec};
use crate::seed::{derive_seed, rng_for, stream_seed};
use crate::synth::render_frames;

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub seed: u64,
    /// Hash of the configuration with its paths removed.
    pub config_sha256: String,
    pub files: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub clips: usize,
    pub mean_artifact_l1: f64,
    pub sample_count: usize,
    pub max_abs_off_diagonal: Option<f64>,
    pub block_structure_score: Option<f64>,
}

enum Frames {
    None,
    Dir(PathBuf),
    Render { template: Vec<crate::geometry::Point>, size: [u32; 2] },
}

struct Source {
    name: String,
    file: LandmarkFile,
    aligned: AlignedSequence,
    frames: Frames,
}

fn rel(out: &Path, p: &Path) -> String {
    p.strip_prefix(out)
        .unwrap_or(p)
        .components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

fn load_sources(cfg: &ProjectConfig) -> Result<Vec<Source>> {
    let mut sources = Vec::new();
    if let Some(dir) = &cfg.paths.landmarks {
        for entry in load_corpus(dir)? {
            let frames = match &cfg.paths.frames {
                Some(root) if cfg.pipeline.morph_frames => Frames::Dir(root.join(&entry.name)),
                _ => Frames::None,
            };
            let aligned = entry.file.align()?;
            sources.push(Source { name: entry.name, file: entry.file, aligned, frames });
        }
    } else {
        let params = crate::synth::SyntheticFaceCorpus {
            seed: stream_seed(cfg.seed, "synthetic"),
            ..cfg.synthetic.clone()
        };
        let template = params.template_points();
        for (i, s) in params.generate()?.into_iter().enumerate() {
            let frames = if cfg.pipeline.morph_frames {
                Frames::Render { template: template.clone(), size: params.image_size }
            } else {
                Frames::None
            };
            let aligned = s.file.align()?;
            sources.push(Source { name: format!("synthetic_{i:04}"), file: s.file, aligned, frames });
        }
    }
    let t = cfg.model.t;
    let before = sources.len();
    sources.retain(|s| s.file.frames.len() >= t);
    if sources.len() < before {
        log::warn!("skipped {} sequences shorter than {t} frames", before - sources.len());
    }
    if sources.is_empty() {
        return Err(Error::invalid(format!("no sequence has at least {t} frames")));
    }
    Ok(sources)
}

struct ClipOutput {
    files: Vec<PathBuf>,
    artifact: TemporalArtifact,
}

fn make_clip(
    cfg: &ProjectConfig,
    model: &LpnModel,
    sources: &[Source],
    index: usize,
    out: &Path,
) -> Result<ClipOutput> {
    let clip_stream = stream_seed(cfg.seed, "clips");
    let mut rng = rng_for(clip_stream, index as u64);
    let src = &sources[rng.random_range(0..sources.len())];
    let clip = cfg.sampler.sample_clip(&src.aligned.sequence, &mut rng)?;
    let t = clip.sequence.len();
    let spec = PerturbationSpec {
        seed: derive_seed(clip_stream, index as u64),
        ..cfg.perturbation.clone()
    };
    let fake = generate_pseudofake_landmarks(model, &clip.sequence, &spec, &mut rng)?;

    let window = AlignedSequence {
        sequence: clip.sequence.clone(),
        frames: src.aligned.frames[clip.start..clip.start + t].to_vec(),
        clamped: Vec::new(),
    };
    let src_px = window.pixel_sequence()?;
    let dst_px = window.denormalize(&fake.target)?;
    let crops = src.file.crops[clip.start..clip.start + t].to_vec();

    let dir = out.join("clips").join(format!("clip_{index:04}"));
    let summary = summarize_artifact(&fake.artifact);
    let provenance = serde_json::json!({
        "source": src.name,
        "start": clip.start,
        "frames": t,
        "perturbation": fake.metadata,
        "artifact": summary,
    });
    let mut target = LandmarkFile::new(src.file.fps, crops, dst_px.clone())?;
    target.provenance = Some(provenance.clone());
    let format = cfg.pipeline.output_format;
    let target_path = dir.join(format!("target.{}", format.extension()));
    target.save(&target_path, format)?;
    let mut artifact_file = ArtifactFile::from_artifact(&fake.artifact);
    artifact_file.provenance = Some(provenance);
    let artifact_path = dir.join("artifact.json");
    artifact_file.save(&artifact_path)?;
    let mut files = vec![target_path, artifact_path];

    let frames = match &src.frames {
        Frames::None => None,
        Frames::Dir(d) => {
            let all = load_frames(d)?;
            if all.len() != src.file.frames.len() {
                return Err(Error::SequenceMismatch(format!(
                    "{} has {} frames, landmarks have {}",
                    d.display(),
                    all.len(),
                    src.file.frames.len()
                )));
            }
            Some(FrameSequence::new(all.frames()[clip.start..clip.start + t].to_vec())?)
        }
        Frames::Render { template, size } => {
            Some(render_frames(&src.file.slice(clip.start, t)?, template, size[0], size[1])?)
        }
    };
    if let Some(frames) = frames {
        let mesh = face_mesh(&src_px)?;
        let morphed = morph_sequence(&frames, &src_px, &dst_px, &mesh, cfg.morph)?;
        let fdir = dir.join("frames");
        for name in save_frames(&fdir, &morphed)? {
            files.push(fdir.join(name));
        }
    }
    Ok(ClipOutput { files, artifact: fake.artifact })
}

fn config_hash(cfg: &ProjectConfig) -> String {
    let mut c = cfg.clone();
    c.paths = Default::default();
    sha256_hex(c.to_json().as_bytes())
}

/// Runs the whole pipeline on a pool of `threads` workers (0 = rayon's
/// default) and returns the manifest it wrote. Every output is a function of
/// the configuration alone, so the manifest does not depend on `threads`.
pub fn run(cfg: &ProjectConfig, threads: usize) -> Result<Manifest> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| run_inner(cfg))
}

fn run_inner(cfg: &ProjectConfig) -> Result<Manifest> {
    cfg.validate()?;
    let out = cfg.paths.outputs.clone();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let sources = load_sources(cfg)?;
    let mut written: Vec<PathBuf> = Vec::new();

    let model = match &cfg.paths.checkpoint {
        Some(p) => {
            let m = load_checkpoint(p)?;
            if m.config().t != cfg.model.t || m.config().n_landmarks != sources[0].file.frames.num_points() {
                return Err(Error::SequenceMismatch("checkpoint does not match the corpus shape".into()));
            }
            m
        }
        None => {
            let corpus = ClipCorpus::new(
                sources.iter().map(|s| s.aligned.sequence.clone()).collect(),
                cfg.sampler.clone(),
            )?;
            let init = LpnModel::new(cfg.model.clone(), stream_seed(cfg.seed, "init"))?;
            let outcome = train(init, &corpus, &cfg.train, stream_seed(cfg.seed, "train"))?;
            let ckpt = out.join("model").join("lpn.ckpt");
            save_checkpoint(&outcome.model, &ckpt)?;
            let loss = out.join("model").join("loss.csv");
            write_loss_history(&loss, &outcome.history)?;
            written.push(crate::lpn::checkpoint::sidecar_path(&ckpt));
            written.extend([ckpt, loss]);
            outcome.model
        }
    };

    let clips = (0..cfg.pipeline.clips)
        .into_par_iter()
        .map(|i| make_clip(cfg, &model, &sources, i, &out))
        .collect::<Result<Vec<_>>>()?;
    let artifacts: Vec<TemporalArtifact> = clips.iter().map(|c| c.artifact.clone()).collect();
    for c in clips {
        written.extend(c.files);
    }

    let mut summary = RunSummary {
        clips: artifacts.len(),
        mean_artifact_l1: 0.0,
        sample_count: 0,
        max_abs_off_diagonal: None,
        block_structure_score: None,
    };
    if !artifacts.is_empty() {
        summary.mean_artifact_l1 =
            artifacts.iter().map(crate::geometry::artifact_l1).sum::<f64>() / artifacts.len() as f64;
        let series = artifact_series(&artifacts, SeriesComponent::Magnitude)?;
        summary.sample_count = series.observations();
        if series.observations() >= 2 {
            let corr = correlation_matrix(&series)?;
            let csv = out.join("analysis").join("correlation.csv");
            corr.write_csv(&csv)?;
            let png = out.join("analysis").join("correlation.png");
            corr.write_heatmap(&png, 4)?;
            summary.max_abs_off_diagonal = Some(corr.max_abs_off_diagonal());
            summary.block_structure_score = Some(block_structure_score(&corr, &region_blocks()));
            written.extend([csv, png]);
        }
    }
    let summary_path = out.join("analysis").join("summary.json");
    write_json_atomic(&summary_path, &summary)?;
    written.push(summary_path);

    let mut files = written
        .iter()
        .map(|p| {
            let bytes = std::fs::metadata(p).map_err(|e| Error::io(p, e))?.len();
            Ok(ManifestEntry { path: rel(&out, p), sha256: sha256_file(p)?, bytes })
        })
        .collect::<Result<Vec<_>>>()?;
    files.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = Manifest {
        format_version: MANIFEST_VERSION,
        seed: cfg.seed,
        config_sha256: config_hash(cfg),
        files,
    };
    write_json_atomic(&out.join(MANIFEST_NAME), &manifest)?;
    Ok(manifest)
}
