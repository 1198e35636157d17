use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use kimoi_core::analysis::{
    artifact_series, block_structure_score, correlation_matrix, region_blocks, summarize_artifact,
    SeriesComponent,
};
use kimoi_core::config::ProjectConfig;
use kimoi_core::io::{
    load_corpus, load_frames, save_frames, sha256_file, sha256_hex, write_corpus, write_json_atomic,
    write_loss_history, ArtifactFile, FileFormat, LandmarkFile,
};
use kimoi_core::lpn::{load_checkpoint, save_checkpoint, train, LpnModel};
use kimoi_core::morphing::{face_mesh, morph_sequence, MorphOptions};
use kimoi_core::perturbation::{generate_pseudofake_landmarks, ClipCorpus, PerturbationSpec};
use kimoi_core::seed::stream_seed;
use kimoi_core::synth::{render_frames, EventSchedule, SyntheticFaceCorpus};
use kimoi_core::{Error, Result};

#[derive(Parser)]
#[command(name = "kimoi", version, about = "Pseudo-fake face videos with learned kinematic artifacts")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Global {
    /// Master seed (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 lets the runtime decide.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Landmark output format.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Bin,
}

impl From<Format> for FileFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => FileFormat::Json,
            Format::Bin => FileFormat::Bin,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train or apply the landmark perturbation network.
    #[command(subcommand)]
    Lpn(LpnCommand),
    /// Re-render frames so their landmarks follow a target sequence.
    Morph {
        frames: PathBuf,
        src_landmarks: PathBuf,
        dst_landmarks: PathBuf,
        out_dir: PathBuf,
        #[arg(long)]
        anti_alias: bool,
    },
    /// Artifact statistics.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// End-to-end runs.
    #[command(subcommand)]
    Pipeline(PipelineCommand),
    /// Write a synthetic landmark corpus, optionally with rendered frames.
    Synth {
        out_dir: PathBuf,
        #[arg(long, default_value_t = 8)]
        sequences: usize,
        #[arg(long, default_value_t = 64)]
        min_length: usize,
        #[arg(long, default_value_t = 128)]
        max_length: usize,
        /// Blink transitions; repeat for several. Random blinks without it.
        #[arg(long)]
        blink_at: Vec<usize>,
        /// Also render frames into `<out>/frames/<name>/`.
        #[arg(long)]
        frames: bool,
        /// Crop size in pixels.
        #[arg(long, default_value_t = 224.0)]
        crop: f64,
    },
}

#[derive(Subcommand)]
enum LpnCommand {
    /// Train a model and write its checkpoint and loss history.
    Train {
        config: Option<PathBuf>,
        /// Train on N generated sequences instead of the configured corpus.
        #[arg(long)]
        synthetic: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        /// Output directory (defaults to the configured one).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Perturb one clip of a landmark file.
    Perturb {
        checkpoint: PathBuf,
        landmarks: PathBuf,
        #[arg(long)]
        sigma: Option<f64>,
        /// First frame of the clip.
        #[arg(long, default_value_t = 0)]
        start: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the temporal artifact here.
        #[arg(long)]
        artifact: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Correlation matrix of per-landmark artifact series.
    Corr {
        #[arg(required = true, num_args = 1..)]
        artifacts: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Heatmap path (defaults to the CSV path with a .png extension).
        #[arg(long)]
        heatmap: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Component::Magnitude)]
        component: Component,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Component {
    Magnitude,
    X,
    Y,
}

#[derive(Subcommand)]
enum PipelineCommand {
    /// sample -> perturb -> morph -> analyze, with a hashed manifest.
    Run { config: PathBuf },
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json value serializes"));
}

fn load_config(path: Option<&Path>, g: &Global) -> Result<ProjectConfig> {
    let mut cfg = match path {
        Some(p) => {
            if !p.is_file() {
                return Err(Error::Config(format!("config {} not found", p.display())));
            }
            ProjectConfig::load(p)?
        }
        None => ProjectConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(f) = g.format {
        cfg.pipeline.output_format = f.into();
    }
    Ok(cfg)
}

fn lpn_train(
    g: &Global,
    config: Option<PathBuf>,
    synthetic: Option<usize>,
    steps: Option<usize>,
    out: Option<PathBuf>,
) -> Result<()> {
    let mut cfg = load_config(config.as_deref(), g)?;
    if let Some(s) = steps {
        cfg.train.steps = s;
    }
    let out = out.unwrap_or_else(|| cfg.paths.outputs.clone());
    let sequences = match synthetic {
        Some(n) => {
            let params = SyntheticFaceCorpus {
                sequences: n,
                seed: stream_seed(cfg.seed, "synthetic"),
                ..cfg.synthetic.clone()
            };
            params.generate()?.into_iter().map(|s| s.aligned()).collect::<Result<Vec<_>>>()?
        }
        None => {
            let dir = cfg.paths.landmarks.clone().ok_or_else(|| {
                Error::CorpusNotFound(PathBuf::from("<no landmarks path configured>"))
            })?;
            load_corpus(&dir)?
                .iter()
                .map(|e| Ok(e.file.align()?.sequence))
                .collect::<Result<Vec<_>>>()?
        }
    };
    cfg.model.validate()?;
    cfg.train.validate()?;
    let corpus = ClipCorpus::new(sequences, cfg.sampler.clone())?;
    let model = LpnModel::new(cfg.model.clone(), stream_seed(cfg.seed, "init"))?;
    let outcome = train(model, &corpus, &cfg.train, stream_seed(cfg.seed, "train"))?;
    let ckpt = out.join("lpn.ckpt");
    save_checkpoint(&outcome.model, &ckpt)?;
    write_loss_history(&out.join("loss.csv"), &outcome.history)?;
    let last = outcome.history.last();
    print_json(&serde_json::json!({
        "checkpoint": ckpt,
        "sha256": sha256_file(&ckpt)?,
        "steps": outcome.history.len(),
        "final_loss_rec": last.map(|r| r.loss_rec),
        "final_total": last.map(|r| r.total),
    }));
    Ok(())
}

fn lpn_perturb(
    g: &Global,
    checkpoint: &Path,
    landmarks: &Path,
    sigma: Option<f64>,
    start: usize,
    out: Option<PathBuf>,
    artifact: Option<PathBuf>,
) -> Result<()> {
    let model = load_checkpoint(checkpoint)?;
    let file = LandmarkFile::load(landmarks)?;
    let t = model.config().t;
    if file.frames.num_points() != model.config().n_landmarks {
        return Err(Error::SequenceMismatch(format!(
            "model expects {} landmarks, file has {}",
            model.config().n_landmarks,
            file.frames.num_points()
        )));
    }
    if start + t > file.frames.len() {
        return Err(Error::SequenceMismatch(format!(
            "clip [{start}, {}) exceeds the {} frames of {}",
            start + t,
            file.frames.len(),
            landmarks.display()
        )));
    }
    let clip = file.slice(start, t)?;
    let aligned = clip.align()?;
    let seed = g.seed.unwrap_or(0);
    let spec = PerturbationSpec {
        sigma: sigma.unwrap_or(PerturbationSpec::default().sigma),
        seed,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fake = generate_pseudofake_landmarks(&model, &aligned.sequence, &spec, &mut rng)?;
    let target_px = aligned.denormalize(&fake.target)?;
    let summary = summarize_artifact(&fake.artifact);
    let provenance = serde_json::json!({
        "source": landmarks.file_name().map(|n| n.to_string_lossy().into_owned()),
        "source_sha256": sha256_file(landmarks)?,
        "checkpoint_sha256": sha256_file(checkpoint)?,
        "start": start,
        "frames": t,
        "perturbation": fake.metadata,
        "artifact": summary,
    });
    let format: FileFormat = g.format.map(Into::into).unwrap_or_default();
    let out = out.unwrap_or_else(|| {
        let stem = landmarks.file_stem().unwrap_or_default().to_string_lossy();
        landmarks.with_file_name(format!("{stem}.target.{}", format.extension()))
    });
    let mut target = LandmarkFile::new(clip.fps, clip.crops.clone(), target_px)?;
    target.provenance = Some(provenance.clone());
    target.save(&out, format)?;
    if let Some(p) = &artifact {
        let mut a = ArtifactFile::from_artifact(&fake.artifact);
        a.provenance = Some(provenance);
        a.save(p)?;
    }
    print_json(&serde_json::json!({
        "target": out,
        "sha256": sha256_file(&out)?,
        "sigma": spec.sigma,
        "artifact_l1": summary.artifact_l1,
        "regions": summary.regions,
    }));
    Ok(())
}

fn morph(frames_dir: &Path, src: &Path, dst: &Path, out_dir: &Path, anti_alias: bool) -> Result<()> {
    // Everything is read and checked before the first output byte is written.
    let src_file = LandmarkFile::load(src)?;
    let dst_file = LandmarkFile::load(dst)?;
    let frames = load_frames(frames_dir)?;
    if frames.len() != src_file.frames.len() || src_file.frames.len() != dst_file.frames.len() {
        return Err(Error::SequenceMismatch(format!(
            "{} frames, {} source and {} target landmark frames",
            frames.len(),
            src_file.frames.len(),
            dst_file.frames.len()
        )));
    }
    if src_file.frames.num_points() != dst_file.frames.num_points() {
        return Err(Error::SequenceMismatch("landmark counts differ".into()));
    }
    let mesh = face_mesh(&src_file.frames)?;
    let opts = MorphOptions { anti_alias };
    let out = morph_sequence(&frames, &src_file.frames, &dst_file.frames, &mesh, opts)?;
    let names = save_frames(out_dir, &out)?;
    let outputs = names
        .iter()
        .map(|n| Ok(serde_json::json!({"file": n, "sha256": sha256_file(&out_dir.join(n))?})))
        .collect::<Result<Vec<_>>>()?;
    let provenance = serde_json::json!({
        "frames": out.len(),
        "src_landmarks_sha256": sha256_file(src)?,
        "dst_landmarks_sha256": sha256_file(dst)?,
        "triangles": mesh.len(),
        "anti_alias": anti_alias,
        "outputs": outputs,
    });
    write_json_atomic(&out_dir.join("morph.json"), &provenance)?;
    print_json(&serde_json::json!({"frames": out.len(), "out_dir": out_dir}));
    Ok(())
}

fn analyze_corr(artifacts: &[PathBuf], out: &Path, heatmap: Option<PathBuf>, component: Component) -> Result<()> {
    let loaded = artifacts
        .iter()
        .map(|p| ArtifactFile::load(p)?.artifact())
        .collect::<Result<Vec<_>>>()?;
    let component = match component {
        Component::Magnitude => SeriesComponent::Magnitude,
        Component::X => SeriesComponent::X,
        Component::Y => SeriesComponent::Y,
    };
    let corr = correlation_matrix(&artifact_series(&loaded, component)?)?;
    corr.write_csv(out)?;
    let heatmap = heatmap.unwrap_or_else(|| out.with_extension("png"));
    corr.write_heatmap(&heatmap, 8)?;
    print_json(&serde_json::json!({
        "matrix": out,
        "heatmap": heatmap,
        "sample_count": corr.sample_count,
        "max_abs_off_diagonal": corr.max_abs_off_diagonal(),
        "block_structure_score": block_structure_score(&corr, &region_blocks()),
        "zero_variance_landmarks": corr.zero_variance.iter().filter(|z| **z).count(),
    }));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn synth(
    g: &Global,
    out_dir: &Path,
    sequences: usize,
    min_length: usize,
    max_length: usize,
    blink_at: Vec<usize>,
    frames: bool,
    crop: f64,
) -> Result<()> {
    let defaults = SyntheticFaceCorpus::default();
    let params = SyntheticFaceCorpus {
        sequences,
        min_length,
        max_length,
        blinks: if blink_at.is_empty() { defaults.blinks.clone() } else { EventSchedule::Fixed { at: blink_at } },
        crop_size: crop,
        image_size: [(crop * 1.25).ceil() as u32; 2],
        seed: stream_seed(g.seed.unwrap_or(0), "synthetic"),
        ..defaults
    };
    let generated = params.generate()?;
    let format: FileFormat = g.format.map(Into::into).unwrap_or_default();
    let files: Vec<LandmarkFile> = generated.iter().map(|s| s.file.clone()).collect();
    let written = write_corpus(&out_dir.join("landmarks"), &files, format)?;
    if frames {
        let template = params.template_points();
        for (file, path) in files.iter().zip(&written) {
            let stem = path.file_stem().unwrap_or_default();
            let rendered = render_frames(file, &template, params.image_size[0], params.image_size[1])?;
            save_frames(&out_dir.join("frames").join(stem), &rendered)?;
        }
    }
    let truth: Vec<_> = generated
        .iter()
        .zip(&written)
        .map(|(s, p)| {
            serde_json::json!({
                "file": p.file_name().map(|n| n.to_string_lossy().into_owned()),
                "frames": s.file.frames.len(),
                "blinks": s.blinks,
                "mouth_events": s.mouth_events,
            })
        })
        .collect();
    write_json_atomic(&out_dir.join("ground_truth.json"), &truth)?;
    print_json(&serde_json::json!({"sequences": files.len(), "out_dir": out_dir}));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let g = cli.global;
    if !matches!(cli.command, Command::Pipeline(_)) && g.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(g.threads)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    match cli.command {
        Command::Lpn(LpnCommand::Train { config, synthetic, steps, out }) => {
            lpn_train(&g, config, synthetic, steps, out)
        }
        Command::Lpn(LpnCommand::Perturb { checkpoint, landmarks, sigma, start, out, artifact }) => {
            lpn_perturb(&g, &checkpoint, &landmarks, sigma, start, out, artifact)
        }
        Command::Morph { frames, src_landmarks, dst_landmarks, out_dir, anti_alias } => {
            morph(&frames, &src_landmarks, &dst_landmarks, &out_dir, anti_alias)
        }
        Command::Analyze(AnalyzeCommand::Corr { artifacts, out, heatmap, component }) => {
            analyze_corr(&artifacts, &out, heatmap, component)
        }
        Command::Pipeline(PipelineCommand::Run { config }) => {
            let cfg = load_config(Some(&config), &g)?;
            let manifest = kimoi_core::pipeline::run(&cfg, g.threads)?;
            let bytes = serde_json::to_vec(&manifest).expect("manifest serializes");
            print_json(&serde_json::json!({
                "manifest": cfg.paths.outputs.join(kimoi_core::pipeline::MANIFEST_NAME),
                "files": manifest.files.len(),
                "sha256": sha256_hex(&bytes),
            }));
            Ok(())
        }
        Command::Synth { out_dir, sequences, min_length, max_length, blink_at, frames, crop } => {
            synth(&g, &out_dir, sequences, min_length, max_length, blink_at, frames, crop)
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::CorpusNotFound(_) | Error::Config(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("KIMOI_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = serde_json::json!({"kind": e.kind(), "message": e.to_string()});
            eprintln!("{report}");
            ExitCode::from(exit_code(&e))
        }
    }
}
