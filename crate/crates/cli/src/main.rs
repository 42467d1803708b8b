//! `vidtrace` command-line tool.

use std::io::Write;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use vidtrace::compression::{recompress_dir, CodecBackend, CompressionLevel, ExternalEncoder};
use vidtrace::corpus::{build_corpus, CorpusConfig, DatasetManifest, Split};
use vidtrace::detector::{train, DetectorModel, Task, TrainConfig};
use vidtrace::harness::{evaluate_model, Experiment, ExperimentConfig, Harness};
use vidtrace::residual::{
    export_fingerprint, fingerprint, peak_detect, residual, DenoiserSpec, ResidualAccumulator, DEFAULT_PEAK_RATIO,
};
use vidtrace::videolevel::{video_score, VideoClip};
use vidtrace::Error;

#[derive(Parser)]
#[command(name = "vidtrace", version, about = "Forensic traces and detectors for synthetic video")]
struct Cli {
    /// Print machine-readable JSON on standard output.
    #[arg(long, global = true)]
    json: bool,
    /// Worker threads for data-parallel evaluation.
    #[arg(long, global = true, default_value_t = 1, value_name = "N")]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pseudo-generator corpus tools.
    #[command(subcommand)]
    Corpus(CorpusCommand),
    /// Aggregate-residual fingerprint of one source and split.
    Fingerprint(FingerprintArgs),
    /// Train a detection or attribution model.
    Train(TrainArgs),
    /// Evaluate a model on the test split of a manifest.
    Eval(EvalArgs),
    /// Re-compress a directory of PGM frames.
    Recompress(RecompressArgs),
    /// Video-level score of a clip directory.
    VideoScore(VideoScoreArgs),
    /// Run one of the experiments.
    Experiment(ExperimentArgs),
}

#[derive(Subcommand)]
enum CorpusCommand {
    /// Generate frames and manifest.json from a corpus config.
    Build {
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct FingerprintArgs {
    #[arg(long, value_name = "PATH")]
    manifest: PathBuf,
    #[arg(long, value_name = "ID")]
    source: String,
    #[arg(long, value_parser = ["train", "val", "test"])]
    split: String,
    #[arg(long, value_name = "PGM")]
    out: PathBuf,
    /// gaussian:<sigma>, median3 or identity.
    #[arg(long, default_value = "gaussian:1.0")]
    denoiser: String,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_name = "PATH")]
    manifest: PathBuf,
    #[arg(long, value_parser = ["detect", "attribute"])]
    task: String,
    #[arg(long, value_name = "MODEL.JSON")]
    out: PathBuf,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    #[arg(long, value_name = "N")]
    epochs: Option<usize>,
    #[arg(long, value_name = "F")]
    lr: Option<f64>,
    /// Comma-separated CRFs for robust training, e.g. 0,10,20.
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    robust_crfs: Vec<i64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, value_name = "PATH")]
    model: PathBuf,
    #[arg(long, value_name = "PATH")]
    manifest: PathBuf,
    #[arg(long, value_name = "REPORT.JSON")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Simulator,
    External,
}

#[derive(Args)]
struct RecompressArgs {
    #[arg(long = "in", value_name = "DIR")]
    input: PathBuf,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long, value_name = "N", allow_negative_numbers = true)]
    crf: i64,
    #[arg(long, value_enum, default_value = "simulator")]
    backend: Backend,
}

#[derive(Args)]
struct VideoScoreArgs {
    #[arg(long, value_name = "PATH")]
    model: PathBuf,
    #[arg(long, value_name = "DIR")]
    clip: PathBuf,
    #[arg(long, value_name = "N")]
    n: usize,
    #[arg(long, value_name = "N", default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(value_parser = ["cross-domain", "detection", "attribution", "compression", "video-level", "transfer"])]
    name: String,
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

/// Result of a subcommand: a human summary and the JSON form.
struct Outcome {
    text: String,
    json: Value,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidArgument(_) => 2,
        Error::Io { .. } | Error::Format { .. } => 3,
        Error::Environment(_) | Error::Tool { .. } => 4,
        Error::Internal(_) => 1,
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Error> {
    let bytes = fs::read(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(serde_json::from_slice(&bytes)?)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    fs::write(path, bytes).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn corpus_build(config: &Path, out: &Path) -> Result<Outcome, Error> {
    let config: CorpusConfig = read_json(config)?;
    let manifest = build_corpus(&config, out)?;
    let path = out.join("manifest.json");
    Ok(Outcome {
        text: format!("wrote {} frames and {}", manifest.entries.len(), path.display()),
        json: json!({"manifest": path, "entries": manifest.entries.len(), "sources": manifest.sources()}),
    })
}

fn run_fingerprint(a: &FingerprintArgs) -> Result<Outcome, Error> {
    let denoiser: DenoiserSpec = a.denoiser.parse()?;
    let split: Split = a.split.parse()?;
    let (manifest, root) = DatasetManifest::load(&a.manifest)?;
    let entries: Vec<_> = manifest
        .entries_in(split)
        .filter(|e| e.source_id == a.source && e.crf.is_none())
        .collect();
    if entries.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "source {:?} has no frames in the {} split",
            a.source, a.split
        )));
    }
    let mut acc = ResidualAccumulator::new();
    for (k, e) in entries.iter().enumerate() {
        let frame = vidtrace::pgm::load_frame(root.join(&e.path))?;
        acc.push(&residual(&frame, denoiser)?)?;
        if (k + 1) % 100 == 0 {
            eprintln!("{} / {} frames", k + 1, entries.len());
        }
    }
    let fp = fingerprint(&acc.finish()?)?;
    export_fingerprint(&fp, denoiser, &a.out)?;
    let peaks = peak_detect(&fp, DEFAULT_PEAK_RATIO);
    let mut text = format!("wrote {} from {} frames; {} peaks", a.out.display(), entries.len(), peaks.len());
    for p in peaks.iter().take(10) {
        text.push_str(&format!("\n  ({:4}, {:4})  ratio {:.1}", p.u, p.v, p.ratio));
    }
    Ok(Outcome {
        text,
        json: json!({
            "out": a.out,
            "frames": entries.len(),
            "peaks": peaks.iter().map(|p| json!({"u": p.u, "v": p.v, "strength": p.strength, "ratio": p.ratio})).collect::<Vec<_>>(),
        }),
    })
}

fn run_train(a: &TrainArgs) -> Result<Outcome, Error> {
    let task: Task = a.task.parse()?;
    let mut config = TrainConfig::default();
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    if let Some(epochs) = a.epochs {
        config.epochs = epochs;
    }
    if let Some(lr) = a.lr {
        config.learning_rate = lr;
    }
    let crfs = a
        .robust_crfs
        .iter()
        .map(|&c| CompressionLevel::from_i64(c))
        .collect::<Result<Vec<_>, _>>()?;
    let (manifest, root) = DatasetManifest::load(&a.manifest)?;
    let model = train(&manifest, &root, task, DenoiserSpec::default(), &config, &crfs)?;
    model.save(&a.out)?;
    Ok(Outcome {
        text: format!("wrote {} ({} classes)", a.out.display(), model.classes.len()),
        json: json!({"model": a.out, "classes": model.classes}),
    })
}

fn run_eval(a: &EvalArgs) -> Result<Outcome, Error> {
    let model = DetectorModel::load(&a.model)?;
    let (manifest, root) = DatasetManifest::load(&a.manifest)?;
    let report = evaluate_model(&model, &manifest, &root)?;
    write_bytes(&a.out, &report.to_json()?)?;
    let mut text = format!("wrote {}", a.out.display());
    for s in &report.per_source {
        text.push_str(&format!("\n  {:<16} AUC {:.4}", s.source_id, s.auc));
    }
    if let Some(o) = report.overall_auc {
        text.push_str(&format!("\n  {:<16} AUC {o:.4}", "overall"));
    }
    Ok(Outcome {
        text,
        json: serde_json::to_value(&report)?,
    })
}

fn run_recompress(a: &RecompressArgs) -> Result<Outcome, Error> {
    let backend = match a.backend {
        Backend::Simulator => CodecBackend::Simulator,
        Backend::External => {
            let enc = ExternalEncoder::resolve(None);
            enc.validate()?;
            CodecBackend::External(enc)
        }
    };
    let written = recompress_dir(&a.input, &a.out, a.crf, &backend)?;
    Ok(Outcome {
        text: format!("wrote {} frames to {}", written.len(), a.out.display()),
        json: json!({"out": a.out, "frames": written.len(), "crf": a.crf}),
    })
}

fn run_video_score(a: &VideoScoreArgs) -> Result<Outcome, Error> {
    let model = DetectorModel::load(&a.model)?;
    let clip = VideoClip::from_dir(&a.clip)?;
    let frames = clip.load()?;
    let score = video_score(&model, &frames, a.n, a.seed)?;
    let mut text = format!(
        "synthetic score {:.6} over N={} patches from {} frames",
        score.synthetic_score,
        score.n_patches,
        frames.len()
    );
    for (c, p) in model.classes.iter().zip(&score.probabilities) {
        text.push_str(&format!("\n  {c:<16} {p:.6}"));
    }
    Ok(Outcome {
        text,
        json: json!({
            "clip": a.clip,
            "classes": model.classes,
            "probabilities": score.probabilities,
            "n_patches": score.n_patches,
            "synthetic_score": score.synthetic_score,
        }),
    })
}

fn run_experiment(a: &ExperimentArgs) -> Result<Outcome, Error> {
    let experiment: Experiment = a.name.parse()?;
    let config = ExperimentConfig::load(&a.config)?;
    eprintln!("preparing corpus");
    let harness = Harness::prepare(config, &a.out)?;
    eprintln!("running {experiment}");
    let out = harness.run_to(experiment, &a.out)?;
    Ok(Outcome {
        text: out.report.to_markdown(),
        json: serde_json::to_value(&out.report)?,
    })
}

fn dispatch(cli: &Cli) -> Result<Outcome, Error> {
    match &cli.command {
        Command::Corpus(CorpusCommand::Build { config, out }) => corpus_build(config, out),
        Command::Fingerprint(a) => run_fingerprint(a),
        Command::Train(a) => run_train(a),
        Command::Eval(a) => run_eval(a),
        Command::Recompress(a) => run_recompress(a),
        Command::VideoScore(a) => run_video_score(a),
        Command::Experiment(a) => run_experiment(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads == 0 {
        eprintln!("error: --threads must be at least 1");
        return ExitCode::from(2);
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        eprintln!("error: cannot start worker threads: {e}");
        return ExitCode::from(4);
    }
    match dispatch(&cli) {
        Ok(outcome) => {
            let text = if cli.json {
                serde_json::to_string_pretty(&outcome.json).expect("JSON value serializes")
            } else {
                outcome.text.trim_end().to_string()
            };
            // A closed pipe (`| head`) is not a failure of the command itself.
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
