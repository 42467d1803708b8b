use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use vidtrace::corpus::{CorpusConfig, DatasetManifest, Family, GeneratorProfile, TracePeak, REAL_SOURCE};
use vidtrace::detector::{DetectorModel, FeatureConfig};
use vidtrace::residual::DenoiserSpec;

fn vidtrace(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vidtrace")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn profile(id: &str, family: Family, u: i64, v: i64) -> GeneratorProfile {
    GeneratorProfile {
        id: id.into(),
        peaks: vec![TracePeak { u, v, amplitude: 0.08 }],
        grid_period: None,
        grid_strength: 0.0,
        family,
    }
}

fn corpus_config() -> CorpusConfig {
    CorpusConfig {
        seed: 3,
        frame_size: Default::default(),
        frames_per_source: 10,
        profiles: vec![profile("va", Family::VideoLike, 24, 0), profile("ia", Family::ImageLike, 0, 40)],
    }
}

/// Builds a small corpus through the CLI and returns the manifest path.
fn build_corpus(dir: &Path) -> std::path::PathBuf {
    let config = dir.join("corpus.json");
    fs::write(&config, serde_json::to_vec(&corpus_config()).unwrap()).unwrap();
    let out = dir.join("corpus");
    let o = vidtrace(&["corpus", "build", "--config", s(&config), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    out.join("manifest.json")
}

#[test]
fn help_lists_every_flag() {
    let cases: &[(&[&str], &[&str])] = &[
        (&["corpus", "build"], &["--config", "--out"]),
        (&["fingerprint"], &["--manifest", "--source", "--split", "--out", "--denoiser"]),
        (&["train"], &["--manifest", "--task", "--out", "--seed", "--epochs", "--lr", "--robust-crfs"]),
        (&["eval"], &["--model", "--manifest", "--out"]),
        (&["recompress"], &["--in", "--out", "--crf", "--backend"]),
        (&["video-score"], &["--model", "--clip", "--n", "--seed"]),
        (&["experiment"], &["--config", "--out", "cross-domain", "video-level", "transfer"]),
    ];
    for (cmd, flags) in cases {
        let mut args = cmd.to_vec();
        args.push("--help");
        let o = vidtrace(&args);
        assert_eq!(code(&o), 0);
        let text = String::from_utf8_lossy(&o.stdout);
        for f in *flags {
            assert!(text.contains(f), "{cmd:?} --help lacks {f}:\n{text}");
        }
    }
}

#[test]
fn argument_errors_exit_2() {
    assert_eq!(code(&vidtrace(&["train", "--bogus"])), 2);
    assert_eq!(code(&vidtrace(&["experiment", "exp9", "--config", "c", "--out", "o"])), 2);
    assert_eq!(code(&vidtrace(&["--threads", "0", "eval", "--model", "m", "--manifest", "x", "--out", "r"])), 2);

    let dir = tempfile::tempdir().unwrap();
    let o = vidtrace(&["recompress", "--in", s(dir.path()), "--out", s(&dir.path().join("o")), "--crf", "-1"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn missing_input_exits_3() {
    let o = vidtrace(&["eval", "--model", "/nonexistent/model.json", "--manifest", "m", "--out", "r"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("/nonexistent/model.json"));
    assert!(o.stdout.is_empty());
}

#[test]
fn corpus_train_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = build_corpus(dir.path());
    let manifest_bytes = fs::read(&manifest).unwrap();

    // Zero epochs: identical to a freshly zero-initialized model.
    let zero = dir.path().join("zero.json");
    let o = vidtrace(&["train", "--manifest", s(&manifest), "--task", "detect", "--out", s(&zero), "--epochs", "0"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let expected = DetectorModel::zeros(
        vec![REAL_SOURCE.into(), "synthetic".into()],
        DenoiserSpec::default(),
        FeatureConfig::default(),
        0,
    )
    .unwrap();
    assert_eq!(DetectorModel::load(&zero).unwrap(), expected);

    let model = dir.path().join("model.json");
    let o = vidtrace(&[
        "train", "--manifest", s(&manifest), "--task", "detect", "--out", s(&model), "--epochs", "5", "--seed", "2",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let report = dir.path().join("report.json");
    let o = vidtrace(&["--json", "eval", "--model", s(&model), "--manifest", s(&manifest), "--out", s(&report)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let printed: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let written: serde_json::Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    assert_eq!(printed, written);
    assert!(written["overall_auc"].as_f64().unwrap() > 0.5);

    // Inputs are untouched.
    assert_eq!(fs::read(&manifest).unwrap(), manifest_bytes);
}

#[test]
fn single_class_eval_names_missing_class() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = build_corpus(dir.path());
    let model = dir.path().join("model.json");
    let o = vidtrace(&["train", "--manifest", s(&manifest), "--task", "detect", "--out", s(&model), "--epochs", "0"]);
    assert_eq!(code(&o), 0);

    let (mut m, _) = DatasetManifest::load(&manifest).unwrap();
    m.entries.retain(|e| e.source_id == REAL_SOURCE);
    m.profiles.clear();
    let real_only = dir.path().join("corpus/real_only.json");
    m.save(&real_only).unwrap();

    let o = vidtrace(&["eval", "--model", s(&model), "--manifest", s(&real_only), "--out", s(&dir.path().join("r.json"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("synthetic"), "{}", stderr(&o));
}

#[test]
fn fingerprint_recompress_and_video_score() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = build_corpus(dir.path());

    let pgm = dir.path().join("fp/va.pgm");
    let o = vidtrace(&[
        "--json", "fingerprint", "--manifest", s(&manifest), "--source", "va", "--split", "train", "--out", s(&pgm),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(pgm.exists());
    let out: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let peaks = out["peaks"].as_array().unwrap();
    assert!(peaks.iter().any(|p| p["u"].as_i64().unwrap().abs() == 24 && p["v"] == 0), "{peaks:?}");

    let o = vidtrace(&[
        "fingerprint", "--manifest", s(&manifest), "--source", "nobody", "--split", "train", "--out", s(&pgm),
    ]);
    assert_eq!(code(&o), 2);

    let frames = dir.path().join("corpus/frames/va");
    let clip = dir.path().join("clip");
    let o = vidtrace(&["recompress", "--in", s(&frames), "--out", s(&clip), "--crf", "40"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let n_in = fs::read_dir(&frames).unwrap().count();
    assert_eq!(fs::read_dir(&clip).unwrap().count(), n_in);

    let o = vidtrace(&["recompress", "--in", s(&frames), "--out", s(&clip), "--crf", "40", "--backend", "external"]);
    if std::env::var_os("VIDTRACE_ENCODER").is_none() && which_ffmpeg().is_none() {
        assert_eq!(code(&o), 4, "{}", stderr(&o));
    }

    let model = dir.path().join("model.json");
    let o = vidtrace(&["train", "--manifest", s(&manifest), "--task", "detect", "--out", s(&model), "--epochs", "3"]);
    assert_eq!(code(&o), 0);
    let score = |threads: &str| {
        let o = vidtrace(&["--json", "--threads", threads, "video-score", "--model", s(&model), "--clip", s(&clip), "--n", "4", "--seed", "1"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        serde_json::from_slice::<serde_json::Value>(&o.stdout).unwrap()
    };
    let one = score("1");
    assert_eq!(one["n_patches"], 4);
    assert_eq!(one, score("2"));
}

fn which_ffmpeg() -> Option<()> {
    let path = std::env::var_os("PATH")?;
    std::env::split_paths(&path).any(|d| d.join("ffmpeg").is_file()).then_some(())
}

#[test]
fn experiment_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut corpus = corpus_config();
    corpus.frames_per_source = 12;
    let config = serde_json::json!({
        "corpus": corpus,
        "train": {"epochs": 4},
    });
    let config_path = dir.path().join("experiment.json");
    fs::write(&config_path, serde_json::to_vec(&config).unwrap()).unwrap();

    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = vidtrace(&["experiment", "detection", "--config", s(&config_path), "--out", s(&out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        (fs::read(out.join("report.json")).unwrap(), fs::read(out.join("tables/detection.md")).unwrap())
    };
    assert_eq!(run("a"), run("b"));
}
