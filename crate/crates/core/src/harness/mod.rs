//! Desk-scale experiment runner: corpus preparation, shared feature cache and
//! model memo, the six experiments, and report files.

mod experiments;
mod profiles;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::compression::CompressionLevel;
use crate::corpus::{build_corpus, CorpusConfig, DatasetManifest, Family, Label, ManifestEntry, Split, REAL_SOURCE};
use crate::detector::{
    predict_features, train_cached, DetectorModel, FeatureCache, FeatureConfig, PatchPrediction, Task, TrainConfig,
    SYNTHETIC_CLASS,
};
use crate::error::{Error, Result};
use crate::metrics::{auc, ovr_auc, Confusion, MetricsReport, ScoredSample, SourceAuc};
use crate::residual::{export_fingerprint, DenoiserSpec, Fingerprint};
use crate::seed::derive_seed;
use crate::videolevel::DEFAULT_N_VALUES;

pub use profiles::desk_profiles;

const EVAL_STREAM: u64 = 0xe7a1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    CrossDomain,
    Detection,
    Attribution,
    Compression,
    VideoLevel,
    Transfer,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::CrossDomain,
        Experiment::Detection,
        Experiment::Attribution,
        Experiment::Compression,
        Experiment::VideoLevel,
        Experiment::Transfer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::CrossDomain => "cross-domain",
            Experiment::Detection => "detection",
            Experiment::Attribution => "attribution",
            Experiment::Compression => "compression",
            Experiment::VideoLevel => "video-level",
            Experiment::Transfer => "transfer",
        }
    }
}

impl std::str::FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown experiment {s:?} (cross-domain|detection|attribution|compression|video-level|transfer)"
                ))
            })
    }
}

impl std::fmt::Display for Experiment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Experiment configuration file. Every field except the corpus has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Corpus to generate under `<out>/corpus`. Ignored when `manifest` is set.
    #[serde(default = "default_corpus")]
    pub corpus: CorpusConfig,
    /// Existing corpus manifest to use instead of generating one.
    #[serde(default)]
    pub manifest: Option<PathBuf>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub denoiser: DenoiserSpec,
    /// Re-compression levels for robust training in the cross-domain experiment.
    #[serde(default = "default_image_crfs")]
    pub image_robust_crfs: Vec<u8>,
    /// Test levels of the compression sweep, also the robust training levels.
    #[serde(default = "default_sweep_crfs")]
    pub compression_crfs: Vec<u8>,
    /// Patch counts swept by the video-level experiment.
    #[serde(default = "default_n_values")]
    pub n_values: Vec<usize>,
    #[serde(default = "default_frames_per_clip")]
    pub frames_per_clip: usize,
    /// Strong re-compression level of the video-level experiment.
    #[serde(default = "default_video_crf")]
    pub video_crf: u8,
    /// Held-out frames used for few-shot fine-tuning.
    #[serde(default = "default_fewshot_frames")]
    pub fewshot_frames: usize,
}

fn default_corpus() -> CorpusConfig {
    CorpusConfig {
        seed: 7,
        frame_size: Default::default(),
        frames_per_source: 200,
        profiles: desk_profiles(),
    }
}
fn default_image_crfs() -> Vec<u8> {
    vec![0, 10, 20]
}
fn default_sweep_crfs() -> Vec<u8> {
    vec![0, 10, 20, 30, 40]
}
fn default_n_values() -> Vec<usize> {
    DEFAULT_N_VALUES.to_vec()
}
fn default_frames_per_clip() -> usize {
    8
}
fn default_video_crf() -> u8 {
    40
}
fn default_fewshot_frames() -> usize {
    60
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            corpus: default_corpus(),
            manifest: None,
            train: TrainConfig::default(),
            denoiser: DenoiserSpec::default(),
            image_robust_crfs: default_image_crfs(),
            compression_crfs: default_sweep_crfs(),
            n_values: default_n_values(),
            frames_per_clip: default_frames_per_clip(),
            video_crf: default_video_crf(),
            fewshot_frames: default_fewshot_frames(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_slice(bytes)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_json(&bytes)?;
        // A relative manifest path is relative to the config file.
        if let (Some(m), Some(dir)) = (&config.manifest, path.parent()) {
            if m.is_relative() {
                config.manifest = Some(dir.join(m));
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.denoiser.validate()?;
        if self.manifest.is_none() {
            self.corpus.validate()?;
        }
        for &c in self.image_robust_crfs.iter().chain(&self.compression_crfs).chain([&self.video_crf]) {
            CompressionLevel::new(c)?;
        }
        if self.compression_crfs.is_empty() {
            return Err(Error::invalid("compression_crfs is empty"));
        }
        if self.n_values.is_empty() || self.n_values.contains(&0) {
            return Err(Error::invalid("n_values must be non-empty and positive"));
        }
        if self.frames_per_clip == 0 || self.fewshot_frames == 0 {
            return Err(Error::invalid("frames_per_clip and fewshot_frames must be positive"));
        }
        Ok(())
    }
}

fn levels(crfs: &[u8]) -> Result<Vec<CompressionLevel>> {
    crfs.iter().map(|&c| CompressionLevel::new(c)).collect()
}

/// Files produced by one experiment.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: MetricsReport,
    pub fingerprints: Vec<(String, Fingerprint)>,
}

impl ExperimentOutput {
    /// Writes `report.json`, `tables/<name>.md`, `curves/<name>.csv` (when the
    /// report has curves) and `fingerprints/<source>.pgm` under `out_dir`.
    pub fn write(&self, out_dir: &Path, denoiser: DenoiserSpec) -> Result<()> {
        let name = &self.report.name;
        write_file(&out_dir.join("report.json"), &self.report.to_json()?)?;
        write_file(&out_dir.join("tables").join(format!("{name}.md")), self.report.to_markdown().as_bytes())?;
        if !self.report.curves.is_empty() {
            write_file(&out_dir.join("curves").join(format!("{name}.csv")), self.report.curves_csv().as_bytes())?;
        }
        for (source, fp) in &self.fingerprints {
            export_fingerprint(fp, denoiser, out_dir.join("fingerprints").join(format!("{source}.pgm")))?;
        }
        Ok(())
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Which detector a memoized model is.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct ModelKey {
    task: Task,
    sources: Vec<String>,
    crfs: Vec<u8>,
}

/// A prepared corpus with a shared feature cache and model memo, so running
/// several experiments reuses features and trained detectors.
pub struct Harness {
    config: ExperimentConfig,
    manifest: DatasetManifest,
    root: PathBuf,
    cache: FeatureCache,
    models: Mutex<HashMap<ModelKey, Arc<DetectorModel>>>,
}

impl Harness {
    /// Loads `config.manifest`, or generates the configured corpus under
    /// `work_dir/corpus` (reusing it when a manifest with the same seed and
    /// profiles is already there).
    pub fn prepare(config: ExperimentConfig, work_dir: &Path) -> Result<Self> {
        config.validate()?;
        let (manifest, root) = match &config.manifest {
            Some(path) => DatasetManifest::load(path)?,
            None => {
                let dir = work_dir.join("corpus");
                let existing = DatasetManifest::load(dir.join("manifest.json")).ok();
                match existing {
                    Some((m, root))
                        if m.seed == config.corpus.seed
                            && m.profiles == config.corpus.profiles
                            && corpus_matches(&m, &root, &config.corpus) =>
                    {
                        (m, root)
                    }
                    _ => (build_corpus(&config.corpus, &dir)?, dir),
                }
            }
        };
        Ok(Self::with_manifest(config, manifest, root))
    }

    pub fn with_manifest(config: ExperimentConfig, manifest: DatasetManifest, root: PathBuf) -> Self {
        let cache = FeatureCache::new(config.denoiser, FeatureConfig::default());
        Harness {
            config,
            manifest,
            root,
            cache,
            models: Mutex::new(HashMap::new()),
        }
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn cache(&self) -> &FeatureCache {
        &self.cache
    }

    pub fn run(&self, experiment: Experiment) -> Result<ExperimentOutput> {
        match experiment {
            Experiment::CrossDomain => self.cross_domain(),
            Experiment::Detection => self.detection(),
            Experiment::Attribution => self.attribution(),
            Experiment::Compression => self.compression(),
            Experiment::VideoLevel => self.video_level(),
            Experiment::Transfer => self.transfer(),
        }
    }

    /// Runs one experiment and writes its files under `out_dir`.
    pub fn run_to(&self, experiment: Experiment, out_dir: &Path) -> Result<ExperimentOutput> {
        let out = self.run(experiment)?;
        out.write(out_dir, self.config.denoiser)?;
        Ok(out)
    }

    fn family_ids(&self, family: Family) -> Vec<String> {
        self.manifest.profiles_of(family).into_iter().map(|p| p.id.clone()).collect()
    }

    /// The manifest restricted to the real source plus `sources`.
    fn subset(&self, sources: &[String]) -> DatasetManifest {
        restrict(&self.manifest, sources)
    }

    /// Trains (or fetches) a detector on real plus `sources`, augmented with `crfs`.
    fn model(&self, task: Task, sources: &[String], crfs: &[u8]) -> Result<Arc<DetectorModel>> {
        let key = ModelKey {
            task,
            sources: sources.to_vec(),
            crfs: crfs.to_vec(),
        };
        if let Some(m) = self.models.lock().expect("model memo poisoned").get(&key) {
            return Ok(m.clone());
        }
        let subset = self.subset(sources);
        let model = Arc::new(train_cached(
            &subset,
            &self.root,
            task,
            &self.config.train,
            &levels(crfs)?,
            &self.cache,
        )?);
        self.models.lock().expect("model memo poisoned").insert(key, model.clone());
        Ok(model)
    }

    fn eval_seed(&self) -> u64 {
        derive_seed(self.config.train.seed, &[EVAL_STREAM])
    }

    /// Patch predictions for `entries` after optional re-compression, one per patch.
    fn predict(
        &self,
        model: &DetectorModel,
        entries: &[&ManifestEntry],
        crf: Option<CompressionLevel>,
    ) -> Result<Vec<PatchPrediction>> {
        predict_entries(model, &self.cache, &self.root, entries, crf, self.config.train.patches_per_frame, self.eval_seed())
    }

    fn test_entries(&self, source: &str) -> Vec<&ManifestEntry> {
        self.manifest
            .entries_in(Split::Test)
            .filter(|e| e.source_id == source && e.crf.is_none())
            .collect()
    }

    /// Per-source AUC of each synthetic source in `sources` against the real test split.
    fn per_source_auc(
        &self,
        model: &DetectorModel,
        sources: &[String],
        crf: Option<CompressionLevel>,
    ) -> Result<Vec<SourceAuc>> {
        let real = self.predict(model, &self.test_entries(REAL_SOURCE), crf)?;
        sources
            .iter()
            .map(|s| {
                let synth = self.predict(model, &self.test_entries(s), crf)?;
                Ok(SourceAuc {
                    source_id: s.clone(),
                    auc: detection_auc(&real, &synth)?,
                })
            })
            .collect()
    }

    /// AUC of all of `sources` pooled against the real test split.
    fn pooled_auc(&self, model: &DetectorModel, sources: &[String], crf: Option<CompressionLevel>) -> Result<f64> {
        let real = self.predict(model, &self.test_entries(REAL_SOURCE), crf)?;
        let mut synth = Vec::new();
        for s in sources {
            synth.extend(self.predict(model, &self.test_entries(s), crf)?);
        }
        detection_auc(&real, &synth)
    }
}

fn corpus_matches(m: &DatasetManifest, root: &Path, c: &CorpusConfig) -> bool {
    let expected = c.real_frames() + c.frames_per_source * c.profiles.len();
    if m.entries.len() != expected {
        return false;
    }
    // Frame size is not in the manifest; check one header.
    let Some(first) = m.entries.first() else { return false };
    let header = fs::read(root.join(&first.path)).ok().and_then(|b| crate::pgm::parse_header(&b).ok());
    header.is_some_and(|h| h.width == c.frame_size.width && h.height == c.frame_size.height)
}

/// `manifest` restricted to the real source plus `sources` (profiles included).
pub fn restrict(manifest: &DatasetManifest, sources: &[String]) -> DatasetManifest {
    let keep = |s: &str| s == REAL_SOURCE || sources.iter().any(|x| x == s);
    DatasetManifest {
        seed: manifest.seed,
        profiles: manifest.profiles.iter().filter(|p| keep(&p.id)).cloned().collect(),
        entries: manifest.entries.iter().filter(|e| keep(&e.source_id)).cloned().collect(),
    }
}

/// Patch predictions for manifest entries.
pub fn predict_entries(
    model: &DetectorModel,
    cache: &FeatureCache,
    root: &Path,
    entries: &[&ManifestEntry],
    crf: Option<CompressionLevel>,
    patches_per_frame: usize,
    seed: u64,
) -> Result<Vec<PatchPrediction>> {
    let items: Vec<(String, Option<CompressionLevel>)> = entries.iter().map(|e| (e.path.clone(), crf)).collect();
    let feats = cache.many(root, &items, patches_per_frame, seed)?;
    feats
        .iter()
        .flat_map(|fs| fs.iter().map(|f| predict_features(model, f)))
        .collect()
}

fn detection_auc(real: &[PatchPrediction], synth: &[PatchPrediction]) -> Result<f64> {
    let samples: Vec<ScoredSample> = real
        .iter()
        .map(|p| ScoredSample::new(p.synthetic_margin, false))
        .chain(synth.iter().map(|p| ScoredSample::new(p.synthetic_margin, true)))
        .collect();
    auc(&samples)
}

/// Evaluates a trained model on the test split of a manifest. Detection models
/// get per-source and pooled AUC; attribution models also get one-vs-rest AUC
/// and a confusion matrix.
pub fn evaluate_model(model: &DetectorModel, manifest: &DatasetManifest, root: &Path) -> Result<MetricsReport> {
    model.validate()?;
    let cache = FeatureCache::new(model.denoiser, FeatureConfig::new(model.feature_config.rings, model.feature_config.sectors)?);
    let test: Vec<&ManifestEntry> = manifest.entries_in(Split::Test).filter(|e| e.crf.is_none()).collect();
    if !test.iter().any(|e| e.label == Label::Real) {
        return Err(Error::invalid(format!("test split has no samples of class {REAL_SOURCE:?}")));
    }
    if !test.iter().any(|e| e.label == Label::Synthetic) {
        return Err(Error::invalid(format!("test split has no samples of class {SYNTHETIC_CLASS:?}")));
    }
    let seed = derive_seed(model.seed, &[EVAL_STREAM]);
    let preds = predict_entries(model, &cache, root, &test, None, 1, seed)?;
    let mut report = MetricsReport::new("eval");
    let real: Vec<PatchPrediction> = test
        .iter()
        .zip(&preds)
        .filter(|(e, _)| e.label == Label::Real)
        .map(|(_, p)| p.clone())
        .collect();
    let mut sources: Vec<String> = test
        .iter()
        .filter(|e| e.label == Label::Synthetic)
        .map(|e| e.source_id.clone())
        .collect();
    sources.dedup();
    sources.sort();
    sources.dedup();
    for s in &sources {
        let synth: Vec<PatchPrediction> = test
            .iter()
            .zip(&preds)
            .filter(|(e, _)| &e.source_id == s)
            .map(|(_, p)| p.clone())
            .collect();
        report.per_source.push(SourceAuc {
            source_id: s.clone(),
            auc: detection_auc(&real, &synth)?,
        });
    }
    let synth_all: Vec<PatchPrediction> = test
        .iter()
        .zip(&preds)
        .filter(|(e, _)| e.label == Label::Synthetic)
        .map(|(_, p)| p.clone())
        .collect();
    report.overall_auc = Some(detection_auc(&real, &synth_all)?);
    if !model.classes.iter().any(|c| c == SYNTHETIC_CLASS) {
        let truth: Vec<Option<usize>> = test.iter().map(|e| Task::Attribute.class_of(&model.classes, e)).collect();
        let (labels, probs): (Vec<usize>, Vec<Vec<f64>>) = truth
            .iter()
            .zip(&preds)
            .filter_map(|(t, p)| t.map(|t| (t, p.probabilities.clone())))
            .unzip();
        if labels.len() < truth.len() {
            report
                .warnings
                .push(format!("{} test samples have classes unknown to the model", truth.len() - labels.len()));
        }
        let ovr = ovr_auc(&model.classes, &probs, &labels)?;
        for (c, a) in &ovr.per_class {
            report.values.insert(format!("ovr_auc.{c}"), *a);
        }
        report.values.insert("macro_ovr_auc".into(), ovr.macro_auc);
        let predicted: Vec<usize> = probs.iter().map(|p| crate::detector::argmax(p)).collect();
        report.confusion = Some(Confusion::from_predictions(&model.classes, &labels, &predicted));
    }
    Ok(report)
}
