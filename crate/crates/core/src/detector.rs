//! Spectral patch detector: pooled residual-spectrum features, a linear
//! embedder, softmax classification trained with cross-entropy, gradient
//! verification and few-shot fine-tuning.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::{Arc, Mutex, OnceLock};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::compression::CompressionLevel;
use crate::corpus::{load_entry_frame, sample_patches, DatasetManifest, Label, ManifestEntry, Split, REAL_SOURCE};
use crate::error::{Error, Result};
use crate::frame::{Patch, PATCH_SIZE};
use crate::residual::{residual, DenoiserSpec};
use crate::seed::{derive_seed, hash_str, rng};
use crate::spectral::fft2_real;

pub const DEFAULT_RINGS: usize = 16;
pub const DEFAULT_SECTORS: usize = 8;
pub const SYNTHETIC_CLASS: &str = "synthetic";
/// Learning-rate multiplier applied during few-shot fine-tuning.
pub const FINE_TUNE_LR_SCALE: f64 = 0.2;

/// Radial × angular pooling layout plus the per-feature standardization fitted
/// on the training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub rings: usize,
    pub sectors: usize,
    /// Per-feature offset subtracted before the linear layer.
    pub mean: Vec<f64>,
    /// Per-feature divisor applied after the offset.
    pub scale: Vec<f64>,
}

impl FeatureConfig {
    pub fn new(rings: usize, sectors: usize) -> Result<Self> {
        if rings == 0 || sectors == 0 {
            return Err(Error::invalid("feature pooling needs at least one ring and one sector"));
        }
        let d = rings * sectors;
        Ok(FeatureConfig {
            rings,
            sectors,
            mean: vec![0.0; d],
            scale: vec![1.0; d],
        })
    }

    pub fn dim(&self) -> usize {
        self.rings * self.sectors
    }

    /// Fits mean/scale to a feature matrix. Constant features keep scale 1.
    pub fn fit_standardization(&mut self, features: &[&FeatureVector]) {
        let d = self.dim();
        if features.is_empty() {
            self.mean = vec![0.0; d];
            self.scale = vec![1.0; d];
            return;
        }
        let n = features.len() as f64;
        let mut mean = vec![0.0; d];
        for f in features {
            for (m, v) in mean.iter_mut().zip(&f.0) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for f in features {
            for ((s, v), m) in var.iter_mut().zip(&f.0).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        self.scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 { sd } else { 1.0 }
            })
            .collect();
        self.mean = mean;
    }

    pub fn standardize(&self, f: &FeatureVector) -> Vec<f64> {
        f.0.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig::new(DEFAULT_RINGS, DEFAULT_SECTORS).expect("non-zero defaults")
    }
}

/// Pooled mean `log(1+|F|)` per (ring, sector) of a patch residual's centered spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// Feature index for a (ring, sector) pair.
    pub fn index(config: &FeatureConfig, ring: usize, sector: usize) -> usize {
        ring * config.sectors + sector
    }
}

/// Pooling bin of every unshifted DFT coordinate, `None` for DC.
struct PoolingTable {
    bin: Vec<Option<u16>>,
    counts: Vec<usize>,
}

/// Pooling bin of a signed frequency `(u, v)` on an `n`×`n` grid.
pub fn pooling_bin(n: usize, rings: usize, sectors: usize, u: i64, v: i64) -> Option<usize> {
    if u == 0 && v == 0 {
        return None;
    }
    let r = ((u * u + v * v) as f64).sqrt();
    let ring = ((r * rings as f64 / (n as f64 / 2.0)).floor() as usize).min(rings - 1);
    let theta = (v as f64).atan2(u as f64).rem_euclid(std::f64::consts::PI);
    let sector = ((theta * sectors as f64 / std::f64::consts::PI).floor() as usize).min(sectors - 1);
    Some(ring * sectors + sector)
}

fn pooling_table(n: usize, rings: usize, sectors: usize) -> Arc<PoolingTable> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize, usize), Arc<PoolingTable>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let mut guard = cache.lock().expect("pooling cache poisoned");
    guard
        .entry((n, rings, sectors))
        .or_insert_with(|| {
            let mut bin = Vec::with_capacity(n * n);
            let mut counts = vec![0; rings * sectors];
            let signed = |k: usize| if k < n / 2 { k as i64 } else { k as i64 - n as i64 };
            for k in 0..n {
                for l in 0..n {
                    let b = pooling_bin(n, rings, sectors, signed(k), signed(l));
                    if let Some(b) = b {
                        counts[b] += 1;
                    }
                    bin.push(b.map(|b| b as u16));
                }
            }
            Arc::new(PoolingTable { bin, counts })
        })
        .clone()
}

pub fn extract_features(patch: &Patch, spec: DenoiserSpec, config: &FeatureConfig) -> Result<FeatureVector> {
    let frame = patch.frame();
    if frame.width() != PATCH_SIZE || frame.height() != PATCH_SIZE {
        return Err(Error::invalid(format!("features need a {PATCH_SIZE}x{PATCH_SIZE} patch")));
    }
    let r = residual(frame, spec)?;
    let spectrum = fft2_real(PATCH_SIZE, PATCH_SIZE, r.data());
    let table = pooling_table(PATCH_SIZE, config.rings, config.sectors);
    let mut sums = vec![0.0; config.dim()];
    for (c, b) in spectrum.iter().zip(&table.bin) {
        if let Some(b) = b {
            sums[*b as usize] += c.norm().ln_1p();
        }
    }
    for (s, &n) in sums.iter_mut().zip(&table.counts) {
        if n > 0 {
            *s /= n as f64;
        }
    }
    Ok(FeatureVector(sums))
}

/// Pre-softmax logits `z = W·f + b` of one patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub logits: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Binary real vs synthetic.
    Detect,
    /// Real plus one class per generator.
    Attribute,
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "detect" => Ok(Task::Detect),
            "attribute" => Ok(Task::Attribute),
            _ => Err(Error::invalid(format!("unknown task {s:?} (detect|attribute)"))),
        }
    }
}

impl Task {
    /// Class list for a manifest: `[real, synthetic]` or `[real, g1..gC]`.
    pub fn classes(self, manifest: &DatasetManifest) -> Vec<String> {
        match self {
            Task::Detect => vec![REAL_SOURCE.to_string(), SYNTHETIC_CLASS.to_string()],
            Task::Attribute => std::iter::once(REAL_SOURCE.to_string())
                .chain(manifest.profiles.iter().map(|p| p.id.clone()))
                .collect(),
        }
    }

    pub fn class_of(self, classes: &[String], entry: &ManifestEntry) -> Option<usize> {
        let name = match (self, entry.label) {
            (_, Label::Real) => REAL_SOURCE,
            (Task::Detect, Label::Synthetic) => SYNTHETIC_CLASS,
            (Task::Attribute, Label::Synthetic) => entry.source_id.as_str(),
        };
        classes.iter().position(|c| c == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "TrainConfig::default_lr")]
    pub learning_rate: f64,
    #[serde(default = "TrainConfig::default_epochs")]
    pub epochs: usize,
    #[serde(default = "TrainConfig::default_batch")]
    pub batch_size: usize,
    #[serde(default = "TrainConfig::default_l2")]
    pub l2: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "TrainConfig::default_ppf")]
    pub patches_per_frame: usize,
}

impl TrainConfig {
    fn default_lr() -> f64 {
        0.05
    }
    fn default_epochs() -> usize {
        30
    }
    fn default_batch() -> usize {
        32
    }
    fn default_l2() -> f64 {
        1e-4
    }
    fn default_ppf() -> usize {
        1
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid(format!("learning rate must be > 0, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return Err(Error::invalid(format!("l2 must be >= 0, got {}", self.l2)));
        }
        if self.patches_per_frame == 0 {
            return Err(Error::invalid("patches_per_frame must be >= 1"));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: Self::default_lr(),
            epochs: Self::default_epochs(),
            batch_size: Self::default_batch(),
            l2: Self::default_l2(),
            seed: 0,
            patches_per_frame: Self::default_ppf(),
        }
    }
}

/// Linear softmax classifier over standardized spectral features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub classes: Vec<String>,
    #[serde(rename = "D")]
    pub dim: usize,
    /// `C × D` weight matrix.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub denoiser: DenoiserSpec,
    pub feature_config: FeatureConfig,
    pub seed: u64,
}

impl DetectorModel {
    pub fn zeros(classes: Vec<String>, denoiser: DenoiserSpec, feature_config: FeatureConfig, seed: u64) -> Result<Self> {
        if classes.len() < 2 {
            return Err(Error::invalid("a detector needs at least two classes"));
        }
        let dim = feature_config.dim();
        Ok(DetectorModel {
            weights: vec![vec![0.0; dim]; classes.len()],
            bias: vec![0.0; classes.len()],
            classes,
            dim,
            denoiser,
            feature_config,
            seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.classes.len();
        let shape_ok = c >= 2
            && self.dim == self.feature_config.dim()
            && self.feature_config.mean.len() == self.dim
            && self.feature_config.scale.len() == self.dim
            && self.bias.len() == c
            && self.weights.len() == c
            && self.weights.iter().all(|r| r.len() == self.dim);
        if !shape_ok {
            return Err(Error::Internal("detector weight/bias shapes are inconsistent".into()));
        }
        let finite = self.bias.iter().chain(self.weights.iter().flatten()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::Internal("detector parameters contain non-finite values".into()));
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    fn real_index(&self) -> Result<usize> {
        self.class_index(REAL_SOURCE)
            .ok_or_else(|| Error::Internal(format!("model has no {REAL_SOURCE:?} class")))
    }

    /// Logits for already-standardized features.
    pub fn logits_standardized(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| w.iter().zip(x).fold(*b, |acc, (wi, xi)| acc + wi * xi))
            .collect()
    }

    pub fn embed_features(&self, f: &FeatureVector) -> Result<Embedding> {
        if f.0.len() != self.dim {
            return Err(Error::Internal(format!(
                "feature length {} does not match model dimension {}",
                f.0.len(),
                self.dim
            )));
        }
        Ok(Embedding {
            logits: self.logits_standardized(&self.feature_config.standardize(f)),
        })
    }

    /// `1 − p(real)` for a probability vector from this model.
    pub fn synthetic_score(&self, probs: &[f64]) -> Result<f64> {
        Ok(1.0 - probs[self.real_index()?])
    }

    /// `log(Σ_{k≠real} e^{z_k}) − z_real`: the log-odds of `1 − p(real)`. Same
    /// ordering as [`Self::synthetic_score`] without saturating at 0 or 1, so
    /// rankings stay exact for confident models.
    pub fn synthetic_margin(&self, logits: &[f64]) -> Result<f64> {
        let r = self.real_index()?;
        let others = logits.iter().enumerate().filter(|(k, _)| *k != r).map(|(_, z)| *z);
        let max = others.clone().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + others.map(|z| (z - max).exp()).sum::<f64>().ln();
        Ok(lse - logits[r])
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let model: DetectorModel = serde_json::from_slice(&bytes)?;
        model.validate()?;
        Ok(model)
    }
}

/// ψ: the patch-level embedding.
pub fn embed(model: &DetectorModel, patch: &Patch) -> Result<Embedding> {
    model.validate()?;
    model.embed_features(&extract_features(patch, model.denoiser, &model.feature_config)?)
}

/// σ: numerically stable softmax.
pub fn softmax(z: &[f64]) -> Result<Vec<f64>> {
    if z.is_empty() || z.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("softmax needs a non-empty vector of finite logits"));
    }
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchPrediction {
    pub probabilities: Vec<f64>,
    pub synthetic_score: f64,
    /// Log-odds form of `synthetic_score`, used for ranking.
    pub synthetic_margin: f64,
}

fn prediction(model: &DetectorModel, logits: &[f64]) -> Result<PatchPrediction> {
    let probabilities = softmax(logits)?;
    Ok(PatchPrediction {
        synthetic_score: model.synthetic_score(&probabilities)?,
        synthetic_margin: model.synthetic_margin(logits)?,
        probabilities,
    })
}

pub fn predict_features(model: &DetectorModel, f: &FeatureVector) -> Result<PatchPrediction> {
    prediction(model, &model.embed_features(f)?.logits)
}

pub fn predict_patch(model: &DetectorModel, patch: &Patch) -> Result<PatchPrediction> {
    prediction(model, &embed(model, patch)?.logits)
}

/// Raw features with their class index.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFeatures {
    pub features: FeatureVector,
    pub class: usize,
}

/// Mean cross-entropy of a batch plus `(l2/2)‖W‖²`.
pub fn loss(model: &DetectorModel, batch: &[LabeledFeatures], l2: f64) -> f64 {
    let mut total = 0.0;
    for s in batch {
        let z = model.logits_standardized(&model.feature_config.standardize(&s.features));
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - z[s.class];
    }
    let reg: f64 = model.weights.iter().flatten().map(|w| w * w).sum();
    total / batch.len() as f64 + 0.5 * l2 * reg
}

/// Analytic gradient of [`loss`] as `(dW, db)`.
pub fn gradient(model: &DetectorModel, batch: &[LabeledFeatures], l2: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let c = model.num_classes();
    let mut dw = vec![vec![0.0; model.dim]; c];
    let mut db = vec![0.0; c];
    let inv_n = 1.0 / batch.len() as f64;
    for s in batch {
        let x = model.feature_config.standardize(&s.features);
        let p = softmax(&model.logits_standardized(&x)).expect("finite logits");
        for k in 0..c {
            let err = p[k] - if k == s.class { 1.0 } else { 0.0 };
            db[k] += err * inv_n;
            for (g, xi) in dw[k].iter_mut().zip(&x) {
                *g += err * xi * inv_n;
            }
        }
    }
    for (g_row, w_row) in dw.iter_mut().zip(&model.weights) {
        for (g, w) in g_row.iter_mut().zip(w_row) {
            *g += l2 * w;
        }
    }
    (dw, db)
}

pub const GRAD_CHECK_COORDS: usize = 64;

/// Maximum relative error between the analytic gradient and central finite
/// differences over a fixed random subset of parameter coordinates.
pub fn grad_check(model: &DetectorModel, batch: &[LabeledFeatures], l2: f64, epsilon: f64) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::invalid("gradient check needs a non-empty batch"));
    }
    model.validate()?;
    let (dw, db) = gradient(model, batch, l2);
    let c = model.num_classes();
    let total = c * (model.dim + 1);
    let mut coords: Vec<usize> = (0..total).collect();
    coords.shuffle(&mut rng(derive_seed(model.seed, &[0x6ead])));
    coords.truncate(GRAD_CHECK_COORDS.min(total));

    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for idx in coords {
        let (k, j) = (idx / (model.dim + 1), idx % (model.dim + 1));
        let analytic = if j == model.dim { db[k] } else { dw[k][j] };
        fn param(m: &mut DetectorModel, k: usize, j: usize) -> &mut f64 {
            if j == m.dim {
                &mut m.bias[k]
            } else {
                &mut m.weights[k][j]
            }
        }
        let original = *param(&mut probe, k, j);
        *param(&mut probe, k, j) = original + epsilon;
        let up = loss(&probe, batch, l2);
        *param(&mut probe, k, j) = original - epsilon;
        let down = loss(&probe, batch, l2);
        *param(&mut probe, k, j) = original;
        let numeric = (up - down) / (2.0 * epsilon);
        let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}

fn check_classes_present(classes: &[String], samples: &[LabeledFeatures]) -> Result<()> {
    for (k, name) in classes.iter().enumerate() {
        if !samples.iter().any(|s| s.class == k) {
            return Err(Error::invalid(format!("training data has no samples of class {name:?}")));
        }
    }
    Ok(())
}

/// Mini-batch SGD on `samples`, continuing from `model`'s parameters.
fn sgd(model: &mut DetectorModel, samples: &[LabeledFeatures], config: &TrainConfig, learning_rate: f64) {
    let standardized: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| model.feature_config.standardize(&s.features))
        .collect();
    let c = model.num_classes();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut shuffler = rng(derive_seed(config.seed, &[SHUFFLE_STREAM]));
    let mut dw = vec![vec![0.0; model.dim]; c];
    let mut db = vec![0.0; c];
    for _ in 0..config.epochs {
        order.shuffle(&mut shuffler);
        for batch in order.chunks(config.batch_size) {
            dw.iter_mut().flatten().for_each(|g| *g = 0.0);
            db.iter_mut().for_each(|g| *g = 0.0);
            let inv_n = 1.0 / batch.len() as f64;
            for &i in batch {
                let x = &standardized[i];
                let p = softmax(&model.logits_standardized(x)).expect("finite logits");
                for k in 0..c {
                    let err = (p[k] - if k == samples[i].class { 1.0 } else { 0.0 }) * inv_n;
                    db[k] += err;
                    for (g, xi) in dw[k].iter_mut().zip(x) {
                        *g += err * xi;
                    }
                }
            }
            for k in 0..c {
                for (w, g) in model.weights[k].iter_mut().zip(&dw[k]) {
                    *w -= learning_rate * (g + config.l2 * *w);
                }
                model.bias[k] -= learning_rate * db[k];
            }
        }
    }
}

const SHUFFLE_STREAM: u64 = 0x56d;

/// Trains a zero-initialized model on precomputed features. Standardization is
/// fitted on `samples` first.
pub fn train_on_features(
    classes: Vec<String>,
    samples: &[LabeledFeatures],
    denoiser: DenoiserSpec,
    mut feature_config: FeatureConfig,
    config: &TrainConfig,
) -> Result<DetectorModel> {
    config.validate()?;
    check_classes_present(&classes, samples)?;
    let refs: Vec<&FeatureVector> = samples.iter().map(|s| &s.features).collect();
    feature_config.fit_standardization(&refs);
    let mut model = DetectorModel::zeros(classes, denoiser, feature_config, config.seed)?;
    if let Some(bad) = samples.iter().find(|s| s.features.0.len() != model.dim) {
        return Err(Error::invalid(format!("feature vector of length {}, expected {}", bad.features.0.len(), model.dim)));
    }
    sgd(&mut model, samples, config, config.learning_rate);
    Ok(model)
}

/// Continues SGD from `model` on a small sample at a reduced learning rate.
/// The input model is left untouched.
pub fn fine_tune_features(model: &DetectorModel, samples: &[LabeledFeatures], config: &TrainConfig) -> Result<DetectorModel> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::invalid("few-shot set is empty"));
    }
    model.validate()?;
    if let Some(bad) = samples.iter().find(|s| s.class >= model.num_classes()) {
        return Err(Error::invalid(format!("few-shot sample has unknown class index {}", bad.class)));
    }
    let mut tuned = model.clone();
    sgd(&mut tuned, samples, config, config.learning_rate * FINE_TUNE_LR_SCALE);
    Ok(tuned)
}

pub fn accuracy(model: &DetectorModel, samples: &[LabeledFeatures]) -> f64 {
    let correct = samples
        .iter()
        .filter(|s| {
            let z = model.logits_standardized(&model.feature_config.standardize(&s.features));
            argmax(&z) == s.class
        })
        .count();
    correct as f64 / samples.len() as f64
}

pub fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
        .0
}

/// Key of one cached feature extraction.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct FeatureKey {
    path: String,
    crf: Option<u8>,
    seed: u64,
    patches: usize,
}

/// Memoizes per-frame patch features so experiments sharing frames do not
/// recompute them. Keys include the re-compression level and the patch seed.
#[derive(Debug)]
pub struct FeatureCache {
    denoiser: DenoiserSpec,
    config: FeatureConfig,
    map: Mutex<HashMap<FeatureKey, Arc<Vec<FeatureVector>>>>,
}

impl FeatureCache {
    pub fn new(denoiser: DenoiserSpec, config: FeatureConfig) -> Self {
        FeatureCache {
            denoiser,
            config,
            map: Mutex::new(HashMap::new()),
        }
    }

    pub fn denoiser(&self) -> DenoiserSpec {
        self.denoiser
    }

    pub fn feature_config(&self) -> &FeatureConfig {
        &self.config
    }

    /// Features of `patches` patches drawn from one frame with the given seed.
    pub fn frame_features(
        &self,
        root: &Path,
        path: &str,
        crf: Option<CompressionLevel>,
        patches: usize,
        seed: u64,
    ) -> Result<Arc<Vec<FeatureVector>>> {
        let key = FeatureKey {
            path: path.to_string(),
            crf: crf.map(CompressionLevel::crf),
            seed,
            patches,
        };
        if let Some(hit) = self.map.lock().expect("feature cache poisoned").get(&key) {
            return Ok(hit.clone());
        }
        let frame = load_entry_frame(root, path, crf)?;
        let feats = sample_patches(&frame, patches, seed)?
            .iter()
            .map(|p| extract_features(p, self.denoiser, &self.config))
            .collect::<Result<Vec<_>>>()?;
        let feats = Arc::new(feats);
        self.map.lock().expect("feature cache poisoned").insert(key, feats.clone());
        Ok(feats)
    }

    /// Features for many `(path, crf)` frames, in input order.
    pub fn many(
        &self,
        root: &Path,
        items: &[(String, Option<CompressionLevel>)],
        patches: usize,
        base_seed: u64,
    ) -> Result<Vec<Arc<Vec<FeatureVector>>>> {
        let one = |(path, crf): &(String, Option<CompressionLevel>)| {
            self.frame_features(root, path, *crf, patches, patch_seed(base_seed, path))
        };
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            items.par_iter().map(one).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            items.iter().map(one).collect()
        }
    }
}

/// Patch-placement seed of a frame, independent of its position in any list.
pub fn patch_seed(base: u64, path: &str) -> u64 {
    derive_seed(base, &[hash_str(path)])
}

/// A frame selected for training with the extra compression to apply.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingFrame {
    pub path: String,
    pub crf: Option<CompressionLevel>,
    pub class: usize,
}

/// Train-split frames of `manifest` labelled for `task`, plus one in-memory
/// re-compressed variant per CRF in `robust_crfs`.
pub fn training_frames(
    manifest: &DatasetManifest,
    classes: &[String],
    task: Task,
    split: Split,
    robust_crfs: &[CompressionLevel],
) -> Vec<TrainingFrame> {
    let mut out = Vec::new();
    for e in manifest.entries_in(split) {
        let Some(class) = task.class_of(classes, e) else { continue };
        out.push(TrainingFrame {
            path: e.path.clone(),
            crf: e.crf,
            class,
        });
        if e.crf.is_none() {
            for &level in robust_crfs {
                out.push(TrainingFrame {
                    path: e.path.clone(),
                    crf: Some(level),
                    class,
                });
            }
        }
    }
    out
}

/// Extracts labelled features for a list of training frames.
pub fn labeled_features(
    cache: &FeatureCache,
    root: &Path,
    frames: &[TrainingFrame],
    patches_per_frame: usize,
    seed: u64,
) -> Result<Vec<LabeledFeatures>> {
    let items: Vec<(String, Option<CompressionLevel>)> = frames.iter().map(|f| (f.path.clone(), f.crf)).collect();
    let feats = cache.many(root, &items, patches_per_frame, seed)?;
    Ok(frames
        .iter()
        .zip(feats)
        .flat_map(|(f, fs)| {
            fs.iter()
                .map(|v| LabeledFeatures {
                    features: v.clone(),
                    class: f.class,
                })
                .collect::<Vec<_>>()
        })
        .collect())
}

/// Entry whose written file is a compressed variant: its `crf` is metadata, not
/// a pending operation.
fn pending_crf(entry_crf: Option<CompressionLevel>, path: &str) -> Option<CompressionLevel> {
    match entry_crf {
        Some(level) if !path.ends_with(&format!("_crf{:02}.pgm", level.crf())) => Some(level),
        _ => None,
    }
}

/// Trains a detector on the train split of a corpus manifest.
pub fn train(
    manifest: &DatasetManifest,
    root: &Path,
    task: Task,
    spec: DenoiserSpec,
    config: &TrainConfig,
    robust_crfs: &[CompressionLevel],
) -> Result<DetectorModel> {
    spec.validate()?;
    train_cached(manifest, root, task, config, robust_crfs, &FeatureCache::new(spec, FeatureConfig::default()))
}

/// [`train`] drawing features from a shared cache; the cache fixes the denoiser.
pub fn train_cached(
    manifest: &DatasetManifest,
    root: &Path,
    task: Task,
    config: &TrainConfig,
    robust_crfs: &[CompressionLevel],
    cache: &FeatureCache,
) -> Result<DetectorModel> {
    config.validate()?;
    let spec = cache.denoiser();
    let classes = task.classes(manifest);
    let mut frames = training_frames(manifest, &classes, task, Split::Train, robust_crfs);
    for f in &mut frames {
        f.crf = pending_crf(f.crf, &f.path);
    }
    if let Some(missing) = classes.iter().enumerate().find(|(k, _)| !frames.iter().any(|f| f.class == *k)) {
        return Err(Error::invalid(format!("train split has no samples of class {:?}", missing.1)));
    }
    if config.epochs == 0 {
        // Nothing to fit: skip feature extraction and return the zero model with
        // identity standardization.
        return DetectorModel::zeros(classes, spec, FeatureConfig::default(), config.seed);
    }
    let samples = labeled_features(cache, root, &frames, config.patches_per_frame, config.seed)?;
    let layout = FeatureConfig::new(cache.feature_config().rings, cache.feature_config().sectors)?;
    train_on_features(classes, &samples, spec, layout, config)
}

/// Few-shot fine-tuning on every entry of `fewshot` (all splits), labelled by
/// the model's own classes.
pub fn fine_tune(
    model: &DetectorModel,
    fewshot: &DatasetManifest,
    root: &Path,
    config: &TrainConfig,
) -> Result<DetectorModel> {
    fine_tune_cached(model, fewshot, root, config, &FeatureCache::new(model.denoiser, model.feature_config.clone()))
}

/// [`fine_tune`] drawing features from a shared cache.
pub fn fine_tune_cached(
    model: &DetectorModel,
    fewshot: &DatasetManifest,
    root: &Path,
    config: &TrainConfig,
    cache: &FeatureCache,
) -> Result<DetectorModel> {
    if fewshot.entries.is_empty() {
        return Err(Error::invalid("few-shot manifest is empty"));
    }
    let task = if model.classes.iter().any(|c| c == SYNTHETIC_CLASS) { Task::Detect } else { Task::Attribute };
    let mut frames = Vec::new();
    for e in &fewshot.entries {
        let class = task
            .class_of(&model.classes, e)
            .ok_or_else(|| Error::invalid(format!("few-shot entry {} has a class unknown to the model", e.path)))?;
        frames.push(TrainingFrame {
            path: e.path.clone(),
            crf: pending_crf(e.crf, &e.path),
            class,
        });
    }
    if config.epochs == 0 {
        return Ok(model.clone());
    }
    if cache.denoiser() != model.denoiser {
        return Err(Error::invalid("feature cache denoiser differs from the model's"));
    }
    let samples = labeled_features(cache, root, &frames, config.patches_per_frame, config.seed)?;
    fine_tune_features(model, &samples, config)
}
