//! Ground-truth pseudo-generator corpus: procedural real and synthetic frames,
//! split manifests and patch sampling.

use std::collections::{BTreeMap, HashSet};
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::compression::{simulate_compression, CompressionLevel, DEFAULT_CRF};
use crate::error::{Error, Result};
use crate::frame::{Frame, FrameSize, Patch, MIN_FRAME_SIDE, PATCH_SIZE};
use crate::pgm;
use crate::residual::{gaussian_kernel, separable_blur};
use crate::seed::{derive_seed, rng};

pub const REAL_SOURCE: &str = "real";
const CONTENT_BLUR_SIGMA: f64 = 2.0;
const SENSOR_NOISE_STD: f64 = 0.01;
/// Trace frequencies are expressed in cycles per patch.
const TRACE_PERIOD: f64 = PATCH_SIZE as f64;
pub const MIN_FRAMES_PER_SOURCE: usize = 10;
pub const SPLIT_FRACTIONS: [f64; 3] = [0.74, 0.06, 0.20];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    ImageLike,
    VideoLike,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePeak {
    pub u: i64,
    pub v: i64,
    pub amplitude: f64,
}

/// Parameterized pseudo-generator: periodic spectral peaks plus an optional
/// checkerboard grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorProfile {
    pub id: String,
    pub peaks: Vec<TracePeak>,
    #[serde(default)]
    pub grid_period: Option<usize>,
    #[serde(default)]
    pub grid_strength: f64,
    pub family: Family,
}

impl GeneratorProfile {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() || self.id == REAL_SOURCE {
            return Err(Error::invalid(format!("invalid profile id {:?}", self.id)));
        }
        for p in &self.peaks {
            if p.u.abs() >= 128 || p.v.abs() >= 128 {
                return Err(Error::invalid(format!(
                    "profile {}: peak ({},{}) outside |u|,|v| < 128",
                    self.id, p.u, p.v
                )));
            }
            if !(0.0..=0.2).contains(&p.amplitude) {
                return Err(Error::invalid(format!(
                    "profile {}: amplitude {} outside [0,0.2]",
                    self.id, p.amplitude
                )));
            }
        }
        if !(0.0..=0.2).contains(&self.grid_strength) {
            return Err(Error::invalid(format!(
                "profile {}: grid strength {} outside [0,0.2]",
                self.id, self.grid_strength
            )));
        }
        if let Some(period) = self.grid_period {
            if period < 2 || period % 2 != 0 {
                return Err(Error::invalid(format!(
                    "profile {}: grid period {period} must be even and >= 2",
                    self.id
                )));
            }
        }
        let has_peak = self.peaks.iter().any(|p| p.amplitude > 0.0 && (p.u, p.v) != (0, 0));
        let has_grid = self.grid_period.is_some() && self.grid_strength > 0.0;
        if !has_peak && !has_grid {
            return Err(Error::invalid(format!("profile {} has an empty trace", self.id)));
        }
        Ok(())
    }

    /// Additive trace value at pixel `(i, j)`.
    pub fn trace_at(&self, i: usize, j: usize) -> f64 {
        let mut t = 0.0;
        for p in &self.peaks {
            t += p.amplitude * (2.0 * PI * (p.u as f64 * i as f64 + p.v as f64 * j as f64) / TRACE_PERIOD).cos();
        }
        if let Some(period) = self.grid_period {
            let half = period / 2;
            let sign = if ((i / half) + (j / half)).is_multiple_of(2) { 1.0 } else { -1.0 };
            t += self.grid_strength * sign;
        }
        t
    }
}

fn check_size(size: FrameSize) -> Result<()> {
    if size.width < MIN_FRAME_SIDE || size.height < MIN_FRAME_SIDE {
        return Err(Error::invalid(format!(
            "frame size {}x{} is below {MIN_FRAME_SIDE}x{MIN_FRAME_SIDE}",
            size.width, size.height
        )));
    }
    Ok(())
}

/// Band-limited content plus sensor noise, before the camera compression pass.
fn content(seed: u64, size: FrameSize) -> Vec<f64> {
    let (w, h) = (size.width, size.height);
    let mut rng = rng(seed);
    let field: Vec<f64> = (0..w * h).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut blurred = separable_blur(w, h, &field, &gaussian_kernel(CONTENT_BLUR_SIGMA));
    let (lo, hi) = blurred
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let noise = Normal::new(0.0, SENSOR_NOISE_STD).expect("valid std");
    for v in blurred.iter_mut() {
        *v = ((*v - lo) / span + noise.sample(&mut rng)).clamp(0.0, 1.0);
    }
    blurred
}

fn camera_pass(size: FrameSize, data: Vec<f64>) -> Frame {
    let frame = Frame::from_raw_clamped(size.width, size.height, data);
    simulate_compression(&frame, CompressionLevel::new(DEFAULT_CRF).expect("default crf in range"))
}

/// A "real" frame: blurred noise field, sensor noise, one camera compression pass.
pub fn gen_real_frame(seed: u64, size: FrameSize) -> Result<Frame> {
    check_size(size)?;
    Ok(camera_pass(size, content(seed, size)))
}

/// A synthetic frame: the real content path with the profile's trace added
/// before the compression pass.
pub fn gen_synth_frame(seed: u64, profile: &GeneratorProfile, size: FrameSize) -> Result<Frame> {
    profile.validate()?;
    check_size(size)?;
    let mut data = content(seed, size);
    for i in 0..size.height {
        for j in 0..size.width {
            let v = &mut data[i * size.width + j];
            *v = (*v + profile.trace_at(i, j)).clamp(0.0, 1.0);
        }
    }
    Ok(camera_pass(size, data))
}

/// `n` patches at uniformly random in-bounds origins.
pub fn sample_patches(frame: &Frame, n: usize, rng_seed: u64) -> Result<Vec<Patch>> {
    if frame.width() < PATCH_SIZE || frame.height() < PATCH_SIZE {
        return Err(Error::invalid(format!(
            "frame {}x{} is smaller than a {PATCH_SIZE}x{PATCH_SIZE} patch",
            frame.width(),
            frame.height()
        )));
    }
    let mut r = rng(rng_seed);
    (0..n)
        .map(|_| {
            let origin = random_origin(frame, &mut r);
            Patch::cut(frame, origin, None)
        })
        .collect()
}

pub(crate) fn random_origin(frame: &Frame, r: &mut impl Rng) -> (usize, usize) {
    let row = r.random_range(0..=frame.height() - PATCH_SIZE);
    let col = r.random_range(0..=frame.width() - PATCH_SIZE);
    (row, col)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::invalid(format!("unknown split {s:?} (train|val|test)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Frame path relative to the manifest's directory.
    pub path: String,
    pub label: Label,
    pub source_id: String,
    pub split: Split,
    /// Re-compression applied on top of the original frame, if any.
    pub crf: Option<CompressionLevel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub profiles: Vec<GeneratorProfile>,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        let mut paths = HashSet::new();
        for e in &self.entries {
            if !paths.insert(e.path.as_str()) {
                return Err(Error::invalid(format!("duplicate manifest path {}", e.path)));
            }
            if e.label == Label::Synthetic && self.profile(&e.source_id).is_none() {
                return Err(Error::invalid(format!(
                    "entry {} references unknown profile {}",
                    e.path, e.source_id
                )));
            }
        }
        let mut ids = HashSet::new();
        for p in &self.profiles {
            if !ids.insert(p.id.as_str()) {
                return Err(Error::invalid(format!("duplicate profile id {}", p.id)));
            }
        }
        Ok(())
    }

    pub fn profile(&self, id: &str) -> Option<&GeneratorProfile> {
        self.profiles.iter().find(|p| p.id == id)
    }

    pub fn profiles_of(&self, family: Family) -> Vec<&GeneratorProfile> {
        self.profiles.iter().filter(|p| p.family == family).collect()
    }

    pub fn entries_in(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// Source ids in order of first appearance.
    pub fn sources(&self) -> Vec<String> {
        let mut seen = Vec::<String>::new();
        for e in &self.entries {
            if !seen.contains(&e.source_id) {
                seen.push(e.source_id.clone());
            }
        }
        seen
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

    /// Loads a manifest and returns it with the directory its paths are relative to.
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, PathBuf)> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let manifest: DatasetManifest = serde_json::from_slice(&bytes)?;
        manifest.validate()?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((manifest, root))
    }

    /// Count of entries per `(source, split)`.
    pub fn split_counts(&self) -> BTreeMap<(String, Split), usize> {
        let mut counts = BTreeMap::new();
        for e in &self.entries {
            *counts.entry((e.source_id.clone(), e.split)).or_insert(0) += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub seed: u64,
    #[serde(default)]
    pub frame_size: FrameSize,
    pub frames_per_source: usize,
    pub profiles: Vec<GeneratorProfile>,
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.profiles.len() < 2 {
            return Err(Error::invalid(format!(
                "corpus needs at least 2 generator profiles, got {}",
                self.profiles.len()
            )));
        }
        if !self.profiles.iter().any(|p| p.family == Family::VideoLike) {
            return Err(Error::invalid("corpus needs at least one video-like profile"));
        }
        if self.frames_per_source < MIN_FRAMES_PER_SOURCE {
            return Err(Error::invalid(format!(
                "frames_per_source must be >= {MIN_FRAMES_PER_SOURCE}, got {}",
                self.frames_per_source
            )));
        }
        check_size(self.frame_size)?;
        let mut ids = HashSet::new();
        for p in &self.profiles {
            p.validate()?;
            if !ids.insert(p.id.as_str()) {
                return Err(Error::invalid(format!("duplicate profile id {}", p.id)));
            }
        }
        Ok(())
    }

    /// Real frames balance the synthetic total.
    pub fn real_frames(&self) -> usize {
        self.frames_per_source * self.profiles.len()
    }
}

/// Split sizes for `n` items: rounded 74/6/20 with the remainder going to test.
pub fn split_sizes(n: usize) -> [usize; 3] {
    let train = (n as f64 * SPLIT_FRACTIONS[0]).round() as usize;
    let val = ((n as f64 * SPLIT_FRACTIONS[1]).round() as usize).min(n - train);
    [train, val, n - train - val]
}

/// Assigns splits to `n` items by a deterministic shuffle.
pub fn assign_splits(n: usize, seed: u64) -> Vec<Split> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng(seed));
    let [train, val, _] = split_sizes(n);
    let mut splits = vec![Split::Test; n];
    for (rank, &idx) in order.iter().enumerate() {
        splits[idx] = if rank < train {
            Split::Train
        } else if rank < train + val {
            Split::Val
        } else {
            Split::Test
        };
    }
    splits
}

struct PlannedFrame {
    entry: ManifestEntry,
    seed: u64,
    profile: Option<usize>,
}

fn plan(config: &CorpusConfig) -> Vec<PlannedFrame> {
    let mut planned = Vec::new();
    let mut push_source = |source_idx: usize, source_id: &str, count: usize, profile: Option<usize>| {
        let splits = assign_splits(count, derive_seed(config.seed, &[0x5117, source_idx as u64]));
        for (i, split) in splits.into_iter().enumerate() {
            planned.push(PlannedFrame {
                entry: ManifestEntry {
                    path: format!("frames/{source_id}/{source_id}_{i:05}.pgm"),
                    label: if profile.is_some() { Label::Synthetic } else { Label::Real },
                    source_id: source_id.to_string(),
                    split,
                    crf: None,
                },
                seed: derive_seed(config.seed, &[source_idx as u64, i as u64]),
                profile,
            });
        }
    };
    push_source(0, REAL_SOURCE, config.real_frames(), None);
    for (k, p) in config.profiles.iter().enumerate() {
        push_source(k + 1, &p.id, config.frames_per_source, Some(k));
    }
    planned
}

fn render(config: &CorpusConfig, item: &PlannedFrame, out_dir: &Path) -> Result<()> {
    let frame = match item.profile {
        None => gen_real_frame(item.seed, config.frame_size)?,
        Some(k) => gen_synth_frame(item.seed, &config.profiles[k], config.frame_size)?,
    };
    pgm::save_frame(&frame, out_dir.join(&item.entry.path))
}

/// Generates every frame as PGM under `out_dir/frames/<source>/` and writes
/// `out_dir/manifest.json`.
pub fn build_corpus(config: &CorpusConfig, out_dir: &Path) -> Result<DatasetManifest> {
    config.validate()?;
    let planned = plan(config);
    let mut sources = vec![REAL_SOURCE.to_string()];
    sources.extend(config.profiles.iter().map(|p| p.id.clone()));
    for s in &sources {
        let dir = out_dir.join("frames").join(s);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }

    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        planned.par_iter().try_for_each(|item| render(config, item, out_dir))?;
    }
    #[cfg(not(feature = "parallel"))]
    for item in &planned {
        render(config, item, out_dir)?;
    }

    let manifest = DatasetManifest {
        seed: config.seed,
        profiles: config.profiles.clone(),
        entries: planned.into_iter().map(|p| p.entry).collect(),
    };
    manifest.validate()?;
    manifest.save(out_dir.join("manifest.json"))?;
    Ok(manifest)
}

/// Loads the frame behind a manifest entry, applying its re-compression level
/// when the entry's file is not itself a written variant.
pub fn load_entry_frame(root: &Path, path: &str, extra_crf: Option<CompressionLevel>) -> Result<Frame> {
    let frame = pgm::load_frame(root.join(path))?;
    Ok(match extra_crf {
        Some(level) => simulate_compression(&frame, level),
        None => frame,
    })
}
