//! Video-level scoring: temporally spread patches, summed embeddings, softmax.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::compression::list_pgm_files;
use crate::corpus::{random_origin, Label};
use crate::detector::{embed, softmax, DetectorModel};
use crate::error::{Error, Result};
use crate::frame::{Frame, Patch, PATCH_SIZE};
use crate::metrics::{auc, ScoredSample};
use crate::pgm;
use crate::seed::{derive_seed, rng};

/// Patch counts swept by the video-level experiment.
pub const DEFAULT_N_VALUES: [usize; 8] = [1, 2, 4, 8, 16, 32, 64, 80];

/// An ordered sequence of frames from one source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoClip {
    pub frames: Vec<PathBuf>,
    pub source_id: String,
    /// Ground truth when known.
    pub label: Option<Label>,
}

impl VideoClip {
    /// Every PGM in `dir`, ordered by filename. The source id is the directory name.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let frames = list_pgm_files(dir)?;
        if frames.is_empty() {
            return Err(Error::invalid(format!("clip directory {} has no .pgm frames", dir.display())));
        }
        let source_id = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok(VideoClip {
            frames,
            source_id,
            label: None,
        })
    }

    pub fn load(&self) -> Result<Vec<Frame>> {
        let frames = self.frames.iter().map(pgm::load_frame).collect::<Result<Vec<_>>>()?;
        check_clip(&frames)?;
        Ok(frames)
    }
}

fn check_clip(frames: &[Frame]) -> Result<()> {
    let Some(first) = frames.first() else {
        return Err(Error::invalid("clip has no frames"));
    };
    if frames
        .iter()
        .any(|f| f.width() != first.width() || f.height() != first.height())
    {
        return Err(Error::invalid("clip frames differ in size"));
    }
    if first.width() < PATCH_SIZE || first.height() < PATCH_SIZE {
        return Err(Error::invalid(format!(
            "clip frames are {}x{}, smaller than a {PATCH_SIZE}x{PATCH_SIZE} patch",
            first.width(),
            first.height()
        )));
    }
    Ok(())
}

/// Clip frames held in memory, with a label for evaluation.
#[derive(Debug, Clone)]
pub struct LoadedClip {
    pub source_id: String,
    pub label: Label,
    pub frames: Vec<Frame>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoScore {
    pub probabilities: Vec<f64>,
    pub n_patches: usize,
    pub synthetic_score: f64,
    /// Log-odds form of `synthetic_score`, used for ranking.
    pub synthetic_margin: f64,
}

/// Frame indices `round(j·(F−1)/(max(N,2)−1))` for `j = 0..N`.
pub fn select_frame_indices(n_frames: usize, n: usize) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::invalid("video scoring needs at least one patch"));
    }
    if n_frames == 0 {
        return Err(Error::invalid("clip has no frames"));
    }
    let denom = (n.max(2) - 1) as f64;
    let last = (n_frames - 1) as f64;
    Ok((0..n).map(|j| (j as f64 * last / denom).round() as usize).collect())
}

/// Patch origin for the `occurrence`-th use of frame `index`. Independent of N,
/// so sweeps over N reuse the same patches.
fn origin_for(frame: &Frame, seed: u64, index: usize, occurrence: usize) -> (usize, usize) {
    random_origin(frame, &mut rng(derive_seed(seed, &[index as u64, occurrence as u64])))
}

/// `(frame index, origin)` of each selected patch, in selection order.
fn selection(frames: &[Frame], n: usize, seed: u64) -> Result<Vec<(usize, (usize, usize))>> {
    check_clip(frames)?;
    let mut seen: HashMap<usize, usize> = HashMap::new();
    select_frame_indices(frames.len(), n)?
        .into_iter()
        .map(|idx| {
            let occ = seen.entry(idx).or_insert(0);
            let origin = origin_for(&frames[idx], seed, idx, *occ);
            *occ += 1;
            Ok((idx, origin))
        })
        .collect()
}

pub fn select_patches(frames: &[Frame], n: usize, seed: u64) -> Result<Vec<Patch>> {
    selection(frames, n, seed)?
        .into_iter()
        .map(|(idx, origin)| Patch::cut(&frames[idx], origin, Some(format!("frame{idx}"))))
        .collect()
}

/// Embedding cache for one clip, keyed by frame index and patch origin.
struct ClipEmbeddings<'a> {
    model: &'a DetectorModel,
    frames: &'a [Frame],
    memo: HashMap<(usize, (usize, usize)), Vec<f64>>,
}

impl<'a> ClipEmbeddings<'a> {
    fn new(model: &'a DetectorModel, frames: &'a [Frame]) -> Self {
        ClipEmbeddings {
            model,
            frames,
            memo: HashMap::new(),
        }
    }

    fn score(&mut self, n: usize, seed: u64) -> Result<VideoScore> {
        let mut total = vec![0.0; self.model.num_classes()];
        for key in selection(self.frames, n, seed)? {
            if !self.memo.contains_key(&key) {
                let patch = Patch::cut(&self.frames[key.0], key.1, None)?;
                self.memo.insert(key, embed(self.model, &patch)?.logits);
            }
            for (t, z) in total.iter_mut().zip(&self.memo[&key]) {
                *t += z;
            }
        }
        let probabilities = softmax(&total)?;
        Ok(VideoScore {
            synthetic_score: self.model.synthetic_score(&probabilities)?,
            synthetic_margin: self.model.synthetic_margin(&total)?,
            probabilities,
            n_patches: n,
        })
    }
}

/// δ = σ(Σ ψ(x_k)) over `n` temporally spread patches.
pub fn video_score(model: &DetectorModel, frames: &[Frame], n: usize, seed: u64) -> Result<VideoScore> {
    model.validate()?;
    ClipEmbeddings::new(model, frames).score(n, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub n: usize,
    pub auc: f64,
}

/// Video-level AUC for every N in `n_values`.
pub fn sweep_n(model: &DetectorModel, clips: &[LoadedClip], n_values: &[usize], seed: u64) -> Result<Vec<SweepPoint>> {
    model.validate()?;
    let has = |l: Label| clips.iter().any(|c| c.label == l);
    if !has(Label::Real) || !has(Label::Synthetic) {
        return Err(Error::invalid("video sweep needs both real and synthetic clips"));
    }
    if n_values.is_empty() {
        return Err(Error::invalid("video sweep needs at least one N"));
    }
    let per_clip = |clip: &LoadedClip| -> Result<Vec<f64>> {
        let mut cache = ClipEmbeddings::new(model, &clip.frames);
        n_values
            .iter()
            .map(|&n| cache.score(n, seed).map(|s| s.synthetic_margin))
            .collect()
    };
    #[cfg(feature = "parallel")]
    let scores: Vec<Vec<f64>> = {
        use rayon::prelude::*;
        clips.par_iter().map(per_clip).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let scores: Vec<Vec<f64>> = clips.iter().map(per_clip).collect::<Result<_>>()?;

    n_values
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let samples: Vec<ScoredSample> = clips
                .iter()
                .zip(&scores)
                .map(|(c, s)| ScoredSample::new(s[k], c.label == Label::Synthetic))
                .collect();
            Ok(SweepPoint { n, auc: auc(&samples)? })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::{predict_patch, FeatureConfig};
    use crate::residual::DenoiserSpec;

    fn textured(seed: u64, side: usize) -> Frame {
        let mut r = rng(seed);
        use rand::Rng;
        Frame::from_fn(side, side, |_, _| r.random::<f64>()).unwrap()
    }

    fn clip(n: usize, side: usize, seed: u64) -> Vec<Frame> {
        (0..n).map(|k| textured(seed + k as u64, side)).collect()
    }

    fn model(classes: &[&str], bias: Vec<f64>, w: f64) -> DetectorModel {
        let mut m = DetectorModel::zeros(
            classes.iter().map(|s| s.to_string()).collect(),
            DenoiserSpec::default(),
            FeatureConfig::default(),
            0,
        )
        .unwrap();
        m.bias = bias;
        for (k, row) in m.weights.iter_mut().enumerate() {
            for (d, x) in row.iter_mut().enumerate() {
                *x = w * ((k * 31 + d * 7) % 11) as f64 - w * 5.0;
            }
        }
        m
    }

    #[test]
    fn index_formula() {
        assert_eq!(select_frame_indices(10, 1).unwrap(), vec![0]);
        assert_eq!(select_frame_indices(5, 3).unwrap(), vec![0, 2, 4]);
        assert_eq!(select_frame_indices(1, 4).unwrap(), vec![0; 4]);
        assert!(select_frame_indices(5, 0).is_err());
    }

    #[test]
    fn eighty_over_forty_uses_each_twice() {
        let idx = select_frame_indices(40, 80).unwrap();
        let mut counts = [0usize; 40];
        for i in idx {
            counts[i] += 1;
        }
        assert!(counts.iter().all(|&c| c == 2), "{counts:?}");
    }

    #[test]
    fn single_patch_matches_patch_prediction() {
        let frames = clip(4, 300, 1);
        let m = model(&["real", "synthetic"], vec![0.2, -0.1], 0.01);
        let patches = select_patches(&frames, 1, 9).unwrap();
        assert_eq!(patches[0].source_frame_id(), Some("frame0"));
        let p = predict_patch(&m, &patches[0]).unwrap();
        let v = video_score(&m, &frames, 1, 9).unwrap();
        assert_eq!(v.probabilities, p.probabilities);
        assert_eq!(v.synthetic_score, p.synthetic_score);
        assert_eq!(v.synthetic_margin, p.synthetic_margin);
    }

    #[test]
    fn identical_patches_scale_logits() {
        let frame = textured(5, 256);
        let frames = vec![frame.clone(); 3];
        let m = model(&["real", "synthetic"], vec![0.0, 0.3], 0.002);
        let z = embed(&m, &Patch::cut(&frame, (0, 0), None).unwrap()).unwrap().logits;
        assert!(z[1] > z[0]);
        let mut last = 0.0;
        for n in [1usize, 2, 4] {
            let v = video_score(&m, &frames, n, 0).unwrap();
            let scaled: Vec<f64> = z.iter().map(|x| x * n as f64).collect();
            let expected = softmax(&scaled).unwrap();
            for (a, b) in v.probabilities.iter().zip(&expected) {
                assert!((a - b).abs() < 1e-12);
            }
            assert!(v.probabilities[1] > last);
            last = v.probabilities[1];
        }
    }

    #[test]
    fn permutation_invariant() {
        let frames = clip(5, 256, 20);
        let m = model(&["real", "a", "b"], vec![0.1, 0.0, -0.1], 0.01);
        let sum_of = |order: &[usize]| {
            let mut t = vec![0.0; 3];
            for &k in order {
                let z = embed(&m, &Patch::cut(&frames[k], (0, 0), None).unwrap()).unwrap().logits;
                for (a, b) in t.iter_mut().zip(z) {
                    *a += b;
                }
            }
            softmax(&t).unwrap()
        };
        let fwd = sum_of(&[0, 1, 2, 3, 4]);
        let rev = sum_of(&[4, 2, 0, 3, 1]);
        let v = video_score(&m, &frames, 5, 0).unwrap();
        for ((a, b), c) in fwd.iter().zip(&rev).zip(&v.probabilities) {
            assert!((a - b).abs() < 1e-12);
            assert!((a - c).abs() < 1e-12);
        }
        assert!((v.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_and_seed_sensitive_origins() {
        let frames = clip(2, 320, 3);
        let a = select_patches(&frames, 6, 1).unwrap();
        let b = select_patches(&frames, 6, 1).unwrap();
        assert_eq!(a, b);
        let c = select_patches(&frames, 6, 2).unwrap();
        assert!(a.iter().zip(&c).any(|(x, y)| x.origin() != y.origin()));
    }

    #[test]
    fn undersized_frames_rejected() {
        let frames = vec![Frame::constant(128, 128, 0.5).unwrap()];
        assert!(matches!(select_patches(&frames, 1, 0), Err(Error::InvalidArgument(_))));
        assert!(select_patches(&[], 1, 0).is_err());
    }

    fn labelled(label: Label, seed: u64) -> LoadedClip {
        LoadedClip {
            source_id: "s".into(),
            label,
            frames: clip(3, 256, seed),
        }
    }

    #[test]
    fn zero_and_perfect_models() {
        let clips: Vec<LoadedClip> = (0..4)
            .map(|k| labelled(if k % 2 == 0 { Label::Real } else { Label::Synthetic }, 100 + k * 10))
            .collect();
        let zero = model(&["real", "synthetic"], vec![0.0, 0.0], 0.0);
        for p in sweep_n(&zero, &clips, &DEFAULT_N_VALUES, 0).unwrap() {
            assert_eq!(p.auc, 0.5);
        }
        // Perfect: constant bright frames for synthetic clips, dark for real,
        // separated through the bias-free weights on the standardized mean.
        let mut perfect = model(&["real", "synthetic"], vec![0.0, 0.0], 0.0);
        perfect.weights[1] = vec![1.0; 128];
        let mut clips = Vec::new();
        for k in 0..3u64 {
            clips.push(LoadedClip {
                source_id: "real".into(),
                label: Label::Real,
                frames: vec![Frame::constant(256, 256, 0.5).unwrap(); 2],
            });
            clips.push(labelled(Label::Synthetic, 200 + k));
        }
        let pts = sweep_n(&perfect, &clips, &[1, 2, 4], 0).unwrap();
        assert!(pts.iter().all(|p| p.auc == 1.0), "{pts:?}");
        assert_eq!(pts.iter().map(|p| p.n).collect::<Vec<_>>(), vec![1, 2, 4]);
    }

    #[test]
    fn single_label_rejected() {
        let clips = vec![labelled(Label::Real, 1)];
        let zero = model(&["real", "synthetic"], vec![0.0, 0.0], 0.0);
        assert!(matches!(sweep_n(&zero, &clips, &[1], 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn clip_from_dir_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let sub = dir.path().join("gen");
        std::fs::create_dir(&sub).unwrap();
        for name in ["b.pgm", "a.pgm"] {
            pgm::save_frame(&Frame::constant(256, 256, 0.25).unwrap(), sub.join(name)).unwrap();
        }
        let c = VideoClip::from_dir(&sub).unwrap();
        assert_eq!(c.source_id, "gen");
        assert!(c.frames[0].ends_with("a.pgm"));
        assert_eq!(c.load().unwrap().len(), 2);
    }
}
