//! Browser demo: fingerprint explorer, compression explorer and a video-level
//! AUC curve. The plain functions do the work and are tested natively; the
//! `#[wasm_bindgen]` wrappers only convert errors.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use vidtrace::compression::{psnr, simulate_compression, CompressionLevel};
use vidtrace::corpus::{gen_real_frame, gen_synth_frame, Family, GeneratorProfile, Label, TracePeak, REAL_SOURCE};
use vidtrace::detector::{
    extract_features, train_on_features, FeatureConfig, LabeledFeatures, TrainConfig, SYNTHETIC_CLASS,
};
use vidtrace::harness::desk_profiles;
use vidtrace::residual::{fingerprint, peak_detect, residual, DenoiserSpec, Fingerprint, ResidualAccumulator};
use vidtrace::seed::derive_seed;
use vidtrace::videolevel::{sweep_n, LoadedClip};
use vidtrace::{Frame, FrameSize, Patch, Result};

pub const MAX_FRAMES: usize = 64;
pub const CURVE_N: [usize; 5] = [1, 2, 4, 8, 16];

/// 8-bit grayscale image, row-major.
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct Gray {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

#[wasm_bindgen]
impl Gray {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// RGBA bytes, ready for `ImageData`.
    pub fn rgba(&self) -> Vec<u8> {
        self.pixels.iter().flat_map(|&g| [g, g, g, 255]).collect()
    }
}

impl Gray {
    fn from_unit(width: usize, height: usize, values: &[f64]) -> Self {
        Gray {
            width,
            height,
            pixels: values.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect(),
        }
    }

    fn from_frame(f: &Frame) -> Self {
        Self::from_unit(f.width(), f.height(), f.data())
    }

    fn from_fingerprint(fp: &Fingerprint) -> Self {
        Self::from_unit(fp.width(), fp.height(), fp.bins())
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PeakRow {
    pub u: i64,
    pub v: i64,
    pub ratio: f64,
}

#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct FingerprintView {
    image: Gray,
    peaks: Vec<PeakRow>,
}

#[wasm_bindgen]
impl FingerprintView {
    pub fn image(&self) -> Gray {
        self.image.clone()
    }

    /// Detected peaks as a JSON array of `{u, v, ratio}`.
    pub fn peaks_json(&self) -> String {
        serde_json::to_string(&self.peaks).expect("peaks serialize")
    }
}

impl FingerprintView {
    pub fn peaks(&self) -> &[PeakRow] {
        &self.peaks
    }
}

fn custom_profile(u: i64, v: i64, amplitude: f64, grid_period: usize, grid_strength: f64) -> Result<Option<GeneratorProfile>> {
    let has_peak = amplitude > 0.0;
    let has_grid = grid_period > 0 && grid_strength > 0.0;
    if !has_peak && !has_grid {
        return Ok(None);
    }
    let p = GeneratorProfile {
        id: "custom".into(),
        peaks: if has_peak { vec![TracePeak { u, v, amplitude }] } else { Vec::new() },
        grid_period: has_grid.then_some(grid_period),
        grid_strength: if has_grid { grid_strength } else { 0.0 },
        family: Family::VideoLike,
    };
    p.validate()?;
    Ok(Some(p))
}

fn frame_for(profile: Option<&GeneratorProfile>, seed: u64) -> Result<Frame> {
    let size = FrameSize::default();
    match profile {
        Some(p) => gen_synth_frame(seed, p, size),
        None => gen_real_frame(seed, size),
    }
}

/// Fingerprint of `frames` frames from a one-peak (plus optional grid)
/// profile. Zero amplitude and no grid gives real frames.
pub fn fingerprint_explorer(
    u: i64,
    v: i64,
    amplitude: f64,
    grid_period: usize,
    grid_strength: f64,
    frames: usize,
    seed: u64,
) -> Result<FingerprintView> {
    let profile = custom_profile(u, v, amplitude, grid_period, grid_strength)?;
    let frames = frames.clamp(1, MAX_FRAMES);
    let mut acc = ResidualAccumulator::new();
    for k in 0..frames {
        let f = frame_for(profile.as_ref(), derive_seed(seed, &[k as u64]))?;
        acc.push(&residual(&f, DenoiserSpec::default())?)?;
    }
    let fp = fingerprint(&acc.finish()?)?;
    let peaks = peak_detect(&fp, vidtrace::residual::DEFAULT_PEAK_RATIO)
        .into_iter()
        .take(16)
        .map(|p| PeakRow {
            u: p.u,
            v: p.v,
            ratio: p.ratio,
        })
        .collect();
    Ok(FingerprintView {
        image: Gray::from_fingerprint(&fp),
        peaks,
    })
}

#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct CompressionView {
    original: Gray,
    compressed: Gray,
    spectrum: Gray,
    psnr: f64,
    trace_kept: f64,
}

#[wasm_bindgen]
impl CompressionView {
    pub fn original(&self) -> Gray {
        self.original.clone()
    }

    pub fn compressed(&self) -> Gray {
        self.compressed.clone()
    }

    /// Residual spectrum of the compressed frame.
    pub fn spectrum(&self) -> Gray {
        self.spectrum.clone()
    }

    pub fn psnr(&self) -> f64 {
        self.psnr
    }

    /// Residual magnitude at the trace frequency after compression, relative
    /// to before.
    pub fn trace_kept(&self) -> f64 {
        self.trace_kept
    }
}

fn single_fingerprint(f: &Frame) -> Result<Fingerprint> {
    let mut acc = ResidualAccumulator::new();
    acc.push(&residual(f, DenoiserSpec::default())?)?;
    fingerprint(&acc.finish()?)
}

/// One synthetic frame before and after re-compression at `crf`.
pub fn compression_explorer(u: i64, v: i64, amplitude: f64, crf: i64, seed: u64) -> Result<CompressionView> {
    let level = CompressionLevel::from_i64(crf)?;
    let profile = custom_profile(u, v, amplitude, 0, 0.0)?;
    let before = frame_for(profile.as_ref(), seed)?;
    let after = simulate_compression(&before, level);
    let (fb, fa) = (single_fingerprint(&before)?, single_fingerprint(&after)?);
    let kept = if fb.magnitude_at(u, v) > 0.0 {
        fa.magnitude_at(u, v) / fb.magnitude_at(u, v)
    } else {
        0.0
    };
    Ok(CompressionView {
        original: Gray::from_frame(&before),
        compressed: Gray::from_frame(&after),
        spectrum: Gray::from_fingerprint(&fa),
        psnr: psnr(&before, &after),
        trace_kept: kept,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub n: usize,
    pub auc: f64,
}

fn features(f: &Frame) -> Result<vidtrace::detector::FeatureVector> {
    extract_features(&Patch::cut(f, (0, 0), None)?, DenoiserSpec::default(), &FeatureConfig::default())
}

/// Trains a small robust detector for one desk generator, then sweeps the
/// video-level AUC over N on clips re-compressed at `crf`.
pub fn video_curve(generator: &str, crf: i64, clips_per_class: usize, seed: u64) -> Result<Vec<CurvePoint>> {
    const TRAIN_FRAMES: u64 = 24;
    const CLIP_FRAMES: u64 = 8;
    let level = CompressionLevel::from_i64(crf)?;
    let profile = desk_profiles()
        .into_iter()
        .find(|p| p.id == generator)
        .ok_or_else(|| vidtrace::Error::InvalidArgument(format!("unknown generator {generator:?}")))?;

    let mut samples = Vec::new();
    for k in 0..TRAIN_FRAMES {
        for (class, p) in [(0, None), (1, Some(&profile))] {
            let f = frame_for(p, derive_seed(seed, &[0, class as u64, k]))?;
            // Augment with the test level so the detector is compression-robust.
            for g in [simulate_compression(&f, level), f] {
                samples.push(LabeledFeatures {
                    features: features(&g)?,
                    class,
                });
            }
        }
    }
    let classes = vec![REAL_SOURCE.to_string(), SYNTHETIC_CLASS.to_string()];
    let config = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    let model = train_on_features(classes, &samples, DenoiserSpec::default(), FeatureConfig::default(), &config)?;

    let mut clips = Vec::new();
    for c in 0..clips_per_class.max(1) as u64 {
        for (label, p) in [(Label::Real, None), (Label::Synthetic, Some(&profile))] {
            let frames = (0..CLIP_FRAMES)
                .map(|k| frame_for(p, derive_seed(seed, &[1, label as u64, c, k])).map(|f| simulate_compression(&f, level)))
                .collect::<Result<Vec<_>>>()?;
            clips.push(LoadedClip {
                source_id: format!("{label:?}-{c}"),
                label,
                frames,
            });
        }
    }
    let points = sweep_n(&model, &clips, &CURVE_N, seed)?;
    Ok(points.into_iter().map(|p| CurvePoint { n: p.n, auc: p.auc }).collect())
}

fn js_err(e: vidtrace::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = fingerprintExplorer)]
pub fn fingerprint_explorer_js(
    u: i32,
    v: i32,
    amplitude: f64,
    grid_period: u32,
    grid_strength: f64,
    frames: u32,
    seed: u32,
) -> std::result::Result<FingerprintView, JsError> {
    fingerprint_explorer(
        u as i64,
        v as i64,
        amplitude,
        grid_period as usize,
        grid_strength,
        frames as usize,
        seed as u64,
    )
    .map_err(js_err)
}

#[wasm_bindgen(js_name = compressionExplorer)]
pub fn compression_explorer_js(u: i32, v: i32, amplitude: f64, crf: i32, seed: u32) -> std::result::Result<CompressionView, JsError> {
    compression_explorer(u as i64, v as i64, amplitude, crf as i64, seed as u64).map_err(js_err)
}

/// JSON array of `{n, auc}`.
#[wasm_bindgen(js_name = videoCurve)]
pub fn video_curve_js(generator: &str, crf: i32, clips_per_class: u32, seed: u32) -> std::result::Result<String, JsError> {
    let points = video_curve(generator, crf as i64, clips_per_class as usize, seed as u64).map_err(js_err)?;
    Ok(serde_json::to_string(&points).expect("points serialize"))
}

/// Ids of the desk generators, as a JSON array.
#[wasm_bindgen(js_name = generators)]
pub fn generators_js() -> String {
    let ids: Vec<String> = desk_profiles().into_iter().map(|p| p.id).collect();
    serde_json::to_string(&ids).expect("ids serialize")
}
