//! H.264-style degradation: an intra-frame DCT quantization simulator, an
//! external-encoder wrapper, and robust-training manifest augmentation.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::corpus::{DatasetManifest, ManifestEntry, Split};
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::pgm;

pub const MAX_CRF: u8 = 51;
/// Default CRF of most H.264 encoders; the simulator's step table is the base
/// table exactly at this value.
pub const DEFAULT_CRF: u8 = 23;
pub const ENCODER_ENV: &str = "VIDTRACE_ENCODER";

/// JPEG luminance quantization table (quality 50), in 8-bit code values.
const BASE_TABLE: [[f64; 8]; 8] = [
    [16.0, 11.0, 10.0, 16.0, 24.0, 40.0, 51.0, 61.0],
    [12.0, 12.0, 14.0, 19.0, 26.0, 58.0, 60.0, 55.0],
    [14.0, 13.0, 16.0, 24.0, 40.0, 57.0, 69.0, 56.0],
    [14.0, 17.0, 22.0, 29.0, 51.0, 87.0, 80.0, 62.0],
    [18.0, 22.0, 37.0, 56.0, 68.0, 109.0, 103.0, 77.0],
    [24.0, 35.0, 55.0, 64.0, 81.0, 104.0, 113.0, 92.0],
    [49.0, 64.0, 78.0, 87.0, 103.0, 121.0, 120.0, 101.0],
    [72.0, 92.0, 95.0, 98.0, 112.0, 100.0, 103.0, 99.0],
];

/// H.264 constant rate factor, `0..=51`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct CompressionLevel(u8);

impl CompressionLevel {
    pub fn new(crf: u8) -> Result<Self> {
        if crf > MAX_CRF {
            return Err(Error::invalid(format!("crf {crf} is outside 0..={MAX_CRF}")));
        }
        Ok(CompressionLevel(crf))
    }

    pub fn from_i64(crf: i64) -> Result<Self> {
        u8::try_from(crf)
            .map_err(|_| Error::invalid(format!("crf {crf} is outside 0..={MAX_CRF}")))
            .and_then(CompressionLevel::new)
    }

    pub fn crf(self) -> u8 {
        self.0
    }

    /// Multiplier applied to the base table: `2^((crf − 23)/6)`.
    pub fn step_scale(self) -> f64 {
        2f64.powf((self.0 as f64 - DEFAULT_CRF as f64) / 6.0)
    }

    /// Quantization step for DCT coefficient `(u, v)` in `[0,1]` pixel units.
    pub fn step(self, u: usize, v: usize) -> f64 {
        BASE_TABLE[u][v] / 255.0 * self.step_scale()
    }
}

impl TryFrom<u8> for CompressionLevel {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        CompressionLevel::new(v)
    }
}

impl From<CompressionLevel> for u8 {
    fn from(c: CompressionLevel) -> u8 {
        c.0
    }
}

impl fmt::Display for CompressionLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

fn dct_matrix() -> &'static [[f64; 8]; 8] {
    static M: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    M.get_or_init(|| {
        let mut m = [[0.0; 8]; 8];
        for (k, row) in m.iter_mut().enumerate() {
            let alpha = if k == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
            for (n, v) in row.iter_mut().enumerate() {
                *v = alpha * (std::f64::consts::PI * (2 * n + 1) as f64 * k as f64 / 16.0).cos();
            }
        }
        m
    })
}

/// Orthonormal 2-D DCT-II of an 8×8 block.
pub fn dct8x8(block: &[[f64; 8]; 8]) -> [[f64; 8]; 8] {
    let m = dct_matrix();
    let mut tmp = [[0.0; 8]; 8];
    for r in 0..8 {
        for k in 0..8 {
            tmp[r][k] = (0..8).map(|n| m[k][n] * block[r][n]).sum();
        }
    }
    let mut out = [[0.0; 8]; 8];
    for k in 0..8 {
        for c in 0..8 {
            out[k][c] = (0..8).map(|n| m[k][n] * tmp[n][c]).sum();
        }
    }
    out
}

/// Inverse of [`dct8x8`].
pub fn idct8x8(coef: &[[f64; 8]; 8]) -> [[f64; 8]; 8] {
    let m = dct_matrix();
    let mut tmp = [[0.0; 8]; 8];
    for r in 0..8 {
        for n in 0..8 {
            tmp[r][n] = (0..8).map(|k| m[k][n] * coef[r][k]).sum();
        }
    }
    let mut out = [[0.0; 8]; 8];
    for n in 0..8 {
        for c in 0..8 {
            out[n][c] = (0..8).map(|k| m[k][n] * tmp[k][c]).sum();
        }
    }
    out
}

/// Padded dimensions and an edge-replicated block reader.
fn read_block(frame: &Frame, block_row: usize, block_col: usize) -> [[f64; 8]; 8] {
    let mut b = [[0.0; 8]; 8];
    for (r, line) in b.iter_mut().enumerate() {
        let row = (block_row * 8 + r).min(frame.height() - 1);
        for (c, v) in line.iter_mut().enumerate() {
            let col = (block_col * 8 + c).min(frame.width() - 1);
            *v = frame.get(row, col);
        }
    }
    b
}

/// Blockwise DCT coefficients of a frame (edge-replicated to multiples of 8).
pub fn block_coefficients(frame: &Frame) -> Vec<[[f64; 8]; 8]> {
    let (br, bc) = (frame.height().div_ceil(8), frame.width().div_ceil(8));
    let mut out = Vec::with_capacity(br * bc);
    for by in 0..br {
        for bx in 0..bc {
            out.push(dct8x8(&read_block(frame, by, bx)));
        }
    }
    out
}

/// Intra-frame DCT quantization at the given CRF.
pub fn simulate_compression(frame: &Frame, level: CompressionLevel) -> Frame {
    let (w, h) = (frame.width(), frame.height());
    let (br, bc) = (h.div_ceil(8), w.div_ceil(8));
    let mut steps = [[0.0; 8]; 8];
    for (u, row) in steps.iter_mut().enumerate() {
        for (v, s) in row.iter_mut().enumerate() {
            *s = level.step(u, v);
        }
    }
    let mut out = vec![0.0; w * h];
    for by in 0..br {
        for bx in 0..bc {
            let mut coef = dct8x8(&read_block(frame, by, bx));
            for u in 0..8 {
                for v in 0..8 {
                    coef[u][v] = (coef[u][v] / steps[u][v]).round() * steps[u][v];
                }
            }
            let pixels = idct8x8(&coef);
            for (r, line) in pixels.iter().enumerate() {
                let row = by * 8 + r;
                if row >= h {
                    break;
                }
                for (c, v) in line.iter().enumerate() {
                    let col = bx * 8 + c;
                    if col >= w {
                        break;
                    }
                    out[row * w + col] = *v;
                }
            }
        }
    }
    Frame::from_raw_clamped(w, h, out)
}

/// Checked CRF entry point taking a raw integer.
pub fn simulate_compression_crf(frame: &Frame, crf: i64) -> Result<Frame> {
    Ok(simulate_compression(frame, CompressionLevel::from_i64(crf)?))
}

/// Peak signal-to-noise ratio in dB for signals in `[0,1]`.
pub fn psnr(reference: &Frame, degraded: &Frame) -> f64 {
    let mse = reference
        .data()
        .iter()
        .zip(degraded.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / reference.data().len() as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

/// Command templates for an external H.264 encoder. Tokens are split on
/// whitespace; `%in`, `%out`, `%tmp` and `%crf` are substituted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalEncoder {
    pub encode: String,
    pub decode: String,
}

impl Default for ExternalEncoder {
    fn default() -> Self {
        ExternalEncoder::with_program("ffmpeg")
    }
}

impl ExternalEncoder {
    pub fn with_program(program: &str) -> Self {
        ExternalEncoder {
            encode: format!(
                "{program} -y -loglevel error -framerate 30 -i %in -c:v libx264 -crf %crf %tmp"
            ),
            decode: format!("{program} -y -loglevel error -i %tmp -pix_fmt gray %out"),
        }
    }

    /// Resolves the encoder from an optional configured template, with the
    /// `VIDTRACE_ENCODER` environment variable taking precedence. A value without
    /// placeholders is treated as the encoder program.
    pub fn resolve(encoder_cmd: Option<&str>) -> Self {
        let env = std::env::var(ENCODER_ENV).ok().filter(|s| !s.trim().is_empty());
        match env.as_deref().or(encoder_cmd) {
            None => ExternalEncoder::default(),
            Some(cmd) if cmd.contains('%') => {
                let program = cmd.split_whitespace().next().unwrap_or("ffmpeg");
                ExternalEncoder {
                    encode: cmd.to_string(),
                    decode: ExternalEncoder::with_program(program).decode,
                }
            }
            Some(program) => ExternalEncoder::with_program(program.trim()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for p in ["%in", "%crf", "%tmp"] {
            if !self.encode.contains(p) {
                return Err(Error::invalid(format!("encode template lacks placeholder {p}")));
            }
        }
        for p in ["%tmp", "%out"] {
            if !self.decode.contains(p) {
                return Err(Error::invalid(format!("decode template lacks placeholder {p}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum CodecBackend {
    #[default]
    Simulator,
    External(ExternalEncoder),
}

fn run_template(template: &str, subst: &[(&str, String)]) -> Result<()> {
    let args: Vec<String> = template
        .split_whitespace()
        .map(|tok| {
            subst
                .iter()
                .fold(tok.to_string(), |t, (k, v)| t.replace(k, v))
        })
        .collect();
    let (program, rest) = args
        .split_first()
        .ok_or_else(|| Error::invalid("empty encoder command template"))?;
    let output = Command::new(program).args(rest).output().map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::Environment(format!(
                "encoder program {program:?} was not found; install ffmpeg with libx264 \
                 or point {ENCODER_ENV} at an encoder binary or command template"
            ))
        } else {
            Error::Environment(format!("failed to launch {program:?}: {e}"))
        }
    })?;
    if !output.status.success() {
        return Err(Error::Tool {
            status: output.status.to_string(),
            output: format!(
                "{}{}",
                String::from_utf8_lossy(&output.stdout),
                String::from_utf8_lossy(&output.stderr)
            ),
        });
    }
    Ok(())
}

/// Sorted list of `.pgm` files in a directory.
pub fn list_pgm_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgm")))
        .collect();
    files.sort();
    Ok(files)
}

/// Encodes the PGM sequence in `frame_dir` to H.264 at `crf` with an external
/// encoder and decodes it back into `out_dir` as `frame_%05d.pgm`.
pub fn recompress_external(
    frame_dir: &Path,
    out_dir: &Path,
    crf: i64,
    encoder: &ExternalEncoder,
) -> Result<PathBuf> {
    let level = CompressionLevel::from_i64(crf)?;
    encoder.validate()?;
    let frames = list_pgm_files(frame_dir)?;
    if frames.is_empty() {
        return Err(Error::invalid(format!("{} contains no .pgm frames", frame_dir.display())));
    }
    let staging = out_dir.join(".vidtrace-encode");
    fs::create_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    for (i, f) in frames.iter().enumerate() {
        let dst = staging.join(format!("frame_{i:05}.pgm"));
        fs::copy(f, &dst).map_err(|e| Error::io(&dst, e))?;
    }
    let tmp = staging.join("encoded.mp4");
    let subst = [
        ("%in", staging.join("frame_%05d.pgm").display().to_string()),
        ("%out", out_dir.join("frame_%05d.pgm").display().to_string()),
        ("%tmp", tmp.display().to_string()),
        ("%crf", level.to_string()),
    ];
    let result = run_template(&encoder.encode, &subst).and_then(|_| run_template(&encoder.decode, &subst));
    let _ = fs::remove_dir_all(&staging);
    result.map(|_| out_dir.to_path_buf())
}

/// Recompresses every PGM frame of `in_dir` into `out_dir` with the given backend.
pub fn recompress_dir(in_dir: &Path, out_dir: &Path, crf: i64, backend: &CodecBackend) -> Result<Vec<PathBuf>> {
    let level = CompressionLevel::from_i64(crf)?;
    if in_dir == out_dir {
        return Err(Error::invalid("output directory must differ from the input directory"));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    match backend {
        CodecBackend::Simulator => {
            let mut written = Vec::new();
            for src in list_pgm_files(in_dir)? {
                let frame = pgm::load_frame(&src)?;
                let dst = out_dir.join(src.file_name().expect("listed file has a name"));
                pgm::save_frame(&simulate_compression(&frame, level), &dst)?;
                written.push(dst);
            }
            Ok(written)
        }
        CodecBackend::External(enc) => {
            recompress_external(in_dir, out_dir, crf, enc)?;
            list_pgm_files(out_dir)
        }
    }
}

fn validate_crf_list(crfs: &[i64]) -> Result<Vec<CompressionLevel>> {
    if crfs.is_empty() {
        return Err(Error::invalid("robust-training crf list is empty"));
    }
    crfs.iter().map(|&c| CompressionLevel::from_i64(c)).collect()
}

/// Path of the compressed variant written beside an original frame.
pub fn variant_path(path: &str, level: CompressionLevel) -> String {
    match path.strip_suffix(".pgm") {
        Some(stem) => format!("{stem}_crf{:02}.pgm", level.crf()),
        None => format!("{path}_crf{:02}.pgm", level.crf()),
    }
}

/// Entries added by augmentation, without touching the file system.
pub fn augmented_entries(manifest: &DatasetManifest, crfs: &[i64]) -> Result<Vec<ManifestEntry>> {
    let levels = validate_crf_list(crfs)?;
    let mut added = Vec::new();
    for entry in manifest.entries.iter().filter(|e| e.split == Split::Train) {
        for &level in &levels {
            added.push(ManifestEntry {
                path: variant_path(&entry.path, level),
                crf: Some(level),
                ..entry.clone()
            });
        }
    }
    Ok(added)
}

/// Adds one simulator-compressed variant per CRF for every train-split entry,
/// writing each variant beside its original under `root`. Val/test entries are
/// left untouched.
pub fn augment_manifest(manifest: &DatasetManifest, root: &Path, crfs: &[i64]) -> Result<DatasetManifest> {
    let added = augmented_entries(manifest, crfs)?;
    let per_entry = crfs.len();
    let train: Vec<&ManifestEntry> = manifest.entries.iter().filter(|e| e.split == Split::Train).collect();
    for (i, entry) in train.iter().enumerate() {
        let frame = pgm::load_frame(root.join(&entry.path))?;
        for variant in &added[i * per_entry..(i + 1) * per_entry] {
            let level = variant.crf.expect("augmented entries carry a crf");
            pgm::save_frame(&simulate_compression(&frame, level), root.join(&variant.path))?;
        }
    }
    let mut out = manifest.clone();
    out.entries.extend(added);
    out.validate()?;
    Ok(out)
}
