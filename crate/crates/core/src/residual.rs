//! Denoiser, noise residuals, aggregate residuals and their Fourier-magnitude
//! fingerprints.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::pgm;
use crate::spectral::{centered_frequency, shifted_index, shifted_magnitude};

pub const DEFAULT_PEAK_RATIO: f64 = 5.0;

/// The denoiser whose output is subtracted from a frame to form its residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DenoiserSpec {
    /// 3×3 median filter.
    Median3,
    /// Separable Gaussian blur truncated at 3σ.
    Gaussian { sigma: f64 },
    Identity,
}

impl DenoiserSpec {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        let spec = DenoiserSpec::Gaussian { sigma };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DenoiserSpec::Gaussian { sigma } if !(sigma.is_finite() && sigma > 0.0) => Err(
                Error::invalid(format!("gaussian sigma must be finite and > 0, got {sigma}")),
            ),
            _ => Ok(()),
        }
    }
}

impl Default for DenoiserSpec {
    fn default() -> Self {
        DenoiserSpec::Gaussian { sigma: 1.0 }
    }
}

impl fmt::Display for DenoiserSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DenoiserSpec::Median3 => f.write_str("median3"),
            DenoiserSpec::Gaussian { sigma } => write!(f, "gaussian:{sigma:?}"),
            DenoiserSpec::Identity => f.write_str("identity"),
        }
    }
}

impl FromStr for DenoiserSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "median3" => Ok(DenoiserSpec::Median3),
            "identity" => Ok(DenoiserSpec::Identity),
            "gaussian" => Ok(DenoiserSpec::default()),
            _ => {
                let sigma = s
                    .strip_prefix("gaussian:")
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| {
                        Error::invalid(format!(
                            "unknown denoiser {s:?} (expected gaussian:<sigma>, median3 or identity)"
                        ))
                    })?;
                DenoiserSpec::gaussian(sigma)
            }
        }
    }
}

impl Serialize for DenoiserSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DenoiserSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|x| (-((x * x) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= sum);
    kernel
}

/// Separable convolution with edge replication.
pub(crate) fn separable_blur(width: usize, height: usize, data: &[f64], kernel: &[f64]) -> Vec<f64> {
    let radius = (kernel.len() / 2) as i64;
    let clamp = |i: i64, n: usize| i.clamp(0, n as i64 - 1) as usize;

    let mut horizontal = vec![0.0; data.len()];
    for row in 0..height {
        let line = &data[row * width..(row + 1) * width];
        for col in 0..width {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                acc += w * line[clamp(col as i64 + k as i64 - radius, width)];
            }
            horizontal[row * width + col] = acc;
        }
    }

    let mut out = vec![0.0; data.len()];
    for row in 0..height {
        for col in 0..width {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                acc += w * horizontal[clamp(row as i64 + k as i64 - radius, height) * width + col];
            }
            out[row * width + col] = acc;
        }
    }
    out
}

fn median3(frame: &Frame) -> Vec<f64> {
    let (w, h) = (frame.width(), frame.height());
    let mut out = vec![0.0; w * h];
    let mut window = [0.0f64; 9];
    for row in 0..h {
        for col in 0..w {
            let mut n = 0;
            for dr in [-1i64, 0, 1] {
                let r = (row as i64 + dr).clamp(0, h as i64 - 1) as usize;
                for dc in [-1i64, 0, 1] {
                    let c = (col as i64 + dc).clamp(0, w as i64 - 1) as usize;
                    window[n] = frame.get(r, c);
                    n += 1;
                }
            }
            window.sort_unstable_by(f64::total_cmp);
            out[row * w + col] = window[4];
        }
    }
    out
}

pub fn denoise(frame: &Frame, spec: DenoiserSpec) -> Result<Frame> {
    spec.validate()?;
    let data = match spec {
        DenoiserSpec::Identity => return Ok(frame.clone()),
        DenoiserSpec::Median3 => median3(frame),
        DenoiserSpec::Gaussian { sigma } => separable_blur(
            frame.width(),
            frame.height(),
            frame.data(),
            &gaussian_kernel(sigma),
        ),
    };
    Ok(Frame::from_raw_clamped(frame.width(), frame.height(), data))
}

/// Per-frame noise residual `x − φ(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Residual {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid("residual data length does not match its shape"));
        }
        if data.iter().any(|v| !v.is_finite() || v.abs() > 1.0) {
            return Err(Error::invalid("residual values must be finite and within [-1,1]"));
        }
        Ok(Residual {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

pub fn residual(frame: &Frame, spec: DenoiserSpec) -> Result<Residual> {
    let denoised = denoise(frame, spec)?;
    let data = frame
        .data()
        .iter()
        .zip(denoised.data())
        .map(|(x, d)| x - d)
        .collect();
    Ok(Residual {
        width: frame.width(),
        height: frame.height(),
        data,
    })
}

/// Element-wise mean of `N` residuals from one source.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateResidual {
    width: usize,
    height: usize,
    data: Vec<f64>,
    n_samples: usize,
}

impl AggregateResidual {
    pub fn from_data(width: usize, height: usize, data: Vec<f64>, n_samples: usize) -> Result<Self> {
        if n_samples == 0 {
            return Err(Error::invalid("aggregate residual needs at least one sample"));
        }
        if data.len() != width * height {
            return Err(Error::invalid("aggregate data length does not match its shape"));
        }
        Ok(AggregateResidual {
            width,
            height,
            data,
            n_samples,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }
}

/// Running sum of residuals in insertion order, so that large sources can be
/// aggregated without holding every residual in memory.
#[derive(Debug, Clone, Default)]
pub struct ResidualAccumulator {
    shape: Option<(usize, usize)>,
    sum: Vec<f64>,
    count: usize,
}

impl ResidualAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, r: &Residual) -> Result<()> {
        match self.shape {
            None => {
                self.shape = Some((r.width, r.height));
                self.sum = r.data.clone();
            }
            Some(shape) if shape != (r.width, r.height) => {
                return Err(Error::invalid(format!(
                    "residual shape {}x{} does not match {}x{}",
                    r.width, r.height, shape.0, shape.1
                )));
            }
            Some(_) => {
                for (s, v) in self.sum.iter_mut().zip(&r.data) {
                    *s += v;
                }
            }
        }
        self.count += 1;
        Ok(())
    }

    pub fn finish(self) -> Result<AggregateResidual> {
        let (width, height) = self
            .shape
            .ok_or_else(|| Error::invalid("cannot aggregate an empty residual list"))?;
        let n = self.count as f64;
        let data = self.sum.into_iter().map(|s| s / n).collect();
        AggregateResidual::from_data(width, height, data, self.count)
    }
}

pub fn aggregate(residuals: &[Residual]) -> Result<AggregateResidual> {
    let mut acc = ResidualAccumulator::new();
    for r in residuals {
        acc.push(r)?;
    }
    acc.finish()
}

/// Centered, log-scaled, max-normalized Fourier magnitude of an aggregate
/// residual. Raw magnitudes are kept for peak thresholding.
#[derive(Debug, Clone, PartialEq)]
pub struct Fingerprint {
    width: usize,
    height: usize,
    bins: Vec<f64>,
    magnitude: Vec<f64>,
    log_max: f64,
    n_samples: usize,
}

/// A spectral peak at centered frequency `(u, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub u: i64,
    pub v: i64,
    /// Raw (pre-normalization) magnitude.
    pub strength: f64,
    /// `strength` divided by the local median magnitude.
    pub ratio: f64,
}

impl Fingerprint {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bins(&self) -> &[f64] {
        &self.bins
    }

    /// Shifted raw magnitudes `|F|`.
    pub fn magnitude(&self) -> &[f64] {
        &self.magnitude
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn log_max(&self) -> f64 {
        self.log_max
    }

    pub fn bin_at(&self, u: i64, v: i64) -> f64 {
        self.bins[shifted_index(self.width, self.height, u, v)]
    }

    pub fn magnitude_at(&self, u: i64, v: i64) -> f64 {
        self.magnitude[shifted_index(self.width, self.height, u, v)]
    }

    fn dc_index(&self) -> usize {
        shifted_index(self.width, self.height, 0, 0)
    }

    /// Centered frequencies of the `k` strongest non-DC bins, strongest first.
    pub fn top_bins(&self, k: usize) -> Vec<(i64, i64)> {
        let dc = self.dc_index();
        let mut order: Vec<usize> = (0..self.magnitude.len()).filter(|&i| i != dc).collect();
        order.sort_by(|&a, &b| self.magnitude[b].total_cmp(&self.magnitude[a]).then(a.cmp(&b)));
        order
            .into_iter()
            .take(k)
            .map(|i| centered_frequency(self.width, self.height, i / self.width, i % self.width))
            .collect()
    }

    pub fn median_non_dc(&self) -> f64 {
        let dc = self.dc_index();
        let mut values: Vec<f64> = self
            .magnitude
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != dc)
            .map(|(_, m)| *m)
            .collect();
        if values.is_empty() {
            return 0.0;
        }
        let mid = values.len() / 2;
        let (_, m, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
        let upper = *m;
        if values.len() % 2 == 1 {
            upper
        } else {
            let lower = values[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            0.5 * (lower + upper)
        }
    }
}

pub fn fingerprint(agg: &AggregateResidual) -> Result<Fingerprint> {
    if agg.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("aggregate residual contains non-finite values"));
    }
    let magnitude = shifted_magnitude(agg.width, agg.height, &agg.data);
    let logs: Vec<f64> = magnitude.iter().map(|m| m.ln_1p()).collect();
    let log_max = logs.iter().copied().fold(0.0, f64::max);
    let bins = if log_max > 0.0 {
        logs.iter().map(|l| l / log_max).collect()
    } else {
        vec![0.0; logs.len()]
    };
    Ok(Fingerprint {
        width: agg.width,
        height: agg.height,
        bins,
        magnitude,
        log_max,
        n_samples: agg.n_samples,
    })
}

/// Half-width of the square neighbourhood whose median is the local background
/// in [`peak_detect`].
pub const PEAK_WINDOW: i64 = 7;

/// Non-DC local maxima (8-neighbourhood, periodic) whose raw magnitude exceeds
/// `threshold_ratio` times the median non-DC magnitude of the surrounding
/// `(2·PEAK_WINDOW+1)²` window. The 3×3 block around DC is never reported.
/// Sorted by strength, strongest first.
///
/// Residual spectra of natural content are band-pass and, after block coding,
/// anisotropic, so the reference median is local rather than global.
pub fn peak_detect(fp: &Fingerprint, threshold_ratio: f64) -> Vec<Peak> {
    let (w, h) = (fp.width, fp.height);
    let mut peaks = Vec::new();
    let mut window = Vec::with_capacity(((2 * PEAK_WINDOW + 1) * (2 * PEAK_WINDOW + 1)) as usize);
    for row in 0..h {
        for col in 0..w {
            let (u, v) = centered_frequency(w, h, row, col);
            if u.abs() <= 1 && v.abs() <= 1 {
                continue;
            }
            let m = fp.magnitude[row * w + col];
            let is_max = (-1..=1).all(|du: i64| {
                (-1..=1).all(|dv: i64| {
                    (du == 0 && dv == 0) || fp.magnitude[shifted_index(w, h, u + du, v + dv)] <= m
                })
            });
            if !is_max {
                continue;
            }
            window.clear();
            for du in -PEAK_WINDOW..=PEAK_WINDOW {
                for dv in -PEAK_WINDOW..=PEAK_WINDOW {
                    let idx = shifted_index(w, h, u + du, v + dv);
                    if idx != shifted_index(w, h, 0, 0) {
                        window.push(fp.magnitude[idx]);
                    }
                }
            }
            let median = median_of(&mut window);
            if m <= threshold_ratio * median {
                continue;
            }
            peaks.push(Peak {
                u,
                v,
                strength: m,
                ratio: if median > 0.0 { m / median } else { f64::INFINITY },
            });
        }
    }
    peaks.sort_by(|a, b| {
        b.strength
            .total_cmp(&a.strength)
            .then(a.u.cmp(&b.u))
            .then(a.v.cmp(&b.v))
    });
    peaks
}

fn median_of(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_unstable_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

/// Pearson correlation of fingerprint bins; `0` when either side is constant.
pub fn similarity(a: &Fingerprint, b: &Fingerprint) -> Result<f64> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::invalid(format!(
            "fingerprint dimensions differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let n = a.bins.len() as f64;
    let mean_a = a.bins.iter().sum::<f64>() / n;
    let mean_b = b.bins.iter().sum::<f64>() / n;
    let (mut cov, mut var_a, mut var_b) = (0.0, 0.0, 0.0);
    for (x, y) in a.bins.iter().zip(&b.bins) {
        let (dx, dy) = (x - mean_a, y - mean_b);
        cov += dx * dy;
        var_a += dx * dx;
        var_b += dy * dy;
    }
    if var_a == 0.0 || var_b == 0.0 {
        return Ok(0.0);
    }
    Ok((cov / (var_a.sqrt() * var_b.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerprintSidecar {
    pub width: usize,
    pub height: usize,
    pub n_samples: usize,
    pub denoiser: DenoiserSpec,
    /// `max log(1+|F|)`, the normalization constant of the bins.
    pub log_max: f64,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes the fingerprint as a 16-bit P5 PGM plus a `.json` sidecar.
pub fn export_fingerprint(fp: &Fingerprint, denoiser: DenoiserSpec, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let samples: Vec<u16> = fp
        .bins
        .iter()
        .map(|b| (b.clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, pgm::encode_pgm16(fp.width, fp.height, &samples)).map_err(|e| Error::io(path, e))?;
    let sidecar = FingerprintSidecar {
        width: fp.width,
        height: fp.height,
        n_samples: fp.n_samples,
        denoiser,
        log_max: fp.log_max,
    };
    let side = sidecar_path(path);
    let json = serde_json::to_vec_pretty(&sidecar)?;
    fs::write(&side, json).map_err(|e| Error::io(&side, e))
}

/// Reads an exported fingerprint. Raw magnitudes are reconstructed from the
/// quantized bins and the sidecar's `log_max`.
pub fn import_fingerprint(path: impl AsRef<Path>) -> Result<(Fingerprint, FingerprintSidecar)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (width, height, samples) = pgm::decode_pgm16(&bytes)?;
    let side = sidecar_path(path);
    let side_bytes = fs::read(&side).map_err(|e| Error::io(&side, e))?;
    let sidecar: FingerprintSidecar = serde_json::from_slice(&side_bytes)?;
    let bins: Vec<f64> = samples.iter().map(|&s| s as f64 / 65535.0).collect();
    let magnitude = bins.iter().map(|b| (b * sidecar.log_max).exp_m1()).collect();
    Ok((
        Fingerprint {
            width,
            height,
            bins,
            magnitude,
            log_max: sidecar.log_max,
            n_samples: sidecar.n_samples,
        },
        sidecar,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::num_complex::Complex;
    use std::f64::consts::PI;

    fn cosine_data(n: usize, u: i64, v: i64, amp: f64) -> Vec<f64> {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                data[i * n + j] = amp * (2.0 * PI * (u as f64 * i as f64 + v as f64 * j as f64) / n as f64).cos();
            }
        }
        data
    }

    /// Direct evaluation of one DFT bin.
    fn dft_bin(n: usize, data: &[f64], u: i64, v: i64) -> f64 {
        let mut acc = Complex::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                let phase = -2.0 * PI * (u as f64 * i as f64 + v as f64 * j as f64) / n as f64;
                acc += Complex::from_polar(data[i * n + j], phase);
            }
        }
        acc.norm()
    }

    #[test]
    fn denoiser_spec_parsing() {
        assert_eq!("median3".parse::<DenoiserSpec>().unwrap(), DenoiserSpec::Median3);
        assert_eq!(
            "gaussian:1.5".parse::<DenoiserSpec>().unwrap(),
            DenoiserSpec::Gaussian { sigma: 1.5 }
        );
        assert!("gaussian:0".parse::<DenoiserSpec>().is_err());
        assert!("gaussian:nan".parse::<DenoiserSpec>().is_err());
        assert!("bilateral".parse::<DenoiserSpec>().is_err());
        let s = DenoiserSpec::default().to_string();
        assert_eq!(s, "gaussian:1.0");
        assert_eq!(s.parse::<DenoiserSpec>().unwrap(), DenoiserSpec::default());
    }

    #[test]
    fn identity_and_constant_preserved() {
        let f = Frame::from_fn(70, 64, |r, c| ((r * 3 + c) % 17) as f64 / 16.0).unwrap();
        assert_eq!(denoise(&f, DenoiserSpec::Identity).unwrap(), f);
        assert!(residual(&f, DenoiserSpec::Identity).unwrap().data().iter().all(|v| *v == 0.0));

        let c = Frame::constant(64, 64, 0.37).unwrap();
        for spec in [DenoiserSpec::Median3, DenoiserSpec::default(), DenoiserSpec::Gaussian { sigma: 2.5 }] {
            let d = denoise(&c, spec).unwrap();
            assert!(d.data().iter().all(|v| (v - 0.37).abs() < 1e-12), "{spec}");
            assert!(residual(&c, spec).unwrap().data().iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn median_removes_impulse() {
        let f = Frame::from_fn(64, 64, |r, c| if (r, c) == (20, 30) { 1.0 } else { 0.0 }).unwrap();
        let d = denoise(&f, DenoiserSpec::Median3).unwrap();
        assert_eq!(d.get(20, 30), 0.0);
        assert!(d.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn median_edge_replication() {
        // A corner impulse is replicated into 4 of the 9 window slots.
        let f = Frame::from_fn(64, 64, |r, c| if (r, c) == (0, 0) { 1.0 } else { 0.0 }).unwrap();
        assert_eq!(denoise(&f, DenoiserSpec::Median3).unwrap().get(0, 0), 0.0);
    }

    #[test]
    fn gaussian_kernel_truncation() {
        let k = gaussian_kernel(1.0);
        assert_eq!(k.len(), 7);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(gaussian_kernel(2.0).len(), 13);
    }

    #[test]
    fn residual_concentrates_at_trace_frequency() {
        let n = 64;
        let trace = cosine_data(n, 8, 4, 0.05);
        let f = Frame::from_fn(n, n, |i, j| {
            0.5 + 0.3 * (2.0 * PI * i as f64 / n as f64).cos() + trace[i * n + j]
        })
        .unwrap();
        let r = residual(&f, DenoiserSpec::default()).unwrap();
        // Brute-force search over all bins with the direct DFT.
        let mut best = (0, 0, 0.0);
        for u in -(n as i64 / 2)..(n as i64 / 2) {
            for v in 0..(n as i64 / 2) {
                if (u, v) == (0, 0) {
                    continue;
                }
                let m = dft_bin(n, r.data(), u, v);
                if m > best.2 {
                    best = (u, v, m);
                }
            }
        }
        assert_eq!((best.0, best.1), (8, 4));
    }

    #[test]
    fn aggregate_cases() {
        let mk = |v: f64| Residual::new(64, 64, vec![v; 64 * 64]).unwrap();
        let a = aggregate(&[mk(0.1)]).unwrap();
        assert_eq!(a.n_samples(), 1);
        assert!(a.data().iter().all(|v| *v == 0.1));

        let mean = aggregate(&[mk(0.1), mk(0.2), mk(0.6)]).unwrap();
        assert_eq!(mean.n_samples(), 3);
        assert!(mean.data().iter().all(|v| (v - 0.3).abs() < 1e-15));

        let r = Residual::new(64, 64, cosine_data(64, 3, 1, 0.2)).unwrap();
        let neg = Residual::new(64, 64, r.data().iter().map(|v| -v).collect()).unwrap();
        assert!(aggregate(&[r, neg]).unwrap().data().iter().all(|v| *v == 0.0));

        assert!(aggregate(&[]).is_err());
        let other = Residual::new(64, 65, vec![0.0; 64 * 65]).unwrap();
        assert!(aggregate(&[mk(0.0), other]).is_err());
    }

    #[test]
    fn zero_and_impulse_fingerprints() {
        let zero = AggregateResidual::from_data(64, 64, vec![0.0; 4096], 1).unwrap();
        assert!(fingerprint(&zero).unwrap().bins().iter().all(|b| *b == 0.0));

        let mut data = vec![0.0; 256 * 256];
        data[0] = 1.0;
        let fp = fingerprint(&AggregateResidual::from_data(256, 256, data, 1).unwrap()).unwrap();
        assert!(fp.magnitude().iter().all(|m| (m - 1.0).abs() < 1e-12));
        assert!(fp.bins().iter().all(|b| (b - 1.0).abs() < 1e-12));
        assert!(peak_detect(&fp, DEFAULT_PEAK_RATIO).is_empty());

        let bad = AggregateResidual::from_data(64, 64, vec![f64::NAN; 4096], 1).unwrap();
        assert!(fingerprint(&bad).is_err());
    }

    #[test]
    fn cosine_fingerprint_peaks_match_direct_dft() {
        let n = 256;
        let data = cosine_data(n, 8, 0, 0.1);
        // Oracle: the direct DFT puts a*n^2/2 at (+-8, 0) and ~0 elsewhere.
        let expected_peak = dft_bin(n, &data, 8, 0);
        assert!((expected_peak - 0.1 * 65536.0 / 2.0).abs() < 1e-6);
        assert!(dft_bin(n, &data, 9, 0) < 1e-6);

        let fp = fingerprint(&AggregateResidual::from_data(n, n, data, 1).unwrap()).unwrap();
        assert!((fp.magnitude_at(8, 0) - expected_peak).abs() < 1e-6);
        assert!((fp.magnitude_at(-8, 0) - expected_peak).abs() < 1e-6);
        let mut top = fp.top_bins(2);
        top.sort();
        assert_eq!(top, vec![(-8, 0), (8, 0)]);
        // shifted coordinates: row = center +- 8, col = center
        assert_eq!(fp.bins()[(128 + 8) * n + 128], 1.0);
        assert_eq!(fp.bins()[(128 - 8) * n + 128], 1.0);
    }

    #[test]
    fn peak_detect_orders_by_strength() {
        let n = 256;
        let mut data = cosine_data(n, 8, 0, 0.05);
        for (d, t) in data.iter_mut().zip(cosine_data(n, 20, -30, 0.1)) {
            *d += t;
        }
        // Background so that the median is non-zero.
        let mut state = 12345u64;
        for d in data.iter_mut() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            *d += 0.01 * (((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5);
        }
        let fp = fingerprint(&AggregateResidual::from_data(n, n, data, 1).unwrap()).unwrap();
        let peaks = peak_detect(&fp, DEFAULT_PEAK_RATIO);
        let coords: Vec<(i64, i64)> = peaks.iter().map(|p| (p.u, p.v)).collect();
        assert_eq!(coords.len(), 4, "{coords:?}");
        let strong: Vec<_> = coords[..2].to_vec();
        assert!(strong.contains(&(20, -30)) && strong.contains(&(-20, 30)));
        assert!(coords[2..].contains(&(8, 0)) && coords[2..].contains(&(-8, 0)));
    }

    #[test]
    fn flat_fingerprint_has_no_peaks() {
        let mut data = vec![0.0; 64 * 64];
        data[0] = 0.5;
        let fp = fingerprint(&AggregateResidual::from_data(64, 64, data, 1).unwrap()).unwrap();
        assert!(peak_detect(&fp, 5.0).is_empty());
    }

    #[test]
    fn similarity_rules() {
        let n = 64;
        let fp = |u, v| {
            let mut d = cosine_data(n, u, v, 0.1);
            d[5] += 0.3;
            fingerprint(&AggregateResidual::from_data(n, n, d, 1).unwrap()).unwrap()
        };
        let a = fp(3, 4);
        assert!((similarity(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let constant = fingerprint(&AggregateResidual::from_data(n, n, vec![0.0; n * n], 1).unwrap()).unwrap();
        assert_eq!(similarity(&constant, &a).unwrap(), 0.0);
        let other = fingerprint(&AggregateResidual::from_data(n, 65, vec![0.0; n * 65], 1).unwrap()).unwrap();
        assert!(similarity(&a, &other).is_err());
    }

    #[test]
    fn export_roundtrip_and_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let zero = fingerprint(&AggregateResidual::from_data(64, 64, vec![0.0; 4096], 3).unwrap()).unwrap();
        let p = dir.path().join("zero.pgm");
        export_fingerprint(&zero, DenoiserSpec::default(), &p).unwrap();
        let bytes = fs::read(&p).unwrap();
        let header = pgm::parse_header(&bytes).unwrap();
        assert_eq!(bytes.len() - header.data_offset, 2 * 64 * 64);
        assert!(bytes[header.data_offset..].iter().all(|b| *b == 0));

        let fp = fingerprint(&AggregateResidual::from_data(64, 64, cosine_data(64, 5, 7, 0.2), 9).unwrap()).unwrap();
        let p = dir.path().join("cos.pgm");
        export_fingerprint(&fp, DenoiserSpec::Median3, &p).unwrap();
        let bytes = fs::read(&p).unwrap();
        let (_, _, samples) = pgm::decode_pgm16(&bytes).unwrap();
        assert_eq!(samples[shifted_index(64, 64, 5, 7)], 65535);

        let (back, sidecar) = import_fingerprint(&p).unwrap();
        assert_eq!(sidecar.n_samples, 9);
        assert_eq!(sidecar.denoiser, DenoiserSpec::Median3);
        for (a, b) in fp.bins().iter().zip(back.bins()) {
            assert!((a - b).abs() <= 1.0 / 65535.0);
        }
    }
}
