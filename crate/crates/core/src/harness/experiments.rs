use crate::compression::CompressionLevel;
use crate::corpus::{load_entry_frame, DatasetManifest, Family, Label, ManifestEntry, Split, REAL_SOURCE};
use crate::detector::{argmax, fine_tune_cached, DetectorModel, Task};
use crate::error::{Error, Result};
use crate::metrics::{ovr_auc, rer, Confusion, Curve, MetricsReport, RerEntry, SourceAuc, TableRow};
use crate::residual::{fingerprint, peak_detect, residual, ResidualAccumulator, DEFAULT_PEAK_RATIO};
use crate::videolevel::{sweep_n, LoadedClip, SweepPoint};

use super::{ExperimentOutput, Harness};

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn curve(series: &str, points: Vec<(f64, f64)>) -> Curve {
    Curve {
        series: series.to_string(),
        points,
    }
}

fn col(name: impl Into<String>, auc: f64) -> SourceAuc {
    SourceAuc {
        source_id: name.into(),
        auc,
    }
}

/// RER against a reference AUC, or 0 with a warning when the reference is perfect.
fn rer_or_warn(report: &mut MetricsReport, what: &str, auc_n: f64, auc_r: f64) -> Result<f64> {
    if auc_r >= 1.0 {
        report.warnings.push(format!("{what}: reference AUC is 1, RER undefined (recorded as 0)"));
        return Ok(0.0);
    }
    rer(auc_n, auc_r)
}

impl Harness {
    fn require_family(&self, family: Family) -> Result<Vec<String>> {
        let ids = self.family_ids(family);
        if ids.is_empty() {
            let name = match family {
                Family::ImageLike => "image-like",
                Family::VideoLike => "video-like",
            };
            return Err(Error::invalid(format!("corpus has no {name} profiles")));
        }
        Ok(ids)
    }

    pub(super) fn cross_domain(&self) -> Result<ExperimentOutput> {
        let image = self.require_family(Family::ImageLike)?;
        let video = self.require_family(Family::VideoLike)?;
        let mut report = MetricsReport::new("cross-domain");

        let plain = self.model(Task::Detect, &image, &[])?;
        let robust = self.model(Task::Detect, &image, &self.config.image_robust_crfs)?;
        let reference = self.model(Task::Detect, &video, &[])?;

        let in_domain = self.pooled_auc(&plain, &image, None)?;
        let cross = self.pooled_auc(&plain, &video, None)?;
        let robust_in = self.pooled_auc(&robust, &image, None)?;
        let robust_cross = self.pooled_auc(&robust, &video, None)?;

        report.per_source = self.per_source_auc(&plain, &video, None)?;
        report.overall_auc = Some(cross);
        report.tables = vec![
            TableRow::new("Image-trained", report.per_source.clone()),
            TableRow::new("Image-trained, robust", self.per_source_auc(&robust, &video, None)?),
            TableRow::new("Video-trained", self.per_source_auc(&reference, &video, None)?),
        ];
        let v = &mut report.values;
        v.insert("in_domain_auc".into(), in_domain);
        v.insert("cross_domain_auc".into(), cross);
        v.insert("gap".into(), in_domain - cross);
        v.insert("robust_in_domain_auc".into(), robust_in);
        v.insert("robust_cross_domain_auc".into(), robust_cross);
        v.insert("robust_delta".into(), robust_cross - cross);
        Ok(ExperimentOutput {
            report,
            fingerprints: Vec::new(),
        })
    }

    pub(super) fn detection(&self) -> Result<ExperimentOutput> {
        let video = self.require_family(Family::VideoLike)?;
        let mut report = MetricsReport::new("detection");
        let model = self.model(Task::Detect, &video, &[])?;
        report.per_source = self.per_source_auc(&model, &video, None)?;
        let average = mean(&report.per_source.iter().map(|s| s.auc).collect::<Vec<_>>());
        report.overall_auc = Some(self.pooled_auc(&model, &video, None)?);

        let zero = DetectorModel::zeros(
            model.classes.clone(),
            model.denoiser,
            crate::detector::FeatureConfig::default(),
            model.seed,
        )?;
        let zero_auc = self.pooled_auc(&zero, &video, None)?;

        let synth: Vec<&ManifestEntry> = video.iter().flat_map(|s| self.test_entries(s)).collect();
        let preds = self.predict(&model, &synth, None)?;
        let synth_class = model.classes.len() - 1;
        let argmax_rate =
            preds.iter().filter(|p| argmax(&p.probabilities) == synth_class).count() as f64 / preds.len() as f64;

        let v = &mut report.values;
        v.insert("average_auc".into(), average);
        v.insert("zero_model_auc".into(), zero_auc);
        v.insert("synthetic_argmax_rate".into(), argmax_rate);

        let mut fingerprints = Vec::new();
        for source in std::iter::once(REAL_SOURCE.to_string()).chain(self.manifest.profiles.iter().map(|p| p.id.clone())) {
            let fp = self.source_fingerprint(&source, Split::Test)?;
            let peaks = peak_detect(&fp, DEFAULT_PEAK_RATIO);
            report.values.insert(format!("fingerprint_peaks.{source}"), peaks.len() as f64);
            fingerprints.push((source, fp));
        }
        Ok(ExperimentOutput { report, fingerprints })
    }

    /// Fingerprint of the aggregate residual of one source's frames in `split`.
    pub fn source_fingerprint(&self, source: &str, split: Split) -> Result<crate::residual::Fingerprint> {
        let entries: Vec<&ManifestEntry> = self
            .manifest
            .entries_in(split)
            .filter(|e| e.source_id == source && e.crf.is_none())
            .collect();
        if entries.is_empty() {
            return Err(Error::invalid(format!("source {source:?} has no {split:?} frames")));
        }
        let mut acc = ResidualAccumulator::new();
        for e in entries {
            let frame = load_entry_frame(&self.root, &e.path, None)?;
            acc.push(&residual(&frame, self.config.denoiser)?)?;
        }
        fingerprint(&acc.finish()?)
    }

    pub(super) fn attribution(&self) -> Result<ExperimentOutput> {
        let all: Vec<String> = self.manifest.profiles.iter().map(|p| p.id.clone()).collect();
        let mut report = MetricsReport::new("attribution");
        let model = self.model(Task::Attribute, &all, &[])?;
        let entries: Vec<&ManifestEntry> = std::iter::once(REAL_SOURCE.to_string())
            .chain(all.iter().cloned())
            .flat_map(|s| self.test_entries(&s))
            .collect();
        let preds = self.predict(&model, &entries, None)?;
        let ppf = self.config.train.patches_per_frame;
        let labels: Vec<usize> = entries
            .iter()
            .flat_map(|e| {
                let c = Task::Attribute.class_of(&model.classes, e).expect("class of a training source");
                std::iter::repeat_n(c, ppf)
            })
            .collect();
        let probs: Vec<Vec<f64>> = preds.iter().map(|p| p.probabilities.clone()).collect();
        let ovr = ovr_auc(&model.classes, &probs, &labels)?;
        report.per_source = ovr.per_class.iter().map(|(c, a)| col(c.clone(), *a)).collect();
        report.overall_auc = Some(ovr.macro_auc);
        let predicted: Vec<usize> = probs.iter().map(|p| argmax(p)).collect();
        let correct = predicted.iter().zip(&labels).filter(|(p, l)| p == l).count();
        report.confusion = Some(Confusion::from_predictions(&model.classes, &labels, &predicted));
        let real_auc = ovr
            .per_class
            .iter()
            .find(|(c, _)| c == REAL_SOURCE)
            .map(|(_, a)| *a)
            .ok_or_else(|| Error::Internal("real class missing from attribution".into()))?;
        let v = &mut report.values;
        v.insert("macro_ovr_auc".into(), ovr.macro_auc);
        v.insert("real_class_auc".into(), real_auc);
        v.insert("n_classes".into(), model.classes.len() as f64);
        v.insert("accuracy".into(), correct as f64 / labels.len() as f64);
        Ok(ExperimentOutput {
            report,
            fingerprints: Vec::new(),
        })
    }

    pub(super) fn compression(&self) -> Result<ExperimentOutput> {
        let video = self.require_family(Family::VideoLike)?;
        let mut report = MetricsReport::new("compression");
        let plain = self.model(Task::Detect, &video, &[])?;
        let robust = self.model(Task::Detect, &video, &self.config.compression_crfs)?;
        let mut plain_pts = Vec::new();
        let mut robust_pts = Vec::new();
        let mut plain_cols = Vec::new();
        let mut robust_cols = Vec::new();
        for &crf in &self.config.compression_crfs {
            let level = Some(CompressionLevel::new(crf)?);
            let p = self.pooled_auc(&plain, &video, level)?;
            let r = self.pooled_auc(&robust, &video, level)?;
            plain_pts.push((crf as f64, p));
            robust_pts.push((crf as f64, r));
            plain_cols.push(col(format!("CRF {crf}"), p));
            robust_cols.push(col(format!("CRF {crf}"), r));
            report.values.insert(format!("plain_auc.crf{crf:02}"), p);
            report.values.insert(format!("robust_auc.crf{crf:02}"), r);
        }
        report.values.insert("plain_auc.original".into(), self.pooled_auc(&plain, &video, None)?);
        report.values.insert("robust_auc.original".into(), self.pooled_auc(&robust, &video, None)?);
        report.values.insert(
            "robust_auc.min".into(),
            robust_pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min),
        );
        report.tables = vec![TableRow::new("Plain", plain_cols), TableRow::new("Robust", robust_cols)];
        report.curves = vec![curve("plain", plain_pts), curve("robust", robust_pts)];
        Ok(ExperimentOutput {
            report,
            fingerprints: Vec::new(),
        })
    }

    /// Test-split clips of `frames_per_clip` consecutive frames per source.
    pub fn test_clips(&self, sources: &[String], crf: Option<CompressionLevel>) -> Result<Vec<LoadedClip>> {
        let mut clips = Vec::new();
        for source in std::iter::once(REAL_SOURCE.to_string()).chain(sources.iter().cloned()) {
            let mut entries = self.test_entries(&source);
            entries.sort_by(|a, b| a.path.cmp(&b.path));
            let label = entries.first().map(|e| e.label).unwrap_or(Label::Real);
            let k = self.config.frames_per_clip;
            let chunks: Vec<&[&ManifestEntry]> = if entries.len() < k {
                vec![&entries[..]]
            } else {
                entries.chunks_exact(k).collect()
            };
            for chunk in chunks.into_iter().filter(|c| !c.is_empty()) {
                let frames = chunk
                    .iter()
                    .map(|e| load_entry_frame(&self.root, &e.path, crf))
                    .collect::<Result<Vec<_>>>()?;
                clips.push(LoadedClip {
                    source_id: source.clone(),
                    label,
                    frames,
                });
            }
        }
        Ok(clips)
    }

    pub(super) fn video_level(&self) -> Result<ExperimentOutput> {
        let video = self.require_family(Family::VideoLike)?;
        let mut report = MetricsReport::new("video-level");
        let plain = self.model(Task::Detect, &video, &[])?;
        let robust = self.model(Task::Detect, &video, &self.config.compression_crfs)?;
        let level = CompressionLevel::new(self.config.video_crf)?;
        let seed = self.eval_seed();
        let tag = format!("crf{:02}", level.crf());
        let runs: [(String, &DetectorModel, Option<CompressionLevel>); 2] =
            [("plain".to_string(), &plain, None), (tag, &robust, Some(level))];
        for (name, model, crf) in runs {
            let clips = self.test_clips(&video, crf)?;
            let sweep: Vec<SweepPoint> = sweep_n(model, &clips, &self.config.n_values, seed)?;
            let base = sweep[0].auc;
            let mut auc_pts = Vec::new();
            let mut rer_pts = Vec::new();
            let mut cols = Vec::new();
            for p in &sweep {
                let r = rer_or_warn(&mut report, &format!("{name} N={}", p.n), p.auc, base)?;
                auc_pts.push((p.n as f64, p.auc));
                rer_pts.push((p.n as f64, r));
                cols.push(col(format!("N={}", p.n), p.auc));
                report.values.insert(format!("auc_{name}.n{:02}", p.n), p.auc);
                report.values.insert(format!("rer_{name}.n{:02}", p.n), r);
                if p.n != sweep[0].n && base < 1.0 {
                    report
                        .rer
                        .push(RerEntry::new(format!("{name} N={} vs N={}", p.n, sweep[0].n), p.auc, base)?);
                }
            }
            report.values.insert(format!("clips_{name}"), clips.len() as f64);
            report.tables.push(TableRow::new(name.clone(), cols));
            report.curves.push(curve(&format!("auc_{name}"), auc_pts));
            report.curves.push(curve(&format!("rer_{name}"), rer_pts));
        }
        Ok(ExperimentOutput {
            report,
            fingerprints: Vec::new(),
        })
    }

    /// First `k` train frames of `source` (by path) as a few-shot manifest,
    /// paired with the first `k` real train frames.
    fn fewshot_manifest(&self, source: &str, k: usize) -> Result<DatasetManifest> {
        let pick = |s: &str| -> Vec<ManifestEntry> {
            let mut e: Vec<ManifestEntry> = self
                .manifest
                .entries_in(Split::Train)
                .filter(|e| e.source_id == s && e.crf.is_none())
                .cloned()
                .collect();
            e.sort_by(|a, b| a.path.cmp(&b.path));
            e.truncate(k);
            e
        };
        let held = pick(source);
        if held.is_empty() {
            return Err(Error::invalid(format!("source {source:?} has no train frames for few-shot tuning")));
        }
        let mut entries = pick(REAL_SOURCE);
        entries.extend(held);
        Ok(DatasetManifest {
            seed: self.manifest.seed,
            profiles: self.manifest.profiles.iter().filter(|p| p.id == source).cloned().collect(),
            entries,
        })
    }

    pub(super) fn transfer(&self) -> Result<ExperimentOutput> {
        let video = self.require_family(Family::VideoLike)?;
        if video.len() < 2 {
            return Err(Error::invalid("transfer needs at least two video-like profiles"));
        }
        let mut report = MetricsReport::new("transfer");
        let mut seen_cols = Vec::new();
        let mut zero_cols = Vec::new();
        let mut few_cols = Vec::new();
        for held in &video {
            let seen: Vec<String> = video.iter().filter(|s| *s != held).cloned().collect();
            let model = self.model(Task::Detect, &seen, &[])?;
            let seen_auc = mean(&self.per_source_auc(&model, &seen, None)?.iter().map(|s| s.auc).collect::<Vec<_>>());
            let zero_shot = self.per_source_auc(&model, std::slice::from_ref(held), None)?[0].auc;
            let fewshot = self.fewshot_manifest(held, self.config.fewshot_frames)?;
            let tuned = fine_tune_cached(&model, &fewshot, &self.root, &self.config.train, &self.cache)?;
            let few = self.per_source_auc(&tuned, std::slice::from_ref(held), None)?[0].auc;
            let fold_rer = rer_or_warn(&mut report, &format!("few-shot {held}"), few, zero_shot)?;
            if zero_shot < 1.0 {
                report.rer.push(RerEntry::new(held.clone(), few, zero_shot)?);
            }
            seen_cols.push(col(held.clone(), seen_auc));
            zero_cols.push(col(held.clone(), zero_shot));
            few_cols.push(col(held.clone(), few));
            let v = &mut report.values;
            v.insert(format!("seen_auc.{held}"), seen_auc);
            v.insert(format!("heldout_auc.{held}"), zero_shot);
            v.insert(format!("fewshot_auc.{held}"), few);
            v.insert(format!("fewshot_rer.{held}"), fold_rer);
        }
        let avg = |c: &[SourceAuc]| mean(&c.iter().map(|s| s.auc).collect::<Vec<_>>());
        let (seen_avg, zero_avg, few_avg) = (avg(&seen_cols), avg(&zero_cols), avg(&few_cols));
        let avg_rer = rer_or_warn(&mut report, "few-shot average", few_avg, zero_avg)?;
        let v = &mut report.values;
        v.insert("seen_auc_avg".into(), seen_avg);
        v.insert("heldout_auc_avg".into(), zero_avg);
        v.insert("fewshot_auc_avg".into(), few_avg);
        v.insert("fewshot_rer_avg".into(), avg_rer);
        v.insert("fewshot_frames".into(), self.config.fewshot_frames as f64);
        report.per_source = zero_cols.clone();
        report.overall_auc = Some(zero_avg);
        report.tables = vec![
            TableRow::new("Seen sources", seen_cols),
            TableRow::new("Zero-shot", zero_cols),
            TableRow::new("Few-shot", few_cols),
        ];
        Ok(ExperimentOutput {
            report,
            fingerprints: Vec::new(),
        })
    }
}
