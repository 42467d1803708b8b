//! ROC/AUC, relative error reduction, one-vs-rest attribution AUC and report
//! assembly.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub score: f64,
    pub positive: bool,
}

impl ScoredSample {
    pub fn new(score: f64, positive: bool) -> Self {
        ScoredSample { score, positive }
    }
}

fn check_samples(samples: &[ScoredSample]) -> Result<(usize, usize)> {
    if let Some(s) = samples.iter().find(|s| !s.score.is_finite()) {
        return Err(Error::invalid(format!("non-finite score {}", s.score)));
    }
    let pos = samples.iter().filter(|s| s.positive).count();
    let neg = samples.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid(format!(
            "AUC needs both classes (got {pos} positive, {neg} negative)"
        )));
    }
    Ok((pos, neg))
}

/// Mann–Whitney AUC with half credit for ties, via midranks.
pub fn auc(samples: &[ScoredSample]) -> Result<f64> {
    let (pos, neg) = check_samples(samples)?;
    let mut sorted: Vec<&ScoredSample> = samples.iter().collect();
    sorted.sort_by(|a, b| a.score.total_cmp(&b.score));

    // Sum of (number of negatives strictly below) + 0.5 * (negatives tied), per positive.
    let mut credit = 0.0;
    let mut neg_below = 0usize;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        let (mut p_tie, mut n_tie) = (0usize, 0usize);
        while j < sorted.len() && sorted[j].score == sorted[i].score {
            if sorted[j].positive {
                p_tie += 1;
            } else {
                n_tie += 1;
            }
            j += 1;
        }
        credit += p_tie as f64 * (neg_below as f64 + 0.5 * n_tie as f64);
        neg_below += n_tie;
        i = j;
    }
    Ok(credit / (pos as f64 * neg as f64))
}

/// ROC points at every distinct threshold, from `(0,0)` to `(1,1)`.
pub fn roc_points(samples: &[ScoredSample]) -> Result<Vec<(f64, f64)>> {
    let (pos, neg) = check_samples(samples)?;
    let mut sorted: Vec<&ScoredSample> = samples.iter().collect();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let threshold = sorted[i].score;
        while i < sorted.len() && sorted[i].score == threshold {
            if sorted[i].positive {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(points)
}

/// Trapezoidal area under a piecewise-linear curve.
pub fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) * 0.5)
        .sum()
}

/// Relative error reduction in percent: `100 (auc_n − auc_r) / (1 − auc_r)`.
pub fn rer(auc_n: f64, auc_r: f64) -> Result<f64> {
    for (name, v) in [("auc_n", auc_n), ("auc_r", auc_r)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::invalid(format!("{name} = {v} is outside [0,1]")));
        }
    }
    if auc_r >= 1.0 {
        return Err(Error::invalid("RER is undefined for a reference AUC of 1"));
    }
    Ok(100.0 * (auc_n - auc_r) / (1.0 - auc_r))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvrResult {
    /// `(class, auc)` for every class present in the labels, in class order.
    pub per_class: Vec<(String, f64)>,
    pub macro_auc: f64,
    /// Classes skipped because no sample carried them.
    pub skipped: Vec<String>,
}

/// One-vs-rest AUC per class, scored by that class's probability, with an
/// unweighted macro average.
pub fn ovr_auc(classes: &[String], probs: &[Vec<f64>], labels: &[usize]) -> Result<OvrResult> {
    if probs.len() != labels.len() {
        return Err(Error::invalid("probability rows and labels differ in length"));
    }
    if let Some(row) = probs.iter().find(|r| r.len() != classes.len()) {
        return Err(Error::invalid(format!(
            "probability row has {} entries for {} classes",
            row.len(),
            classes.len()
        )));
    }
    let mut per_class = Vec::new();
    let mut skipped = Vec::new();
    for (c, name) in classes.iter().enumerate() {
        let present = labels.iter().filter(|&&l| l == c).count();
        if present == 0 || present == labels.len() {
            skipped.push(name.clone());
            continue;
        }
        let samples: Vec<ScoredSample> = probs
            .iter()
            .zip(labels)
            .map(|(p, &l)| ScoredSample::new(p[c], l == c))
            .collect();
        per_class.push((name.clone(), auc(&samples)?));
    }
    if per_class.len() < 2 {
        return Err(Error::invalid("one-vs-rest AUC needs at least two classes present"));
    }
    let macro_auc = per_class.iter().map(|(_, a)| a).sum::<f64>() / per_class.len() as f64;
    Ok(OvrResult {
        per_class,
        macro_auc,
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceAuc {
    pub source_id: String,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerEntry {
    pub label: String,
    pub auc_r: f64,
    pub auc_n: f64,
    pub rer: f64,
}

impl RerEntry {
    pub fn new(label: impl Into<String>, auc_n: f64, auc_r: f64) -> Result<Self> {
        Ok(RerEntry {
            label: label.into(),
            auc_r,
            auc_n,
            rer: rer(auc_n, auc_r)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub classes: Vec<String>,
    /// `counts[true][predicted]`.
    pub counts: Vec<Vec<usize>>,
}

impl Confusion {
    pub fn from_predictions(classes: &[String], truth: &[usize], predicted: &[usize]) -> Self {
        let mut counts = vec![vec![0; classes.len()]; classes.len()];
        for (&t, &p) in truth.iter().zip(predicted) {
            counts[t][p] += 1;
        }
        Confusion {
            classes: classes.to_vec(),
            counts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub series: String,
    pub points: Vec<(f64, f64)>,
}

/// Results of one evaluation or experiment.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub name: String,
    pub per_source: Vec<SourceAuc>,
    pub overall_auc: Option<f64>,
    pub rer: Vec<RerEntry>,
    pub confusion: Option<Confusion>,
    /// Named scalar results (for example `cross_domain_auc`).
    pub values: BTreeMap<String, f64>,
    pub curves: Vec<Curve>,
    /// Extra per-row AUC tables, keyed by row label, in the same column order as `per_source`.
    pub tables: Vec<TableRow>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub row: String,
    pub columns: Vec<SourceAuc>,
    pub average: f64,
}

impl TableRow {
    pub fn new(row: impl Into<String>, columns: Vec<SourceAuc>) -> Self {
        let average = mean(columns.iter().map(|c| c.auc));
        TableRow {
            row: row.into(),
            columns,
            average,
        }
    }
}

pub(crate) fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

impl MetricsReport {
    pub fn new(name: impl Into<String>) -> Self {
        MetricsReport {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn value(&self, key: &str) -> Option<f64> {
        self.values.get(key).copied()
    }

    pub fn curve(&self, series: &str) -> Option<&Curve> {
        self.curves.iter().find(|c| c.series == series)
    }

    pub fn source_auc(&self, source: &str) -> Option<f64> {
        self.per_source.iter().find(|s| s.source_id == source).map(|s| s.auc)
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    /// Markdown table: one row per model/configuration, one column per source, then Average.
    pub fn to_markdown(&self) -> String {
        let mut out = format!("### {}\n\n", self.name);
        let mut rows: Vec<TableRow> = self.tables.clone();
        if rows.is_empty() && !self.per_source.is_empty() {
            rows.push(TableRow::new("AUC", self.per_source.clone()));
        }
        if let Some(first) = rows.first() {
            let _ = write!(out, "| |");
            for c in &first.columns {
                let _ = write!(out, " {} |", c.source_id);
            }
            out.push_str(" Average |\n|---|");
            for _ in &first.columns {
                out.push_str("---|");
            }
            out.push_str("---|\n");
            for r in &rows {
                let _ = write!(out, "| {} |", r.row);
                for c in &r.columns {
                    let _ = write!(out, " {:.3} |", c.auc);
                }
                let _ = writeln!(out, " {:.3} |", r.average);
            }
            out.push('\n');
        }
        if !self.rer.is_empty() {
            out.push_str("| | AUC_R | AUC_N | RER (%) |\n|---|---|---|---|\n");
            for e in &self.rer {
                let _ = writeln!(out, "| {} | {:.3} | {:.3} | {:.1} |", e.label, e.auc_r, e.auc_n, e.rer);
            }
            out.push('\n');
        }
        if !self.values.is_empty() {
            out.push_str("| quantity | value |\n|---|---|\n");
            for (k, v) in &self.values {
                let _ = writeln!(out, "| {k} | {v:.4} |");
            }
            out.push('\n');
        }
        for w in &self.warnings {
            let _ = writeln!(out, "> warning: {w}");
        }
        out
    }

    /// Curves as CSV with header `x,series,value`.
    pub fn curves_csv(&self) -> String {
        let mut out = String::from("x,series,value\n");
        for c in &self.curves {
            for (x, y) in &c.points {
                let _ = writeln!(out, "{x},{},{y}", c.series);
            }
        }
        out
    }
}
