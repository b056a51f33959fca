//! Evaluation: top-1 accuracy, binned expected calibration error,
//! pseudo-label precision/coverage, the uncertainty-vs-ECE series, and
//! penultimate-feature export.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::data::{Example, UnlabelledExample};
use crate::error::{Error, Result};
use crate::net::{self, ForwardMode, NetworkSpec};
use crate::tensor::{ParamSet, Tensor};
use crate::uncertainty::GateDecision;

/// One epoch's reported quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    /// Validation accuracy, percent.
    pub val_accuracy: f64,
    /// Target-domain accuracy, percent; present only when the target was
    /// evaluated for this epoch's checkpoint.
    pub target_accuracy: Option<f64>,
    /// Pseudo-label precision, percent; None iff nothing was selected.
    pub pl_precision: Option<f64>,
    /// Fraction of unlabelled examples selected, in [0, 1].
    pub pl_coverage: f64,
    /// Mean over batches of per-batch mean predictive variance.
    pub mean_uncertainty: f64,
    /// Mean over batches of per-batch calibration error, in [0, 1].
    pub ece: f64,
}

pub const METRICS_HEADER: &str =
    "epoch,val_acc,target_acc,pl_precision,pl_coverage,mean_uncertainty,ece";

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Write per-epoch records as CSV under [`METRICS_HEADER`]. Absent values
/// (no target evaluation, no pseudo-labels selected) become empty fields.
pub fn write_metrics_csv(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{METRICS_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{:.6},{},{},{:.6},{:.6},{:.6}",
            r.epoch,
            r.val_accuracy,
            fmt_opt(r.target_accuracy),
            fmt_opt(r.pl_precision),
            r.pl_coverage,
            r.mean_uncertainty,
            r.ece
        )?;
    }
    w.flush()?;
    Ok(())
}

/// 100 x correct / total.
pub fn top1_accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::EmptyInput("predictions"));
    }
    if predictions.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            tensor: "labels".into(),
            expected: format!("{} entries", predictions.len()),
            actual: format!("{} entries", labels.len()),
        });
    }
    let correct = predictions
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(100.0 * correct as f64 / predictions.len() as f64)
}

/// Dropout-free class probabilities for one feature row.
pub fn eval_probs(spec: &NetworkSpec, params: &ParamSet, features: &[f64]) -> Result<Vec<f64>> {
    Ok(net::forward_row(spec, params, features, None)?.probs)
}

/// Accuracy (percent) of Eval-mode predictions over labelled examples.
pub fn evaluate_accuracy(
    spec: &NetworkSpec,
    params: &ParamSet,
    examples: &[Example],
) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::EmptyInput("evaluation examples"));
    }
    let mut predictions = Vec::with_capacity(examples.len());
    let mut labels = Vec::with_capacity(examples.len());
    for e in examples {
        let label = e
            .label
            .ok_or_else(|| Error::invalid("examples", "evaluation requires labels"))?;
        let probs = eval_probs(spec, params, &e.features)?;
        predictions.push(net::argmax(&probs));
        labels.push(label);
    }
    top1_accuracy(&predictions, &labels)
}

/// Accuracy (percent) against hidden ground truth, over the examples that
/// carry it. None when no example does.
pub fn evaluate_accuracy_hidden(
    spec: &NetworkSpec,
    params: &ParamSet,
    examples: &[UnlabelledExample],
) -> Result<Option<f64>> {
    let mut predictions = Vec::new();
    let mut labels = Vec::new();
    for e in examples {
        if let Some(truth) = e.eval_ground_truth() {
            let probs = eval_probs(spec, params, &e.features)?;
            predictions.push(net::argmax(&probs));
            labels.push(truth);
        }
    }
    if predictions.is_empty() {
        return Ok(None);
    }
    Ok(Some(top1_accuracy(&predictions, &labels)?))
}

/// Per-bin calibration statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BinStat {
    pub count: usize,
    pub mean_confidence: f64,
    pub accuracy: f64,
}

/// M equal-width bins over (0, 1]. Bin m covers (m/M, (m+1)/M]; a
/// confidence exactly on an edge goes to the lower-indexed covering bin.
#[derive(Debug, Clone, PartialEq)]
pub struct EceBins {
    pub num_bins: usize,
    pub total: usize,
    pub bins: Vec<BinStat>,
}

impl EceBins {
    /// Sum over bins of (count / total) * |accuracy - mean confidence|.
    pub fn ece(&self) -> f64 {
        self.bins
            .iter()
            .filter(|b| b.count > 0)
            .map(|b| (b.count as f64 / self.total as f64) * (b.accuracy - b.mean_confidence).abs())
            .sum()
    }
}

/// Bin confidences in (0, 1] against correctness flags.
pub fn compute_bins(confidences: &[f64], correct: &[bool], num_bins: usize) -> Result<EceBins> {
    if num_bins == 0 {
        return Err(Error::invalid("num_bins", "need at least one bin"));
    }
    if confidences.is_empty() {
        return Err(Error::EmptyInput("confidences"));
    }
    if confidences.len() != correct.len() {
        return Err(Error::ShapeMismatch {
            tensor: "correctness flags".into(),
            expected: format!("{} entries", confidences.len()),
            actual: format!("{} entries", correct.len()),
        });
    }
    let m = num_bins;
    let mut counts = vec![0usize; m];
    let mut conf_sums = vec![0.0; m];
    let mut correct_counts = vec![0usize; m];
    for (&c, &ok) in confidences.iter().zip(correct) {
        if !(c > 0.0 && c <= 1.0) {
            return Err(Error::invalid(
                "confidence",
                format!("{c} outside (0, 1]"),
            ));
        }
        // Interval scan, lowest-indexed covering bin first.
        let mut bin = m - 1;
        for i in 0..m {
            let lo = i as f64 / m as f64;
            let hi = (i + 1) as f64 / m as f64;
            if c > lo && c <= hi {
                bin = i;
                break;
            }
        }
        counts[bin] += 1;
        conf_sums[bin] += c;
        if ok {
            correct_counts[bin] += 1;
        }
    }
    let bins = (0..m)
        .map(|i| BinStat {
            count: counts[i],
            mean_confidence: if counts[i] > 0 {
                conf_sums[i] / counts[i] as f64
            } else {
                0.0
            },
            accuracy: if counts[i] > 0 {
                correct_counts[i] as f64 / counts[i] as f64
            } else {
                0.0
            },
        })
        .collect();
    Ok(EceBins {
        num_bins: m,
        total: confidences.len(),
        bins,
    })
}

/// Expected calibration error with `num_bins` equal-width bins.
pub fn ece(confidences: &[f64], correct: &[bool], num_bins: usize) -> Result<f64> {
    Ok(compute_bins(confidences, correct, num_bins)?.ece())
}

/// Precision (percent, None when nothing selected) and coverage (fraction)
/// of gate decisions against ground truth. Decisions whose truth is unknown
/// count toward coverage but not precision.
pub fn pl_stats(
    decisions: &[GateDecision],
    truths: &[Option<usize>],
) -> Result<(Option<f64>, f64)> {
    if decisions.len() != truths.len() {
        return Err(Error::ShapeMismatch {
            tensor: "ground truths".into(),
            expected: format!("{} entries", decisions.len()),
            actual: format!("{} entries", truths.len()),
        });
    }
    if decisions.is_empty() {
        return Ok((None, 0.0));
    }
    let mut selected = 0usize;
    let mut selected_with_truth = 0usize;
    let mut correct = 0usize;
    for (d, t) in decisions.iter().zip(truths) {
        if !d.selected {
            continue;
        }
        selected += 1;
        if let Some(t) = t {
            selected_with_truth += 1;
            if d.pseudo_label == *t {
                correct += 1;
            }
        }
    }
    let coverage = selected as f64 / decisions.len() as f64;
    let precision = if selected_with_truth > 0 {
        Some(100.0 * correct as f64 / selected_with_truth as f64)
    } else {
        None
    };
    Ok((precision, coverage))
}

/// Per-epoch (mean uncertainty, mean calibration error) pairs, sorted by
/// uncertainty ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSeries {
    pub points: Vec<(f64, f64)>,
}

impl CalibrationSeries {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "mean_uncertainty,mean_ece")?;
        for (u, e) in &self.points {
            writeln!(w, "{u:.6},{e:.6}")?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reduce per-iteration batch uncertainties and batch calibration errors to
/// one point per epoch (the means over that epoch's iterations), then sort
/// the points by uncertainty.
pub fn uncertainty_ece_series(
    batch_uncertainties: &[f64],
    batch_eces: &[f64],
    iterations_per_epoch: usize,
) -> Result<CalibrationSeries> {
    if batch_uncertainties.is_empty() {
        return Err(Error::EmptyInput("batch uncertainties"));
    }
    if batch_uncertainties.len() != batch_eces.len() {
        return Err(Error::ShapeMismatch {
            tensor: "batch eces".into(),
            expected: format!("{} entries", batch_uncertainties.len()),
            actual: format!("{} entries", batch_eces.len()),
        });
    }
    if iterations_per_epoch == 0 || batch_uncertainties.len() % iterations_per_epoch != 0 {
        return Err(Error::invalid(
            "iterations_per_epoch",
            format!(
                "{} records do not divide into epochs of {iterations_per_epoch}",
                batch_uncertainties.len()
            ),
        ));
    }
    let mut points: Vec<(f64, f64)> = batch_uncertainties
        .chunks(iterations_per_epoch)
        .zip(batch_eces.chunks(iterations_per_epoch))
        .map(|(us, es)| {
            (
                us.iter().sum::<f64>() / us.len() as f64,
                es.iter().sum::<f64>() / es.len() as f64,
            )
        })
        .collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(CalibrationSeries { points })
}

/// Write Eval-mode penultimate features: rows
/// `example_id,domain,label,f0..f_{d-1}`, one per example, id = position.
pub fn feature_dump(
    spec: &NetworkSpec,
    params: &ParamSet,
    examples: &[Example],
    path: &Path,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "example_id,domain,label")?;
    for i in 0..spec.feature_dim() {
        write!(w, ",f{i}")?;
    }
    writeln!(w)?;
    for (id, e) in examples.iter().enumerate() {
        let x = Tensor::new(vec![1, e.features.len()], e.features.clone())?;
        let (_, features) = net::forward(spec, params, &x, ForwardMode::Eval)?;
        match e.label {
            Some(l) => write!(w, "{id},{},{l}", e.domain_id)?,
            None => write!(w, "{id},{},", e.domain_id)?,
        }
        for v in features.row(0) {
            write!(w, ",{v:.6}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}
