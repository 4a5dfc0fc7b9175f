//! Evaluation harness: window-level detection metrics, temporal-IoU cluster
//! tracking, repetition-count error and recognition accuracy, computed from a
//! report and a ground-truth file.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formats::GroundTruthRecord;
use crate::report::AnalyticsReport;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("ground truth references unknown trajectory ids: {0:?}")]
    UnknownIds(Vec<String>),
    #[error("ground truth is empty")]
    EmptyGroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    /// Fraction of windows whose smoothed label matches the ground truth.
    pub detection_accuracy: f64,
    /// False positives over actual-negative windows.
    pub detection_false_positive_rate: f64,
    /// True positives over predicted-positive windows.
    pub detection_precision: f64,
    pub windows_evaluated: usize,

    /// Fraction of ground-truth exercises matched by a predicted cluster at
    /// temporal IoU >= 0.5 (greedy one-to-one, descending IoU).
    pub cluster_tracking_rate: f64,
    /// Predicted clusters left unmatched, over predicted clusters.
    pub cluster_false_positive_rate: f64,
    pub ground_truth_exercises: usize,
    pub predicted_clusters: usize,
    pub matched_clusters: usize,

    /// Mean absolute repetition error over matched clusters with estimates.
    pub rep_mae: f64,
    /// Population standard deviation of the absolute repetition errors.
    pub rep_error_std: f64,
    pub rep_pairs: usize,

    /// Fraction of matched, labeled clusters recognized as the ground-truth
    /// class.
    pub recognition_accuracy: f64,
    pub recognition_pairs: usize,
}

const TRACKING_IOU_THRESHOLD: f64 = 0.5;

fn safe_div(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

fn interval_iou(a: (i64, i64), b: (i64, i64)) -> f64 {
    let overlap = (a.1.min(b.1) - a.0.max(b.0) + 1).max(0) as f64;
    let union = (a.1 - a.0 + 1).max(0) as f64 + (b.1 - b.0 + 1).max(0) as f64 - overlap;
    safe_div(overlap, union)
}

/// Computes every metric from a report and its ground truth.
///
/// Ground-truth ids must resolve against the report (accepted or rejected
/// trajectories). Cluster-level truth comes from region records when any
/// exist, otherwise from per-trajectory exercise records.
pub fn evaluate(
    report: &AnalyticsReport,
    ground_truth: &[GroundTruthRecord],
) -> Result<EvalMetrics, EvalError> {
    if ground_truth.is_empty() {
        return Err(EvalError::EmptyGroundTruth);
    }
    let known_ids: BTreeSet<&str> = report
        .trajectories
        .iter()
        .map(|t| t.id.as_str())
        .chain(report.ingestion.rejected.iter().map(|r| r.id.as_str()))
        .collect();
    let mut offenders: Vec<String> = ground_truth
        .iter()
        .filter_map(|r| r.id.as_deref())
        .filter(|id| !known_ids.contains(id))
        .map(|s| s.to_string())
        .collect();
    if !offenders.is_empty() {
        offenders.sort();
        offenders.dedup();
        return Err(EvalError::UnknownIds(offenders));
    }

    // Window-level detection metrics.
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for t in &report.trajectories {
        let intervals: Vec<(i64, i64)> = ground_truth
            .iter()
            .filter(|r| r.id.as_deref() == Some(t.id.as_str()) && r.is_exercise())
            .map(|r| (r.start_frame, r.end_frame))
            .collect();
        for w in &t.windows {
            let center = (w.start_frame + w.end_frame) / 2;
            let truth = intervals.iter().any(|&(s, e)| center >= s && center <= e);
            match (w.positive, truth) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, false) => tn += 1,
                (false, true) => fn_ += 1,
            }
        }
    }
    let windows_evaluated = tp + fp + tn + fn_;
    let detection_accuracy = safe_div((tp + tn) as f64, windows_evaluated as f64);
    let detection_false_positive_rate = safe_div(fp as f64, (fp + tn) as f64);
    let detection_precision = safe_div(tp as f64, (tp + fp) as f64);

    // Cluster-level truth: region records when present, otherwise
    // per-trajectory exercise records.
    let region_records: Vec<&GroundTruthRecord> =
        ground_truth.iter().filter(|r| r.region.is_some()).collect();
    let exercise_truths: Vec<&GroundTruthRecord> = if region_records.is_empty() {
        ground_truth.iter().filter(|r| r.is_exercise()).collect()
    } else {
        region_records.into_iter().filter(|r| r.is_exercise()).collect()
    };

    // Greedy one-to-one matching by descending temporal IoU.
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (ci, cluster) in report.clusters.iter().enumerate() {
        let span = (cluster.combined.start_frame, cluster.combined.end_frame);
        for (gi, truth) in exercise_truths.iter().enumerate() {
            let iou = interval_iou(span, (truth.start_frame, truth.end_frame));
            if iou >= TRACKING_IOU_THRESHOLD {
                pairs.push((iou, ci, gi));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut cluster_used = vec![false; report.clusters.len()];
    let mut truth_used = vec![false; exercise_truths.len()];
    let mut matches: Vec<(usize, usize)> = Vec::new();
    for (_, ci, gi) in pairs {
        if !cluster_used[ci] && !truth_used[gi] {
            cluster_used[ci] = true;
            truth_used[gi] = true;
            matches.push((ci, gi));
        }
    }

    let ground_truth_exercises = exercise_truths.len();
    let predicted_clusters = report.clusters.len();
    let matched_clusters = matches.len();
    let cluster_tracking_rate =
        safe_div(matched_clusters as f64, ground_truth_exercises as f64);
    let cluster_false_positive_rate = safe_div(
        (predicted_clusters - matched_clusters) as f64,
        predicted_clusters as f64,
    );

    // Repetition error over matched pairs with an estimate.
    let abs_errors: Vec<f64> = matches
        .iter()
        .filter_map(|&(ci, gi)| {
            report.clusters[ci]
                .reps
                .map(|est| (est.raw - exercise_truths[gi].reps).abs())
        })
        .collect();
    let rep_pairs = abs_errors.len();
    let rep_mae = safe_div(abs_errors.iter().sum(), rep_pairs as f64);
    let rep_error_std = if rep_pairs > 0 {
        let var = abs_errors.iter().map(|e| (e - rep_mae).powi(2)).sum::<f64>() / rep_pairs as f64;
        var.sqrt()
    } else {
        0.0
    };

    // Recognition accuracy over matched pairs with a label and a labeled
    // ground truth.
    let mut recognition_pairs = 0usize;
    let mut recognition_correct = 0usize;
    for &(ci, gi) in &matches {
        let (Some(recognition), Some(class)) = (
            report.clusters[ci].recognition.as_ref(),
            exercise_truths[gi].class.as_deref(),
        ) else {
            continue;
        };
        recognition_pairs += 1;
        if recognition.label == class {
            recognition_correct += 1;
        }
    }
    let recognition_accuracy = safe_div(recognition_correct as f64, recognition_pairs as f64);

    Ok(EvalMetrics {
        detection_accuracy,
        detection_false_positive_rate,
        detection_precision,
        windows_evaluated,
        cluster_tracking_rate,
        cluster_false_positive_rate,
        ground_truth_exercises,
        predicted_clusters,
        matched_clusters,
        rep_mae,
        rep_error_std,
        rep_pairs,
        recognition_accuracy,
        recognition_pairs,
    })
}
