//! End-to-end orchestration: trajectory stream in, analytics report out, plus
//! the training entry point that produces the model bundle.
//!
//! Frame bookkeeping: windows slide over the trimmed sample sequence, but
//! every window is stamped with the original frames of its first and last
//! retained samples, so segments, clusters and reports all live in source
//! time even when trimming compacted the samples.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::analytics::{self, AnalyticsError};
use crate::cluster::{self, SegmentTrack};
use crate::config::PipelineConfig;
use crate::detect::{self, DetectError};
use crate::eval::{self, EvalError};
use crate::features::{self, FeatureVector, FEATURE_COUNT};
use crate::formats::{GroundTruthRecord, ModelBundle, BUNDLE_VERSION};
use crate::nn::{self, Targets};
use crate::report::*;
use crate::trajectory::{
    BoundingBox, ExerciseSegment, IngestOutcome, MotionTrajectory, TrajectoryWindow,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("model bundle is missing the {0}")]
    MissingModel(&'static str),
    #[error("bundle is inconsistent: {0}")]
    BadBundle(String),
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Cluster(#[from] cluster::ClusterError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("training failed: {0}")]
    Train(#[from] nn::NnError),
    #[error("{0}")]
    Corpus(String),
}

impl PipelineError {
    /// Process exit code class: 1 validation, 2 runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::MissingModel(_)
            | PipelineError::BadBundle(_)
            | PipelineError::BadConfig(_)
            | PipelineError::Eval(_)
            | PipelineError::Corpus(_) => 1,
            PipelineError::Cluster(_) | PipelineError::Detect(_) | PipelineError::Train(_) => 2,
        }
    }
}

/// Windows of one trajectory after trimming, with source-frame spans.
pub struct PreparedWindows {
    /// Trimming left fewer than two samples; nothing to classify.
    pub stationary: bool,
    pub windows: Vec<TrajectoryWindow>,
    /// Original-frame (start, end) per window.
    pub spans: Vec<(i64, i64)>,
    /// One entry per window; `None` when normalization or extraction failed.
    pub features: Vec<Option<FeatureVector>>,
    pub degenerate: usize,
}

/// Trims a trajectory, slides windows over the retained samples and extracts
/// features, keeping each window's original-frame span.
pub fn prepare_windows(t: &MotionTrajectory, cfg: &PipelineConfig) -> PreparedWindows {
    let trimmed = match features::trim_stationary(t, cfg.min_move_px) {
        Ok(trimmed) => trimmed,
        Err(_) => {
            return PreparedWindows {
                stationary: true,
                windows: Vec::new(),
                spans: Vec::new(),
                features: Vec::new(),
                degenerate: 0,
            }
        }
    };
    let fps = t.fps;
    let win = (cfg.window_s * fps).round() as usize;
    let stride = ((cfg.stride_s * fps).round() as usize).max(1);
    let points = &trimmed.trajectory.points;

    let mut windows = Vec::new();
    let mut spans = Vec::new();
    let mut features_vec = Vec::new();
    let mut degenerate = 0;
    let mut start = 0usize;
    while win >= 1 && start + win <= points.len() {
        let window = TrajectoryWindow {
            source_id: t.id.clone(),
            window_start_frame: trimmed.source_frames[start],
            length_frames: win,
            fps,
            points: points[start..start + win].to_vec(),
        };
        spans.push((
            trimmed.source_frames[start],
            trimmed.source_frames[start + win - 1],
        ));
        let feature = features::normalize_window(&window)
            .and_then(|normalized| features::extract_features(&normalized))
            .ok();
        if feature.is_none() {
            degenerate += 1;
        }
        windows.push(window);
        features_vec.push(feature);
        start += stride;
    }
    PreparedWindows {
        stationary: false,
        windows,
        spans,
        features: features_vec,
        degenerate,
    }
}

fn validate_bundle(bundle: &ModelBundle) -> Result<(), PipelineError> {
    if bundle.bundle_version != BUNDLE_VERSION {
        return Err(PipelineError::BadBundle(format!(
            "bundle version {} unsupported",
            bundle.bundle_version
        )));
    }
    let detector = bundle
        .detector
        .as_ref()
        .ok_or(PipelineError::MissingModel("detector"))?;
    let regressor = bundle
        .regressor
        .as_ref()
        .ok_or(PipelineError::MissingModel("regressor"))?;
    let recognizer = bundle
        .recognizer
        .as_ref()
        .ok_or(PipelineError::MissingModel("recognizer"))?;
    if detector.input_dim() != FEATURE_COUNT {
        return Err(PipelineError::BadBundle(format!(
            "detector expects {} inputs, features are {FEATURE_COUNT}-dimensional",
            detector.input_dim()
        )));
    }
    if regressor.input_dim() != 12 {
        return Err(PipelineError::BadBundle(format!(
            "regressor expects {} inputs, needs the 12 frequency features",
            regressor.input_dim()
        )));
    }
    if recognizer.input_dim() != analytics::RECOGNITION_INPUT_DIM {
        return Err(PipelineError::BadBundle(format!(
            "recognizer expects {} inputs, quantized windows are {}-dimensional",
            recognizer.input_dim(),
            analytics::RECOGNITION_INPUT_DIM
        )));
    }
    if recognizer.output_dim() != bundle.classes.len() || bundle.classes.is_empty() {
        return Err(PipelineError::BadBundle(format!(
            "recognizer has {} outputs but the bundle lists {} classes",
            recognizer.output_dim(),
            bundle.classes.len()
        )));
    }
    Ok(())
}

/// Runs detection, clustering and analytics over ingested trajectories and
/// assembles the report. Deterministic for fixed inputs and seed; partial
/// failures (stationary or degenerate inputs) are recorded, never dropped.
pub fn run_pipeline(
    ingest: &IngestOutcome,
    boxes: &[BoundingBox],
    bundle: &ModelBundle,
    config: &PipelineConfig,
    ground_truth: Option<&[GroundTruthRecord]>,
) -> Result<AnalyticsReport, PipelineError> {
    config.validate().map_err(PipelineError::BadConfig)?;
    crate::trajectory::validate_boxes(boxes)
        .map_err(|e| PipelineError::BadConfig(e.to_string()))?;
    validate_bundle(bundle)?;
    let detector = bundle.detector.as_ref().unwrap();
    let regressor = bundle.regressor.as_ref().unwrap();
    let recognizer = bundle.recognizer.as_ref().unwrap();

    // Detection per trajectory.
    let mut trajectory_reports = Vec::with_capacity(ingest.accepted.len());
    let mut all_segments: Vec<ExerciseSegment> = Vec::new();
    let mut segment_reports: Vec<SegmentReport> = Vec::new();
    for t in &ingest.accepted {
        let prepared = prepare_windows(t, config);
        if prepared.stationary {
            trajectory_reports.push(TrajectoryReport {
                id: t.id.clone(),
                stationary: true,
                degenerate_windows: 0,
                windows: Vec::new(),
                segment_ids: Vec::new(),
            });
            continue;
        }
        let mut probabilities = vec![0.0; prepared.windows.len()];
        let valid: Vec<(usize, FeatureVector)> = prepared
            .features
            .iter()
            .enumerate()
            .filter_map(|(i, f)| f.map(|f| (i, f)))
            .collect();
        let vectors: Vec<FeatureVector> = valid.iter().map(|(_, f)| *f).collect();
        for ((i, _), p) in valid.iter().zip(detect::classify_windows(detector, &vectors)?) {
            probabilities[*i] = p;
        }
        let raw_labels: Vec<bool> = probabilities
            .iter()
            .map(|&p| p >= config.detector.threshold)
            .collect();
        let labels = detect::vote_smooth(&raw_labels, config.detector.vote_k, config.detector.vote_mode);
        let mut segments = detect::merge_segments(&labels, &probabilities, &prepared.windows);
        // Segment ends in source time: the last retained sample of the last
        // member window.
        for segment in &mut segments {
            let last = *segment.windows.last().unwrap();
            segment.end_frame = prepared.spans[last].1;
        }

        let windows = prepared
            .spans
            .iter()
            .zip(&probabilities)
            .zip(&labels)
            .map(|((&(start, end), &probability), &positive)| WindowReport {
                start_frame: start,
                end_frame: end,
                probability,
                positive,
            })
            .collect();
        let mut segment_ids = Vec::with_capacity(segments.len());
        for segment in segments {
            let id = all_segments.len();
            segment_ids.push(id);
            segment_reports.push(SegmentReport {
                id,
                source_id: segment.source_id.clone(),
                start_frame: segment.start_frame,
                end_frame: segment.end_frame,
                window_indices: segment.windows.clone(),
                label_confidence: segment.label_confidence,
            });
            all_segments.push(segment);
        }
        trajectory_reports.push(TrajectoryReport {
            id: t.id.clone(),
            stationary: false,
            degenerate_windows: prepared.degenerate,
            windows,
            segment_ids,
        });
    }

    // Clustering over the original trajectories.
    let trajectory_map: BTreeMap<&str, &MotionTrajectory> =
        ingest.accepted.iter().map(|t| (t.id.as_str(), t)).collect();
    let assignment = cluster::assign_to_boxes(&all_segments, &trajectory_map, boxes)?;

    let mut cluster_reports = Vec::new();
    for (box_id, segment_ids) in assignment {
        let tracks: Vec<SegmentTrack> = segment_ids
            .iter()
            .map(|&sid| SegmentTrack {
                segment: &all_segments[sid],
                trajectory: trajectory_map[all_segments[sid].source_id.as_str()],
            })
            .collect();
        let adjacency = cluster::build_adjacency(&tracks, &config.cluster);
        for component in cluster::connected_components(&adjacency) {
            let members: Vec<SegmentTrack> =
                component.iter().map(|&i| tracks[i]).collect();
            let member_segments: Vec<usize> =
                component.iter().map(|&i| segment_ids[i]).collect();
            let exercise_cluster =
                cluster::build_cluster(box_id, member_segments, &members, &config.cluster);
            let combined = &exercise_cluster.combined;

            let mut analytics_errors = Vec::new();
            let reps = match analytics::count_reps(regressor, combined) {
                Ok(estimate) => Some(estimate),
                Err(e @ (AnalyticsError::Degenerate | AnalyticsError::TooShort { .. })) => {
                    analytics_errors.push(format!("no-count: {e}"));
                    None
                }
                Err(e) => return Err(PipelineError::Train(match e {
                    AnalyticsError::Nn(inner) => inner,
                    other => nn::NnError::Format(other.to_string()),
                })),
            };
            let recognition = match analytics::recognize(
                recognizer,
                combined,
                config.window_s,
                config.stride_s,
            ) {
                Ok(r) => Some(RecognitionReport {
                    label: bundle.classes[r.label].clone(),
                    label_index: r.label,
                    probabilities: r.probabilities,
                    windows_used: r.windows_used,
                    single_window_fallback: r.single_window_fallback,
                }),
                Err(e @ (AnalyticsError::Degenerate | AnalyticsError::TooShort { .. })) => {
                    analytics_errors.push(format!("no-recognition: {e}"));
                    None
                }
                Err(e) => return Err(PipelineError::Train(match e {
                    AnalyticsError::Nn(inner) => inner,
                    other => nn::NnError::Format(other.to_string()),
                })),
            };

            cluster_reports.push(ClusterReport {
                id: cluster_reports.len(),
                box_id,
                member_segments: exercise_cluster.member_segments.clone(),
                combined: CombinedSummary {
                    start_frame: exercise_cluster.start_frame,
                    end_frame: exercise_cluster.end_frame,
                    n_points: combined.points.len(),
                    interpolated_gaps: combined.interpolated_gaps,
                },
                reps,
                recognition,
                analytics_errors,
            });
        }
    }

    let mut report = AnalyticsReport {
        schema_version: REPORT_SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        config: config.clone(),
        ingestion: IngestionSummary {
            accepted: ingest.accepted.len(),
            rejected: ingest
                .rejected
                .iter()
                .map(|r| RejectedRecord {
                    line: r.line,
                    id: r.id.clone(),
                    reason: r.reason.to_string(),
                })
                .collect(),
            parse_errors: ingest
                .parse_errors
                .iter()
                .map(|p| ParseErrorRecord {
                    line: p.line,
                    message: p.message.clone(),
                })
                .collect(),
        },
        trajectories: trajectory_reports,
        segments: segment_reports,
        clusters: cluster_reports,
        evaluation: None,
    };
    if let Some(truth) = ground_truth {
        report.evaluation = Some(eval::evaluate(&report, truth)?);
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// Held-out numbers printed after training.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainSummary {
    pub detector_accuracy: Option<f64>,
    pub detector_fpr: Option<f64>,
    pub detector_fnr: Option<f64>,
    pub regressor_mae: Option<f64>,
    pub recognizer_accuracy: Option<f64>,
    pub warnings: Vec<String>,
}

impl TrainSummary {
    pub fn lines(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let (Some(acc), Some(fpr), Some(fnr)) =
            (self.detector_accuracy, self.detector_fpr, self.detector_fnr)
        {
            out.push(format!(
                "detector: held-out accuracy {:.4}, fpr {:.4}, fnr {:.4}",
                acc, fpr, fnr
            ));
        }
        if let Some(mae) = self.regressor_mae {
            out.push(format!("regressor: held-out mae {:.3} reps", mae));
        }
        if let Some(acc) = self.recognizer_accuracy {
            out.push(format!("recognizer: held-out accuracy {:.4}", acc));
        }
        for w in &self.warnings {
            out.push(format!("warning: {w}"));
        }
        out
    }
}

/// Seeded stratified split of indices grouped by a key; returns (train, test).
fn stratified_split<K: Ord>(
    keys: Vec<(usize, K)>,
    test_fraction: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let mut by_key: BTreeMap<K, Vec<usize>> = BTreeMap::new();
    for (i, k) in keys {
        by_key.entry(k).or_default().push(i);
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (_, mut indices) in by_key {
        indices.shuffle(&mut rng);
        let n_test = ((indices.len() as f64) * test_fraction).round() as usize;
        let n_test = n_test.min(indices.len().saturating_sub(1));
        let split = indices.len() - n_test;
        train.extend_from_slice(&indices[..split]);
        test.extend_from_slice(&indices[split..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// A training trajectory preprocessed exactly like an inference-time cluster:
/// the single-member combined trajectory (per-axis Hann smoothing over the
/// whole span). Regressor and recognizer inputs must match that distribution.
fn as_combined(
    t: &MotionTrajectory,
    config: &PipelineConfig,
) -> crate::trajectory::CombinedTrajectory {
    let segment = ExerciseSegment {
        source_id: t.id.clone(),
        start_frame: t.start_frame,
        end_frame: t.end_frame(),
        windows: Vec::new(),
        label_confidence: 1.0,
    };
    cluster::combine_cluster(
        &[SegmentTrack { segment: &segment, trajectory: t }],
        &config.cluster,
    )
}

/// Trains detector, regressor and recognizer from a labeled corpus. Models a
/// corpus cannot support are skipped with a warning instead of failing, as
/// long as at least one model is trainable.
pub fn train_models(
    trajectories: &[MotionTrajectory],
    truths: &[GroundTruthRecord],
    config: &PipelineConfig,
) -> Result<(ModelBundle, TrainSummary), PipelineError> {
    config.validate().map_err(PipelineError::BadConfig)?;
    let truth_by_id: BTreeMap<&str, &GroundTruthRecord> = truths
        .iter()
        .filter_map(|r| r.id.as_deref().map(|id| (id, r)))
        .collect();

    let mut summary = TrainSummary::default();
    let mut labeled: Vec<(&MotionTrajectory, &GroundTruthRecord)> = Vec::new();
    for t in trajectories {
        match truth_by_id.get(t.id.as_str()) {
            Some(record) => labeled.push((t, record)),
            None => summary
                .warnings
                .push(format!("trajectory '{}' has no ground truth; skipped", t.id)),
        }
    }
    if labeled.is_empty() {
        return Err(PipelineError::Corpus("no labeled trajectories".into()));
    }
    let seed = config.train.seed;

    // Detector: window features labeled by the trajectory's exercise flag.
    let detector = {
        let keys: Vec<(usize, bool)> = labeled
            .iter()
            .enumerate()
            .map(|(i, (_, r))| (i, r.is_exercise()))
            .collect();
        let has_both = keys.iter().any(|(_, k)| *k) && keys.iter().any(|(_, k)| !*k);
        if has_both {
            let (train_idx, test_idx) = stratified_split(keys, 0.2, seed);
            let windows_of = |indices: &[usize]| {
                let mut features = Vec::new();
                let mut labels = Vec::new();
                for &i in indices {
                    let (t, record) = labeled[i];
                    let prepared = prepare_windows(t, config);
                    for f in prepared.features.into_iter().flatten() {
                        features.push(f);
                        labels.push(record.is_exercise());
                    }
                }
                (features, labels)
            };
            let (train_features, train_labels) = windows_of(&train_idx);
            let model = detect::train_detector(
                &train_features,
                &train_labels,
                &config.detector,
                &config.train,
            )?;
            let (test_features, test_labels) = windows_of(&test_idx);
            let probs = detect::classify_windows(&model, &test_features)?;
            let (mut tp, mut fp, mut tn, mut fn_) = (0.0, 0.0, 0.0, 0.0);
            for (p, &truth) in probs.iter().zip(&test_labels) {
                match (*p >= config.detector.threshold, truth) {
                    (true, true) => tp += 1.0,
                    (true, false) => fp += 1.0,
                    (false, false) => tn += 1.0,
                    (false, true) => fn_ += 1.0,
                }
            }
            let total: f64 = tp + fp + tn + fn_;
            if total > 0.0 {
                summary.detector_accuracy = Some((tp + tn) / total);
                summary.detector_fpr = Some(if fp + tn > 0.0 { fp / (fp + tn) } else { 0.0 });
                summary.detector_fnr = Some(if tp + fn_ > 0.0 { fn_ / (tp + fn_) } else { 0.0 });
            }
            Some(model)
        } else {
            summary.warnings.push(
                "detector skipped: corpus needs both exercise and non-exercise trajectories"
                    .into(),
            );
            None
        }
    };

    // Regressor: frequency features of whole exercise trajectories.
    let regressor = {
        let exercises: Vec<usize> = labeled
            .iter()
            .enumerate()
            .filter(|(_, (_, r))| r.is_exercise() && r.reps > 0.0)
            .map(|(i, _)| i)
            .collect();
        if exercises.len() >= 10 {
            let keys: Vec<(usize, u8)> = exercises.iter().map(|&i| (i, 0u8)).collect();
            let (train_idx, test_idx) = stratified_split(keys, 0.2, seed.wrapping_add(1));
            let mut inputs = Vec::new();
            let mut targets = Vec::new();
            for &i in &train_idx {
                let (t, record) = labeled[i];
                // Exercises below the repetition floor are untrustworthy
                // training exemplars.
                if record.reps < config.min_training_reps {
                    continue;
                }
                let combined = as_combined(t, config);
                if let Ok(f) = analytics::rep_features(&combined.points, combined.fps) {
                    inputs.push(f.to_vec());
                    targets.push(record.reps);
                }
            }
            if inputs.len() >= 2 {
                let model = nn::train(&inputs, &Targets::Regression(&targets), &config.train)?;
                let mut errors = Vec::new();
                for &i in &test_idx {
                    let (t, record) = labeled[i];
                    let combined = as_combined(t, config);
                    if let Ok(estimate) = analytics::count_reps(&model, &combined) {
                        errors.push((estimate.raw - record.reps).abs());
                    }
                }
                if !errors.is_empty() {
                    summary.regressor_mae =
                        Some(errors.iter().sum::<f64>() / errors.len() as f64);
                }
                Some(model)
            } else {
                summary.warnings.push(format!(
                    "regressor skipped: all training exercises fall below {} repetitions",
                    config.min_training_reps
                ));
                None
            }
        } else {
            summary
                .warnings
                .push("regressor skipped: needs at least 10 exercise trajectories with reps".into());
            None
        }
    };

    // Recognizer: quantized windows labeled by class.
    let mut classes: Vec<String> = Vec::new();
    let recognizer = {
        let with_class: Vec<(usize, &str)> = labeled
            .iter()
            .enumerate()
            .filter(|(_, (_, r))| r.is_exercise())
            .filter_map(|(i, (_, r))| r.class.as_deref().map(|c| (i, c)))
            .collect();
        let mut names: Vec<String> = with_class.iter().map(|(_, c)| c.to_string()).collect();
        names.sort();
        names.dedup();
        if names.len() >= 2 {
            classes = names;
            let keys: Vec<(usize, String)> = with_class
                .iter()
                .map(|&(i, c)| (i, c.to_string()))
                .collect();
            let (train_idx, test_idx) = stratified_split(keys, 0.2, seed.wrapping_add(2));
            let class_index = |record: &GroundTruthRecord| {
                classes
                    .iter()
                    .position(|c| Some(c.as_str()) == record.class.as_deref())
                    .expect("class collected above")
            };
            let mut inputs = Vec::new();
            let mut labels = Vec::new();
            for &i in &train_idx {
                let (t, record) = labeled[i];
                let combined = as_combined(t, config);
                let (windows, _) = analytics::quantized_windows(
                    &combined.points,
                    combined.fps,
                    config.window_s,
                    config.stride_s,
                );
                for q in windows {
                    inputs.push(q);
                    labels.push(class_index(record));
                }
            }
            let model = nn::train(
                &inputs,
                &Targets::Multiclass { labels: &labels, classes: classes.len() },
                &config.train,
            )?;
            let mut correct = 0usize;
            let mut total = 0usize;
            for &i in &test_idx {
                let (t, record) = labeled[i];
                let combined = as_combined(t, config);
                if let Ok(r) =
                    analytics::recognize(&model, &combined, config.window_s, config.stride_s)
                {
                    total += 1;
                    if r.label == class_index(record) {
                        correct += 1;
                    }
                }
            }
            if total > 0 {
                summary.recognizer_accuracy = Some(correct as f64 / total as f64);
            }
            Some(model)
        } else {
            summary.warnings.push(
                "recognizer skipped: needs at least 2 labeled exercise classes".into(),
            );
            None
        }
    };

    if detector.is_none() && regressor.is_none() && recognizer.is_none() {
        return Err(PipelineError::Corpus(
            "corpus supports none of the three models".into(),
        ));
    }

    let bundle = ModelBundle {
        bundle_version: BUNDLE_VERSION,
        feature_version: features::FEATURE_VERSION,
        seed,
        classes,
        train_config: config.train.clone(),
        detector,
        regressor,
        recognizer,
    };
    Ok((bundle, summary))
}
