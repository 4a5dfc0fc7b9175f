//! Per-cluster analytics on the combined trajectory: repetition counting via
//! a frequency-feature regressor and exercise recognition via a
//! quantized-window classifier with a probability-summed vote.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{self, FeatureError};
use crate::nn::{self, MlpModel, Prediction, Task};
use crate::trajectory::{CombinedTrajectory, Point, TrajectoryWindow};

/// Samples per quantized recognition window; with (x, y) interleaved the
/// classifier input is twice this.
pub const RECOGNITION_SAMPLES: usize = 150;

/// Input width of the recognition classifier.
pub const RECOGNITION_INPUT_DIM: usize = 2 * RECOGNITION_SAMPLES;

#[derive(Debug, Error, PartialEq)]
pub enum AnalyticsError {
    #[error("combined trajectory is degenerate, no estimate possible")]
    Degenerate,
    #[error("combined trajectory too short: {len} samples, need {min}")]
    TooShort { len: usize, min: usize },
    #[error("model task is {got:?}, expected {expected:?}")]
    WrongTask { expected: Task, got: Task },
    #[error(transparent)]
    Nn(#[from] nn::NnError),
}

/// Repetition estimate: the raw regressor output (clamped non-negative) plus
/// the rounded count used in reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepEstimate {
    pub raw: f64,
    pub rounded: u32,
}

/// The 12 frequency-based features of a whole (normalized) point sequence,
/// shared by regressor training and inference.
pub fn rep_features(points: &[Point], fps: f64) -> Result<[f64; 12], AnalyticsError> {
    let window = TrajectoryWindow {
        source_id: String::new(),
        window_start_frame: 0,
        length_frames: points.len(),
        fps,
        points: points.to_vec(),
    };
    let normalized = features::normalize_window(&window).map_err(|e| match e {
        FeatureError::DegenerateWindow => AnalyticsError::Degenerate,
        FeatureError::InsufficientLength { len, min } => AnalyticsError::TooShort { len, min },
    })?;
    let vector = features::extract_features(&normalized).map_err(|e| match e {
        FeatureError::DegenerateWindow => AnalyticsError::Degenerate,
        FeatureError::InsufficientLength { len, min } => AnalyticsError::TooShort { len, min },
    })?;
    Ok(vector.frequency_features())
}

/// Estimates the repetition count of a combined trajectory.
pub fn count_reps(
    regressor: &MlpModel,
    combined: &CombinedTrajectory,
) -> Result<RepEstimate, AnalyticsError> {
    if regressor.task != Task::Regression {
        return Err(AnalyticsError::WrongTask {
            expected: Task::Regression,
            got: regressor.task,
        });
    }
    let features = rep_features(&combined.points, combined.fps)?;
    let raw = match nn::predict(regressor, &features)? {
        Prediction::Regression(v) => v.max(0.0),
        _ => unreachable!("task checked above"),
    };
    Ok(RepEstimate {
        raw,
        rounded: raw.round() as u32,
    })
}

/// Re-anchors a point sequence to its first point, scales by the maximum
/// displacement from it, resamples to [`RECOGNITION_SAMPLES`] by linear
/// interpolation and flattens to interleaved (x, y). The result describes
/// the motion's shape, independent of where in the image it happened.
/// `None` for degenerate sequences.
pub fn quantize(points: &[Point]) -> Option<Vec<f64>> {
    if points.len() < 2 {
        return None;
    }
    let first = points[0];
    let max_disp = points
        .iter()
        .map(|p| p.distance(&first))
        .fold(0.0f64, f64::max);
    if max_disp <= 0.0 {
        return None;
    }
    let n = points.len();
    let mut out = Vec::with_capacity(RECOGNITION_INPUT_DIM);
    for j in 0..RECOGNITION_SAMPLES {
        let pos = j as f64 * (n - 1) as f64 / (RECOGNITION_SAMPLES - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(n - 1);
        let alpha = pos - lo as f64;
        let x = points[lo].x + alpha * (points[hi].x - points[lo].x);
        let y = points[lo].y + alpha * (points[hi].y - points[lo].y);
        out.push((x - first.x) / max_disp);
        out.push((y - first.y) / max_disp);
    }
    Some(out)
}

/// Quantized sliding windows over a point sequence, for recognizer training
/// and inference. A sequence shorter than one window falls back to a single
/// whole-sequence window (flagged).
pub fn quantized_windows(
    points: &[Point],
    fps: f64,
    window_s: f64,
    stride_s: f64,
) -> (Vec<Vec<f64>>, bool) {
    let win = (window_s * fps).round() as usize;
    let stride = ((stride_s * fps).round() as usize).max(1);
    if points.len() < win {
        return (quantize(points).into_iter().collect(), true);
    }
    let mut out = Vec::new();
    let mut start = 0;
    while start + win <= points.len() {
        if let Some(q) = quantize(&points[start..start + win]) {
            out.push(q);
        }
        start += stride;
    }
    (out, false)
}

/// Outcome of the probability-vote over a combined trajectory's windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recognition {
    /// Winning class index (ties go to the lowest index).
    pub label: usize,
    /// Summed per-window probabilities, renormalized to 1.
    pub probabilities: Vec<f64>,
    pub windows_used: usize,
    /// True when the trajectory was shorter than one window and the whole
    /// sequence was classified as a single window.
    pub single_window_fallback: bool,
}

/// Recognizes the exercise type of a combined trajectory by classifying
/// every sliding window and summing the probability vectors.
pub fn recognize(
    recognizer: &MlpModel,
    combined: &CombinedTrajectory,
    window_s: f64,
    stride_s: f64,
) -> Result<Recognition, AnalyticsError> {
    if recognizer.task != Task::Multiclass {
        return Err(AnalyticsError::WrongTask {
            expected: Task::Multiclass,
            got: recognizer.task,
        });
    }
    let (windows, single_window_fallback) =
        quantized_windows(&combined.points, combined.fps, window_s, stride_s);
    if windows.is_empty() {
        return Err(AnalyticsError::Degenerate);
    }
    let classes = recognizer.output_dim();
    let mut sum = vec![0.0; classes];
    for q in &windows {
        match nn::predict(recognizer, q)? {
            Prediction::Multiclass(p) => {
                for (s, v) in sum.iter_mut().zip(&p) {
                    *s += v;
                }
            }
            _ => unreachable!("task checked above"),
        }
    }
    let total: f64 = sum.iter().sum();
    let probabilities: Vec<f64> = sum.iter().map(|v| v / total).collect();
    let label = probabilities
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &p)| {
            if p > best.1 {
                (i, p)
            } else {
                best
            }
        })
        .0;
    Ok(Recognition {
        label,
        probabilities,
        windows_used: windows.len(),
        single_window_fallback,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{train, Targets, TrainConfig};
    use crate::synth::{generate, generate_corpus, CorpusSpec, MotionKind, SynthSpec};

    fn combined_from(kind: MotionKind, freq: f64, duration: f64, seed: u64) -> CombinedTrajectory {
        let spec = SynthSpec {
            kind,
            frequency_hz: freq,
            duration_s: duration,
            amplitude_px: 50.0,
            noise_std_px: 1.0,
            seed,
            ..SynthSpec::default()
        };
        let (t, _) = generate(&spec).unwrap();
        CombinedTrajectory {
            fps: t.fps,
            start_frame: 0,
            points: t.points,
            interpolated_gaps: false,
        }
    }

    fn train_sweep_regressor(seed: u64) -> MlpModel {
        let spec = CorpusSpec {
            kinds: vec![MotionKind::SinusoidX, MotionKind::SinusoidY, MotionKind::Circle],
            n_per_kind: 30,
            noise_frac: (0.01, 0.08),
            seed,
            ..CorpusSpec::default()
        };
        let corpus = generate_corpus(&spec).unwrap();
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for item in &corpus.items {
            // Training-set curation: exercises below five repetitions are
            // not trustworthy rep exemplars.
            if item.truth.reps < 5.0 {
                continue;
            }
            if let Ok(f) = rep_features(&item.trajectory.points, item.trajectory.fps) {
                inputs.push(f.to_vec());
                targets.push(item.truth.reps);
            }
        }
        train(
            &inputs,
            &Targets::Regression(&targets),
            &TrainConfig { max_epochs: 300, ..TrainConfig::default().with_seed(seed) },
        )
        .unwrap()
    }

    #[test]
    fn rep_count_tracks_frequency_times_duration() {
        let regressor = train_sweep_regressor(101);
        // Analytic oracle: reps = f x duration.
        for (freq, duration, seed) in [(1.0, 8.0, 7u64), (0.5, 10.0, 8), (1.5, 7.0, 9)] {
            let combined = combined_from(MotionKind::SinusoidX, freq, duration, seed);
            let estimate = count_reps(&regressor, &combined).unwrap();
            let truth = freq * duration;
            assert!(
                (estimate.raw - truth).abs() <= 1.7,
                "f={freq} d={duration}: estimated {} vs {truth}",
                estimate.raw
            );
            assert!(estimate.raw >= 0.0);
            assert_eq!(estimate.rounded, estimate.raw.round() as u32);
        }
    }

    #[test]
    fn zero_variance_trajectory_has_no_count() {
        let regressor = train_sweep_regressor(102);
        let combined = CombinedTrajectory {
            fps: 30.0,
            start_frame: 0,
            points: vec![Point::new(5.0, 5.0); 200],
            interpolated_gaps: false,
        };
        assert_eq!(
            count_reps(&regressor, &combined),
            Err(AnalyticsError::Degenerate)
        );
    }

    #[test]
    fn count_reps_requires_regression_model() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(0);
        let not_regressor = MlpModel::init(12, &[4], Task::Binary, 1, &mut rng);
        let combined = combined_from(MotionKind::SinusoidX, 1.0, 8.0, 3);
        assert_eq!(
            count_reps(&not_regressor, &combined),
            Err(AnalyticsError::WrongTask { expected: Task::Regression, got: Task::Binary })
        );
    }

    #[test]
    fn quantize_fixes_length_and_scale() {
        let combined = combined_from(MotionKind::Circle, 1.0, 8.0, 4);
        let q = quantize(&combined.points).unwrap();
        assert_eq!(q.len(), RECOGNITION_INPUT_DIM);
        let max_abs = q.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max_abs.is_finite());
        // Scale invariance of the quantized form.
        let scaled: Vec<Point> = combined.points.iter().map(|p| Point::new(p.x * 3.0, p.y * 3.0)).collect();
        let q2 = quantize(&scaled).unwrap();
        for (a, b) in q.iter().zip(&q2) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn quantize_rejects_degenerate_sequences() {
        assert_eq!(quantize(&[Point::new(1.0, 1.0); 40]), None);
        assert_eq!(quantize(&[Point::new(1.0, 1.0)]), None);
    }

    fn train_two_class_recognizer(seed: u64) -> MlpModel {
        let spec = CorpusSpec {
            kinds: vec![MotionKind::SinusoidX, MotionKind::Circle],
            n_per_kind: 25,
            noise_frac: (0.01, 0.05),
            seed,
            ..CorpusSpec::default()
        };
        let corpus = generate_corpus(&spec).unwrap();
        let mut inputs = Vec::new();
        let mut labels = Vec::new();
        for item in &corpus.items {
            let class = match item.truth.class {
                MotionKind::SinusoidX => 0,
                _ => 1,
            };
            let (windows, _) = quantized_windows(&item.trajectory.points, item.trajectory.fps, 5.0, 1.0);
            for q in windows {
                inputs.push(q);
                labels.push(class);
            }
        }
        train(
            &inputs,
            &Targets::Multiclass { labels: &labels, classes: 2 },
            &TrainConfig { max_epochs: 60, ..TrainConfig::default().with_seed(seed) },
        )
        .unwrap()
    }

    #[test]
    fn recognize_votes_to_the_generating_class() {
        let recognizer = train_two_class_recognizer(55);
        let sin = combined_from(MotionKind::SinusoidX, 1.2, 9.0, 21);
        let circle = combined_from(MotionKind::Circle, 0.8, 9.0, 22);
        let r_sin = recognize(&recognizer, &sin, 5.0, 1.0).unwrap();
        let r_circle = recognize(&recognizer, &circle, 5.0, 1.0).unwrap();
        assert_eq!(r_sin.label, 0);
        assert_eq!(r_circle.label, 1);
        assert!((r_sin.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(!r_sin.single_window_fallback);
        assert!(r_sin.windows_used >= 4);
    }

    #[test]
    fn short_trajectory_uses_single_window_fallback() {
        let recognizer = train_two_class_recognizer(56);
        let short = combined_from(MotionKind::Circle, 1.0, 3.0, 23);
        assert!(short.points.len() < 150);
        let r = recognize(&recognizer, &short, 5.0, 1.0).unwrap();
        assert!(r.single_window_fallback);
        assert_eq!(r.windows_used, 1);
        // The vote over one window is that window's own argmax.
        let q = quantize(&short.points).unwrap();
        let direct = match nn::predict(&recognizer, &q).unwrap() {
            Prediction::Multiclass(p) => p,
            _ => unreachable!(),
        };
        let direct_argmax = direct
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(r.label, direct_argmax);
    }

    #[test]
    fn recognize_rejects_fully_degenerate_input() {
        let recognizer = train_two_class_recognizer(57);
        let flat = CombinedTrajectory {
            fps: 30.0,
            start_frame: 0,
            points: vec![Point::new(0.0, 0.0); 60],
            interpolated_gaps: false,
        };
        assert_eq!(
            recognize(&recognizer, &flat, 5.0, 1.0),
            Err(AnalyticsError::Degenerate)
        );
    }
}
