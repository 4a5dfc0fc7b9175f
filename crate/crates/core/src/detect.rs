//! Window classification, vote smoothing and segment assembly: decides which
//! stretches of a trajectory are exercise, and curates the training positives
//! for the detector.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureVector;
use crate::nn::{self, MlpModel, Prediction, Targets, TrainConfig, Task};
use crate::trajectory::{ExerciseSegment, TrajectoryWindow};

#[derive(Debug, Error, PartialEq)]
pub enum DetectError {
    #[error("model task is {0:?}, detector needs a binary classifier")]
    NotBinary(Task),
    #[error(transparent)]
    Nn(#[from] nn::NnError),
}

/// Runs the binary detector over feature vectors, one probability per window,
/// in order.
pub fn classify_windows(
    model: &MlpModel,
    windows: &[FeatureVector],
) -> Result<Vec<f64>, DetectError> {
    if model.task != Task::Binary {
        return Err(DetectError::NotBinary(model.task));
    }
    windows
        .iter()
        .map(|f| match nn::predict(model, f.as_slice())? {
            Prediction::Binary(p) => Ok(p),
            _ => unreachable!("task checked above"),
        })
        .collect()
}

/// How the k-vote smoothing walks the label sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteMode {
    /// Non-overlapping blocks of k labels; the block majority replaces every
    /// label in the block. A trailing partial block keeps its raw labels.
    Tiled,
    /// Centered sliding vote; blocks shrink at the edges.
    Sliding,
}

/// Majority-vote smoothing over blocks of `k` consecutive classifications.
pub fn vote_smooth(labels: &[bool], k: usize, mode: VoteMode) -> Vec<bool> {
    assert!(k >= 1 && k % 2 == 1, "k must be odd and >= 1");
    let n = labels.len();
    let mut out = labels.to_vec();
    match mode {
        VoteMode::Tiled => {
            let mut i = 0;
            while i + k <= n {
                let positives = labels[i..i + k].iter().filter(|&&b| b).count();
                let majority = 2 * positives > k;
                out[i..i + k].iter_mut().for_each(|b| *b = majority);
                i += k;
            }
        }
        VoteMode::Sliding => {
            let h = k / 2;
            for i in 0..n {
                let lo = i.saturating_sub(h);
                let hi = (i + h + 1).min(n);
                let positives = labels[lo..hi].iter().filter(|&&b| b).count();
                out[i] = 2 * positives > hi - lo;
            }
        }
    }
    out
}

/// Combines maximal runs of positive labels into segments. Each segment spans
/// from its first window's start frame to its last window's end frame and
/// carries the mean positive probability of the run.
pub fn merge_segments(
    labels: &[bool],
    probabilities: &[f64],
    windows: &[TrajectoryWindow],
) -> Vec<ExerciseSegment> {
    assert_eq!(labels.len(), windows.len());
    assert_eq!(labels.len(), probabilities.len());
    let mut segments = Vec::new();
    let mut run_start: Option<usize> = None;
    for i in 0..=labels.len() {
        let positive = i < labels.len() && labels[i];
        match (run_start, positive) {
            (None, true) => run_start = Some(i),
            (Some(start), false) => {
                let member: Vec<usize> = (start..i).collect();
                let confidence =
                    member.iter().map(|&w| probabilities[w]).sum::<f64>() / member.len() as f64;
                segments.push(ExerciseSegment {
                    source_id: windows[start].source_id.clone(),
                    start_frame: windows[start].window_start_frame,
                    end_frame: windows[i - 1].end_frame(),
                    windows: member,
                    label_confidence: confidence,
                });
                run_start = None;
            }
            _ => {}
        }
    }
    segments
}

/// Thresholds for curating detector training positives. Applied to training
/// data only, never at validation or inference.
///
/// The defaults keep windows with a strong positive autocorrelation peak and
/// few weak peaks. The prominent-peak minimum defaults to 0 (disabled):
/// under the neighboring-peak prominence rule, the linearly decaying
/// autocorrelation of even a clean tone rarely produces prominent peaks, so a
/// positive minimum would discard most genuine positives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub min_ac_max_peak: f64,
    pub min_prominent_peaks: f64,
    pub max_weak_peaks: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_ac_max_peak: 0.5,
            min_prominent_peaks: 0.0,
            max_weak_peaks: 3.0,
        }
    }
}

impl FilterConfig {
    pub fn passes(&self, f: &FeatureVector) -> bool {
        f.ac_max_peak() >= self.min_ac_max_peak
            && f.n_prominent_peaks() >= self.min_prominent_peaks
            && f.n_weak_peaks() <= self.max_weak_peaks
    }
}

/// Returns the indices of training-positive windows that survive the
/// aggressive frequency-feature thresholds, in input order.
pub fn filter_training_positives(windows: &[FeatureVector], cfg: &FilterConfig) -> Vec<usize> {
    windows
        .iter()
        .enumerate()
        .filter(|(_, f)| cfg.passes(f))
        .map(|(i, _)| i)
        .collect()
}

/// Detector-specific knobs around the shared training configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Probability threshold for the positive class.
    pub threshold: f64,
    /// Vote size for label smoothing.
    pub vote_k: usize,
    pub vote_mode: VoteMode,
    /// Loss multiplier on the negative class; > 1 trades precision for a
    /// lower false-positive rate.
    pub negative_class_weight: f64,
    pub filter: FilterConfig,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            threshold: 0.5,
            vote_k: 3,
            vote_mode: VoteMode::Tiled,
            negative_class_weight: 2.0,
            filter: FilterConfig::default(),
        }
    }
}

/// Trains the exercise/non-exercise window classifier. Positives are filtered
/// by `cfg.filter`; negatives are kept as-is and up-weighted in the loss by
/// `cfg.negative_class_weight`.
pub fn train_detector(
    features: &[FeatureVector],
    is_exercise: &[bool],
    cfg: &DetectorConfig,
    train_cfg: &TrainConfig,
) -> Result<MlpModel, DetectError> {
    assert_eq!(features.len(), is_exercise.len());
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for (f, &positive) in features.iter().zip(is_exercise) {
        if positive && !cfg.filter.passes(f) {
            continue;
        }
        inputs.push(f.as_slice().to_vec());
        labels.push(positive);
    }
    let mut nn_cfg = train_cfg.clone();
    nn_cfg.class_weights = Some(vec![cfg.negative_class_weight, 1.0]);
    Ok(nn::train(&inputs, &Targets::Binary(&labels), &nn_cfg)?)
}
