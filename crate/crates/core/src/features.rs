//! Converts a trajectory window into the fixed 27-value descriptor consumed
//! by the detector, plus the trimming and normalization steps that precede
//! feature extraction.
//!
//! Single-signal features (frequency, autocorrelation, RMS, decay) are
//! computed on the window's principal signal: the projection of the centered
//! positions onto the first principal axis. That keeps them invariant to the
//! orientation of the motion.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::{self, Signal1D};
use crate::trajectory::{MotionTrajectory, Point, TrajectoryWindow};

/// Neighboring-peak margin used by the prominent/weak peak features.
pub const PEAK_PROMINENCE_RATIO: f64 = 0.25;

/// Number of values in the canonical feature vector.
pub const FEATURE_COUNT: usize = 27;

/// Canonical feature names, in vector order.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "zc_x",
    "zc_y",
    "zc_interval_var_x",
    "zc_interval_var_y",
    "dom_freq_hz",
    "ac_at_dominant_lag",
    "ac_max_peak",
    "freq_via_ac_hz",
    "n_ac_peaks",
    "n_prominent_peaks",
    "n_weak_peaks",
    "ac_first_peak_after_zc",
    "rms",
    "span_overall",
    "span_x",
    "span_y",
    "disp_overall_c0",
    "disp_overall_c1",
    "disp_overall_c2",
    "disp_x_c0",
    "disp_x_c1",
    "disp_x_c2",
    "disp_y_c0",
    "disp_y_c1",
    "disp_y_c2",
    "decay_slope",
    "decay_intercept",
];

/// Version tag of the feature definition; stored in model files so a model
/// cannot be applied to vectors with a different layout.
pub const FEATURE_VERSION: u32 = 1;

/// The 27-value window descriptor, serialized as a plain ordered array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector {
    values: [f64; FEATURE_COUNT],
}

impl FeatureVector {
    pub fn from_values(values: [f64; FEATURE_COUNT]) -> Self {
        FeatureVector { values }
    }

    pub fn values(&self) -> &[f64; FEATURE_COUNT] {
        &self.values
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// The frequency-based subset (features 1-12) used by the repetition
    /// regressor.
    pub fn frequency_features(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        out.copy_from_slice(&self.values[..12]);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn zc_x(&self) -> f64 {
        self.values[0]
    }

    pub fn zc_y(&self) -> f64 {
        self.values[1]
    }

    pub fn dom_freq_hz(&self) -> f64 {
        self.values[4]
    }

    pub fn ac_max_peak(&self) -> f64 {
        self.values[6]
    }

    pub fn freq_via_ac_hz(&self) -> f64 {
        self.values[7]
    }

    pub fn n_prominent_peaks(&self) -> f64 {
        self.values[9]
    }

    pub fn n_weak_peaks(&self) -> f64 {
        self.values[10]
    }

    pub fn rms(&self) -> f64 {
        self.values[12]
    }

    pub fn disp_overall_linear(&self) -> f64 {
        self.values[17]
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("window too short: {len} samples, need at least {min}")]
    InsufficientLength { len: usize, min: usize },
    #[error("degenerate window: no displacement to normalize by")]
    DegenerateWindow,
}

#[derive(Debug, Error, PartialEq)]
pub enum TrimError {
    #[error("trajectory fully stationary: {retained} sample(s) retained")]
    FullyStationary { retained: usize },
}

/// A trajectory with stationary samples removed, keeping the original frame
/// index of every retained sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Trimmed {
    /// Retained samples re-packed as a uniformly sampled trajectory.
    pub trajectory: MotionTrajectory,
    /// Original frame index of each retained sample.
    pub source_frames: Vec<i64>,
}

/// Drops samples that moved less than `min_move_px` from the previously
/// retained sample. The first sample is always retained. Fewer than two
/// retained samples means the trajectory is stationary and the caller skips
/// it.
pub fn trim_stationary(t: &MotionTrajectory, min_move_px: f64) -> Result<Trimmed, TrimError> {
    assert!(min_move_px >= 0.0);
    let mut points = Vec::with_capacity(t.points.len());
    let mut source_frames = Vec::with_capacity(t.points.len());
    let mut anchor = t.points[0];
    points.push(anchor);
    source_frames.push(t.start_frame);
    for (k, p) in t.points.iter().enumerate().skip(1) {
        if p.distance(&anchor) >= min_move_px {
            points.push(*p);
            source_frames.push(t.start_frame + k as i64);
            anchor = *p;
        }
    }
    if points.len() < 2 {
        return Err(TrimError::FullyStationary {
            retained: points.len(),
        });
    }
    let trajectory = MotionTrajectory::new(t.id.clone(), t.fps, t.start_frame, points)
        .expect("retained points form a valid trajectory");
    Ok(Trimmed {
        trajectory,
        source_frames,
    })
}

/// Scales all positions by the maximum Euclidean displacement from the
/// window's first point, so the output's maximum displacement is exactly 1.
pub fn normalize_window(w: &TrajectoryWindow) -> Result<TrajectoryWindow, FeatureError> {
    let first = w.points[0];
    let max_disp = w
        .points
        .iter()
        .map(|p| p.distance(&first))
        .fold(0.0f64, f64::max);
    if max_disp <= 0.0 {
        return Err(FeatureError::DegenerateWindow);
    }
    let points = w
        .points
        .iter()
        .map(|p| Point::new(p.x / max_disp, p.y / max_disp))
        .collect();
    Ok(TrajectoryWindow {
        source_id: w.source_id.clone(),
        window_start_frame: w.window_start_frame,
        length_frames: w.length_frames,
        fps: w.fps,
        points,
    })
}

/// Projects centered positions onto the first principal axis. Returns `None`
/// when the positions carry no variance.
pub fn principal_signal(points: &[Point], fps: f64) -> Option<Signal1D> {
    let n = points.len();
    if n < 2 {
        return None;
    }
    let mx = points.iter().map(|p| p.x).sum::<f64>() / n as f64;
    let my = points.iter().map(|p| p.y).sum::<f64>() / n as f64;
    let (mut cxx, mut cyy, mut cxy) = (0.0, 0.0, 0.0);
    for p in points {
        let dx = p.x - mx;
        let dy = p.y - my;
        cxx += dx * dx;
        cyy += dy * dy;
        cxy += dx * dy;
    }
    if cxx + cyy <= 0.0 {
        return None;
    }
    // Leading eigenvector of [[cxx, cxy], [cxy, cyy]].
    let half_trace = (cxx + cyy) / 2.0;
    let det_term = (((cxx - cyy) / 2.0).powi(2) + cxy * cxy).sqrt();
    let lambda = half_trace + det_term;
    let (mut vx, mut vy) = if cxy.abs() > 1e-300 {
        (lambda - cyy, cxy)
    } else if cxx >= cyy {
        (1.0, 0.0)
    } else {
        (0.0, 1.0)
    };
    let norm = (vx * vx + vy * vy).sqrt();
    vx /= norm;
    vy /= norm;
    // Deterministic orientation, keyed on the dominant component so that
    // near-axis motions project with a consistent sign regardless of noise
    // in the minor component.
    let flip = if vy.abs() > vx.abs() { vy < 0.0 } else { vx < 0.0 };
    if flip {
        vx = -vx;
        vy = -vy;
    }
    let samples = points
        .iter()
        .map(|p| (p.x - mx) * vx + (p.y - my) * vy)
        .collect();
    Some(Signal1D::new(fps, samples))
}

/// Computes the canonical 27-value descriptor of a normalized window.
///
/// Frequency features (5-13) and the decay pair are computed on the principal
/// signal; zero-crossing features on the per-axis signals; spans on the
/// normalized positions; displacement coefficients on the cumulative path
/// length. A zero-variance principal axis zeroes the frequency features, with
/// `dom_freq_hz == 0` doubling as the no-periodicity marker.
pub fn extract_features(w: &TrajectoryWindow) -> Result<FeatureVector, FeatureError> {
    let n = w.points.len();
    if n < 8 {
        return Err(FeatureError::InsufficientLength { len: n, min: 8 });
    }
    let fps = w.fps;
    let xs = Signal1D::new(fps, w.points.iter().map(|p| p.x).collect());
    let ys = Signal1D::new(fps, w.points.iter().map(|p| p.y).collect());

    let mut v = [0.0; FEATURE_COUNT];

    let zc_x = dsp::zero_crossings(&xs);
    let zc_y = dsp::zero_crossings(&ys);
    v[0] = zc_x.count as f64;
    v[1] = zc_y.count as f64;
    v[2] = crossing_interval_variance(&zc_x.crossing_indices, fps);
    v[3] = crossing_interval_variance(&zc_y.crossing_indices, fps);

    if let Some(principal) = principal_signal(&w.points, fps) {
        let dom = dsp::dominant_frequency(&principal)
            .expect("length checked above");
        v[4] = dom.hz;

        let ac = dsp::autocorrelation(&principal).expect("length checked above");
        if !ac.degenerate {
            if dom.periodic && dom.hz > 0.0 {
                let lag = (fps / dom.hz).round() as usize;
                if lag < ac.r.len() {
                    v[5] = ac.r.samples[lag];
                }
            }
            let peaks = dsp::find_peaks(&ac.r, PEAK_PROMINENCE_RATIO);
            if let Some((best_idx, best_height)) = peaks
                .all
                .indices
                .iter()
                .zip(&peaks.all.heights)
                .max_by(|a, b| a.1.total_cmp(b.1))
            {
                v[6] = *best_height;
                v[7] = fps / *best_idx as f64;
            }
            v[8] = peaks.all.len() as f64;
            v[9] = peaks.prominent.len() as f64;
            v[10] = peaks.weak.len() as f64;
            v[11] = first_peak_after_sign_change(&ac.r.samples, &peaks.all.indices);
        }

        let ms = principal.samples.iter().map(|s| s * s).sum::<f64>() / n as f64;
        v[12] = ms.sqrt();

        let (slope, intercept) = envelope_decay(&principal, v[4]);
        v[25] = slope;
        v[26] = intercept;
    }

    v[13] = max_pairwise_distance(&w.points);
    v[14] = axis_range(w.points.iter().map(|p| p.x));
    v[15] = axis_range(w.points.iter().map(|p| p.y));

    let ts: Vec<f64> = (0..n).map(|i| i as f64 / fps).collect();
    let cum_overall = cumulative(w.points.windows(2).map(|p| p[1].distance(&p[0])));
    let cum_x = cumulative(w.points.windows(2).map(|p| (p[1].x - p[0].x).abs()));
    let cum_y = cumulative(w.points.windows(2).map(|p| (p[1].y - p[0].y).abs()));
    for (offset, cum) in [(16, &cum_overall), (19, &cum_x), (22, &cum_y)] {
        let fit = dsp::polyfit(&ts, cum, 2).expect("distinct sample times");
        v[offset] = fit.coefficients[0];
        v[offset + 1] = fit.coefficients[1];
        v[offset + 2] = fit.coefficients[2];
    }

    Ok(FeatureVector { values: v })
}

/// Population variance of the inter-crossing intervals, in seconds squared.
/// Fewer than two intervals yields 0.
fn crossing_interval_variance(crossings: &[usize], fps: f64) -> f64 {
    if crossings.len() < 3 {
        return 0.0;
    }
    let intervals: Vec<f64> = crossings
        .windows(2)
        .map(|c| (c[1] - c[0]) as f64 / fps)
        .collect();
    let mean = intervals.iter().sum::<f64>() / intervals.len() as f64;
    intervals.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / intervals.len() as f64
}

/// Height of the first local maximum after the autocorrelation's first sign
/// change, or 0 when either is missing. `r(0) = 1`, so the first sign change
/// is the first dip below zero.
fn first_peak_after_sign_change(r: &[f64], peak_indices: &[usize]) -> f64 {
    let first_negative = match r.iter().position(|&v| v < 0.0) {
        Some(i) => i,
        None => return 0.0,
    };
    peak_indices
        .iter()
        .find(|&&i| i > first_negative)
        .map(|&i| r[i])
        .unwrap_or(0.0)
}

fn max_pairwise_distance(points: &[Point]) -> f64 {
    let mut best = 0.0f64;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            best = best.max(a.distance(b));
        }
    }
    best
}

fn axis_range(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let min = values.clone().fold(f64::INFINITY, f64::min);
    let max = values.fold(f64::NEG_INFINITY, f64::max);
    max - min
}

/// Cumulative sum with a leading zero, giving one value per sample.
fn cumulative(increments: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = vec![0.0];
    for inc in increments {
        acc += inc;
        out.push(acc);
    }
    out
}

/// Degree-1 fit of the rectified principal signal's envelope against time.
///
/// The envelope is the per-period maximum of |s|, linearly interpolated to
/// every sample; the period comes from the dominant frequency, or the whole
/// window when there is none. Returns (slope, intercept).
fn envelope_decay(principal: &Signal1D, dom_freq_hz: f64) -> (f64, f64) {
    let n = principal.len();
    let fps = principal.fps;
    let period = if dom_freq_hz > 0.0 {
        ((fps / dom_freq_hz).round() as usize).clamp(1, n)
    } else {
        n
    };
    // One knot per period block, at the block center.
    let mut knots: Vec<(f64, f64)> = Vec::new();
    let mut start = 0;
    while start < n {
        let end = (start + period).min(n);
        let max_abs = principal.samples[start..end]
            .iter()
            .map(|s| s.abs())
            .fold(0.0f64, f64::max);
        let center = (start + end - 1) as f64 / 2.0;
        knots.push((center, max_abs));
        start = end;
    }
    // Interpolate the envelope at every sample index.
    let envelope: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64;
            match knots.iter().position(|&(kt, _)| kt >= t) {
                Some(0) => knots[0].1,
                None => knots.last().unwrap().1,
                Some(j) => {
                    let (t0, v0) = knots[j - 1];
                    let (t1, v1) = knots[j];
                    v0 + (v1 - v0) * (t - t0) / (t1 - t0)
                }
            }
        })
        .collect();
    let ts: Vec<f64> = (0..n).map(|i| i as f64 / fps).collect();
    match dsp::polyfit(&ts, &envelope, 1) {
        Ok(fit) => (fit.coefficients[1], fit.coefficients[0]),
        Err(_) => (0.0, 0.0),
    }
}
