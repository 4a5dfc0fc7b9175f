//! Groups exercise segments into clusters: spatially by station bounding box,
//! temporally by overlap, and within a box by phase agreement. Each connected
//! component of the phase-similarity graph becomes one cluster with a
//! combined, Hann-smoothed average trajectory.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::{self, Signal1D};
use crate::features::principal_signal;
use crate::trajectory::{
    BoundingBox, CombinedTrajectory, ExerciseSegment, MotionTrajectory, Point,
};

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("no bounding boxes configured")]
    NoBoxes,
    #[error("segment references unknown trajectory '{0}'")]
    UnknownTrajectory(String),
}

/// One segment together with its source trajectory, the unit the clustering
/// operations work on.
#[derive(Debug, Clone, Copy)]
pub struct SegmentTrack<'a> {
    pub segment: &'a ExerciseSegment,
    pub trajectory: &'a MotionTrajectory,
}

impl SegmentTrack<'_> {
    /// Points of the source trajectory within the segment's frame span.
    fn segment_points(&self) -> Vec<Point> {
        self.frame_range()
            .filter_map(|f| self.trajectory.point_at_frame(f))
            .collect()
    }

    fn frame_range(&self) -> std::ops::RangeInclusive<i64> {
        self.segment.start_frame..=self.segment.end_frame
    }

    /// Mean position over the segment's span.
    pub fn centroid(&self) -> Point {
        let points = self.segment_points();
        let n = points.len().max(1) as f64;
        Point::new(
            points.iter().map(|p| p.x).sum::<f64>() / n,
            points.iter().map(|p| p.y).sum::<f64>() / n,
        )
    }
}

/// Knobs for phase-based grouping and trajectory combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    /// Maximum phase difference for an edge, in degrees.
    pub phase_threshold_deg: f64,
    /// Minimum temporal overlap in seconds (one period is also required).
    pub min_overlap_s: f64,
    /// Hann window for the combined trajectory, in seconds.
    pub smooth_window_s: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            phase_threshold_deg: 15.0,
            min_overlap_s: 2.0,
            smooth_window_s: 1.0,
        }
    }
}

/// Assigns each segment to the box containing its spatial centroid, falling
/// back to the nearest box center; ties break toward the lowest box id.
pub fn assign_to_boxes(
    segments: &[ExerciseSegment],
    trajectories: &BTreeMap<&str, &MotionTrajectory>,
    boxes: &[BoundingBox],
) -> Result<BTreeMap<u32, Vec<usize>>, ClusterError> {
    if boxes.is_empty() {
        return Err(ClusterError::NoBoxes);
    }
    let mut sorted: Vec<&BoundingBox> = boxes.iter().collect();
    sorted.sort_by_key(|b| b.id);

    let mut assignment: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, segment) in segments.iter().enumerate() {
        let trajectory = trajectories
            .get(segment.source_id.as_str())
            .ok_or_else(|| ClusterError::UnknownTrajectory(segment.source_id.clone()))?;
        let centroid = SegmentTrack { segment, trajectory }.centroid();
        let chosen = sorted
            .iter()
            .find(|b| b.contains(&centroid))
            .map(|b| b.id)
            .unwrap_or_else(|| {
                // Nearest center; the id-sorted scan makes ties pick the
                // lowest id.
                let mut best = (f64::INFINITY, sorted[0].id);
                for b in &sorted {
                    let d = b.center().distance(&centroid);
                    if d < best.0 {
                        best = (d, b.id);
                    }
                }
                best.1
            });
        assignment.entry(chosen).or_default().push(i);
    }
    Ok(assignment)
}

/// Phase offset between two segments in degrees, in [0, 180], or `None` when
/// they are not comparable: too little temporal overlap (below
/// `min_overlap_s` and one period), dominant frequencies more than one
/// spectral bin apart, or a degenerate overlap.
pub fn phase_difference(
    a: &SegmentTrack,
    b: &SegmentTrack,
    cfg: &ClusterConfig,
) -> Option<f64> {
    let fps = a.trajectory.fps;
    let start = a.segment.start_frame.max(b.segment.start_frame);
    let end = a.segment.end_frame.min(b.segment.end_frame);
    if end < start {
        return None;
    }
    let overlap_len = (end - start + 1) as usize;
    if (overlap_len as f64) < cfg.min_overlap_s * fps {
        return None;
    }

    let points_over = |track: &SegmentTrack| -> Option<Vec<Point>> {
        (start..=end)
            .map(|f| track.trajectory.point_at_frame(f))
            .collect()
    };
    let pa = points_over(a)?;
    let pb = points_over(b)?;
    let sa = principal_signal(&pa, fps)?;
    let sb = principal_signal(&pb, fps)?;

    let da = dsp::dominant_frequency(&sa).ok()?;
    let db = dsp::dominant_frequency(&sb).ok()?;
    if !(da.periodic && db.periodic) {
        return None;
    }
    let bin = fps / overlap_len as f64;
    if (da.hz - db.hz).abs() > bin + 1e-12 {
        return None;
    }
    let freq = 0.5 * (da.hz + db.hz);
    let period_frames = fps / freq;
    if (overlap_len as f64) < period_frames {
        return None;
    }

    let lag = best_cross_correlation_lag(&sa.samples, &sb.samples, period_frames.ceil() as i64)?;
    let phase = (360.0 * lag.abs() as f64 * freq / fps) % 360.0;
    Some(if phase > 180.0 { 360.0 - phase } else { phase })
}

/// Lag of the maximum of the normalized cross-correlation, searched within
/// +-max_lag. Returns `None` for zero-energy signals.
fn best_cross_correlation_lag(a: &[f64], b: &[f64], max_lag: i64) -> Option<i64> {
    let energy_a: f64 = a.iter().map(|v| v * v).sum();
    let energy_b: f64 = b.iter().map(|v| v * v).sum();
    let norm = (energy_a * energy_b).sqrt();
    if norm <= 0.0 {
        return None;
    }
    let n = a.len() as i64;
    let mut best: Option<(f64, i64)> = None;
    for lag in -max_lag..=max_lag {
        let mut acc = 0.0;
        for i in 0..n {
            let j = i + lag;
            if j >= 0 && j < n {
                acc += a[i as usize] * b[j as usize];
            }
        }
        let c = acc / norm;
        let better = match best {
            None => true,
            Some((bc, bl)) => c > bc || (c == bc && lag.abs() < bl.abs()),
        };
        if better {
            best = Some((c, lag));
        }
    }
    best.map(|(_, lag)| lag)
}

/// Binary symmetric phase-similarity matrix with a true diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseAdjacency {
    pub n: usize,
    matrix: Vec<bool>,
}

impl PhaseAdjacency {
    pub fn identity(n: usize) -> PhaseAdjacency {
        let mut adj = PhaseAdjacency { n, matrix: vec![false; n * n] };
        for i in 0..n {
            adj.set(i, i, true);
        }
        adj
    }

    pub fn at(&self, i: usize, j: usize) -> bool {
        self.matrix[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        self.matrix[i * self.n + j] = value;
        self.matrix[j * self.n + i] = value;
    }
}

/// Builds the adjacency over segments sharing one box: an edge where the
/// phase difference is defined and within the threshold.
pub fn build_adjacency(tracks: &[SegmentTrack], cfg: &ClusterConfig) -> PhaseAdjacency {
    let n = tracks.len();
    let mut adj = PhaseAdjacency::identity(n);
    for i in 0..n {
        for j in i + 1..n {
            if let Some(deg) = phase_difference(&tracks[i], &tracks[j], cfg) {
                if deg <= cfg.phase_threshold_deg {
                    adj.set(i, j, true);
                }
            }
        }
    }
    adj
}

/// Partitions indices into maximal connected sets, each sorted, ordered by
/// smallest member.
pub fn connected_components(adj: &PhaseAdjacency) -> Vec<Vec<usize>> {
    let n = adj.n;
    let mut visited = vec![false; n];
    let mut components = Vec::new();
    for start in 0..n {
        if visited[start] {
            continue;
        }
        let mut stack = vec![start];
        let mut component = Vec::new();
        visited[start] = true;
        while let Some(i) = stack.pop() {
            component.push(i);
            for j in 0..n {
                if !visited[j] && adj.at(i, j) {
                    visited[j] = true;
                    stack.push(j);
                }
            }
        }
        component.sort_unstable();
        components.push(component);
    }
    components
}

/// Per-frame mean over the members alive at that frame, with interior gaps
/// linearly interpolated. Returns the raw averaged points and whether any
/// gap filling happened.
fn average_members(tracks: &[SegmentTrack]) -> (i64, Vec<Point>, bool) {
    let start = tracks.iter().map(|t| t.segment.start_frame).min().unwrap();
    let end = tracks.iter().map(|t| t.segment.end_frame).max().unwrap();
    let len = (end - start + 1) as usize;
    let mut averaged: Vec<Option<Point>> = Vec::with_capacity(len);
    for frame in start..=end {
        let mut sum = Point::default();
        let mut alive = 0usize;
        for track in tracks {
            if frame >= track.segment.start_frame && frame <= track.segment.end_frame {
                if let Some(p) = track.trajectory.point_at_frame(frame) {
                    sum.x += p.x;
                    sum.y += p.y;
                    alive += 1;
                }
            }
        }
        averaged.push((alive > 0).then(|| Point::new(sum.x / alive as f64, sum.y / alive as f64)));
    }

    let mut gaps = false;
    let mut points = Vec::with_capacity(len);
    for i in 0..len {
        match averaged[i] {
            Some(p) => points.push(p),
            None => {
                gaps = true;
                // Interior gap: interpolate between the nearest known frames.
                // The span endpoints always belong to some member, so both
                // sides exist.
                let before = (0..i).rev().find(|&j| averaged[j].is_some()).unwrap();
                let after = (i + 1..len).find(|&j| averaged[j].is_some()).unwrap();
                let (p0, p1) = (averaged[before].unwrap(), averaged[after].unwrap());
                let alpha = (i - before) as f64 / (after - before) as f64;
                points.push(Point::new(
                    p0.x + alpha * (p1.x - p0.x),
                    p0.y + alpha * (p1.y - p0.y),
                ));
            }
        }
    }
    (start, points, gaps)
}

/// Assembles one cluster from a connected component: combined trajectory
/// plus the member ids and the temporal span they jointly cover.
pub fn build_cluster(
    box_id: u32,
    member_segments: Vec<usize>,
    tracks: &[SegmentTrack],
    cfg: &ClusterConfig,
) -> crate::trajectory::ExerciseCluster {
    let combined = combine_cluster(tracks, cfg);
    crate::trajectory::ExerciseCluster {
        box_id,
        member_segments,
        start_frame: combined.start_frame,
        end_frame: combined.end_frame(),
        combined,
    }
}

/// Combines a cluster's member segments into one representative trajectory:
/// the per-frame average over live members, gap-filled, then Hann-smoothed
/// on both axes.
pub fn combine_cluster(tracks: &[SegmentTrack], cfg: &ClusterConfig) -> CombinedTrajectory {
    assert!(!tracks.is_empty(), "cluster needs at least one member");
    let fps = tracks[0].trajectory.fps;
    let (start_frame, raw, interpolated_gaps) = average_members(tracks);

    let xs = Signal1D::new(fps, raw.iter().map(|p| p.x).collect());
    let ys = Signal1D::new(fps, raw.iter().map(|p| p.y).collect());
    let sx = dsp::hann_smooth(&xs, cfg.smooth_window_s);
    let sy = dsp::hann_smooth(&ys, cfg.smooth_window_s);
    let points = sx
        .samples
        .iter()
        .zip(&sy.samples)
        .map(|(&x, &y)| Point::new(x, y))
        .collect();
    CombinedTrajectory {
        fps,
        start_frame,
        points,
        interpolated_gaps,
    }
}
