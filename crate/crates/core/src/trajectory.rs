//! Domain model for keypoint motion trajectories and everything derived from
//! them: sliding windows, exercise segments, station bounding boxes, clusters
//! and combined trajectories.
//!
//! A trajectory is the time-ordered 2-D path of one tracked image point at a
//! fixed frame rate. Sampling is uniform: point `k` sits at frame
//! `start_frame + k`. Gap filling, if any, is the upstream tracker's job.

use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A 2-D position in pixel coordinates of the camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// One keypoint's time-stamped 2-D path, the unit the whole pipeline consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionTrajectory {
    pub id: String,
    /// Frames per second, > 0.
    pub fps: f64,
    /// Frame index of the first point, >= 0.
    pub start_frame: i64,
    pub points: Vec<Point>,
}

#[derive(Debug, Error, PartialEq)]
pub enum TrajectoryError {
    #[error("trajectory has no points")]
    Empty,
    #[error("fps must be positive and finite, got {0}")]
    InvalidFps(f64),
    #[error("start_frame must be >= 0, got {0}")]
    NegativeStartFrame(i64),
    #[error("point {index} is not finite")]
    NonFinitePoint { index: usize },
}

impl MotionTrajectory {
    /// Validates the type invariants. The lifespan cap is enforced at
    /// ingestion, not here, because it is configuration.
    pub fn new(
        id: impl Into<String>,
        fps: f64,
        start_frame: i64,
        points: Vec<Point>,
    ) -> Result<Self, TrajectoryError> {
        if points.is_empty() {
            return Err(TrajectoryError::Empty);
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(TrajectoryError::InvalidFps(fps));
        }
        if start_frame < 0 {
            return Err(TrajectoryError::NegativeStartFrame(start_frame));
        }
        if let Some(index) = points.iter().position(|p| !p.is_finite()) {
            return Err(TrajectoryError::NonFinitePoint { index });
        }
        Ok(MotionTrajectory {
            id: id.into(),
            fps,
            start_frame,
            points,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.points.len() as f64 / self.fps
    }

    /// Frame index of the last point (inclusive).
    pub fn end_frame(&self) -> i64 {
        self.start_frame + self.points.len() as i64 - 1
    }

    /// Point at an absolute frame index, if covered.
    pub fn point_at_frame(&self, frame: i64) -> Option<Point> {
        if frame < self.start_frame {
            return None;
        }
        self.points.get((frame - self.start_frame) as usize).copied()
    }
}

/// A fixed-length excerpt of a trajectory, the unit of classification.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryWindow {
    pub source_id: String,
    pub window_start_frame: i64,
    pub length_frames: usize,
    pub fps: f64,
    pub points: Vec<Point>,
}

impl TrajectoryWindow {
    /// Frame index of the last sample (inclusive).
    pub fn end_frame(&self) -> i64 {
        self.window_start_frame + self.length_frames as i64 - 1
    }
}

/// Cuts sliding windows of `window_s` seconds every `stride_s` seconds.
///
/// Windows are fully contained in the trajectory; a trajectory shorter than
/// one window yields an empty list.
pub fn slide_windows(
    t: &MotionTrajectory,
    window_s: f64,
    stride_s: f64,
) -> Vec<TrajectoryWindow> {
    assert!(window_s > 0.0 && stride_s > 0.0, "window and stride must be positive");
    let win = (window_s * t.fps).round() as usize;
    let stride = (stride_s * t.fps).round() as usize;
    assert!(win >= 1 && stride >= 1, "window and stride must round to >= 1 frame");

    let n = t.points.len();
    if n < win {
        return Vec::new();
    }
    let count = (n - win) / stride + 1;
    (0..count)
        .map(|k| {
            let start = k * stride;
            TrajectoryWindow {
                source_id: t.id.clone(),
                window_start_frame: t.start_frame + start as i64,
                length_frames: win,
                fps: t.fps,
                points: t.points[start..start + win].to_vec(),
            }
        })
        .collect()
}

/// A maximal run of positively classified windows on one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExerciseSegment {
    pub source_id: String,
    /// First covered frame (inclusive).
    pub start_frame: i64,
    /// Last covered frame (inclusive).
    pub end_frame: i64,
    /// Indices of member windows in the window list the segment was built from.
    pub windows: Vec<usize>,
    /// Mean positive probability over member windows.
    pub label_confidence: f64,
}

/// A manually configured image region around one exercise station.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub id: u32,
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum BoxError {
    #[error("box {id}: x_min/y_min must be strictly below x_max/y_max")]
    Degenerate { id: u32 },
    #[error("boxes {a} and {b} overlap")]
    Overlapping { a: u32, b: u32 },
    #[error("duplicate box id {0}")]
    DuplicateId(u32),
}

impl BoundingBox {
    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    pub fn center(&self) -> Point {
        Point::new((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)
    }

    fn overlaps(&self, other: &BoundingBox) -> bool {
        self.x_min < other.x_max
            && other.x_min < self.x_max
            && self.y_min < other.y_max
            && other.y_min < self.y_max
    }
}

/// Checks that every box is well-formed, ids are unique and no two boxes
/// overlap. Boxes in one configuration bootstrap spatial clustering, so an
/// overlap would make assignment ambiguous.
pub fn validate_boxes(boxes: &[BoundingBox]) -> Result<(), BoxError> {
    let mut seen = std::collections::BTreeSet::new();
    for b in boxes {
        if !(b.x_min < b.x_max && b.y_min < b.y_max) {
            return Err(BoxError::Degenerate { id: b.id });
        }
        if !seen.insert(b.id) {
            return Err(BoxError::DuplicateId(b.id));
        }
    }
    for (i, a) in boxes.iter().enumerate() {
        for b in &boxes[i + 1..] {
            if a.overlaps(b) {
                return Err(BoxError::Overlapping { a: a.id, b: b.id });
            }
        }
    }
    Ok(())
}

/// The duration-weighted average path of a cluster's members, Hann-smoothed.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedTrajectory {
    pub fps: f64,
    pub start_frame: i64,
    pub points: Vec<Point>,
    /// True when frames with no live member had to be gap-filled by linear
    /// interpolation.
    pub interpolated_gaps: bool,
}

impl CombinedTrajectory {
    pub fn end_frame(&self) -> i64 {
        self.start_frame + self.points.len() as i64 - 1
    }
}

/// A connected set of co-located, co-phased segments plus its combined
/// trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ExerciseCluster {
    pub box_id: u32,
    /// Indices into the pipeline's flat segment list.
    pub member_segments: Vec<usize>,
    pub combined: CombinedTrajectory,
    pub start_frame: i64,
    pub end_frame: i64,
}

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

/// Wire format of one trajectory record (JSON lines, one object per line).
#[derive(Debug, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub id: String,
    pub fps: f64,
    pub start_frame: i64,
    pub points: Vec<[f64; 2]>,
}

impl From<&MotionTrajectory> for TrajectoryRecord {
    fn from(t: &MotionTrajectory) -> Self {
        TrajectoryRecord {
            id: t.id.clone(),
            fps: t.fps,
            start_frame: t.start_frame,
            points: t.points.iter().map(|p| [p.x, p.y]).collect(),
        }
    }
}

/// Why a record that parsed cleanly was still not accepted.
#[derive(Debug, Clone, PartialEq)]
pub enum RejectReason {
    Empty,
    InvalidFps(f64),
    NegativeStartFrame(i64),
    NonFinitePoint { index: usize },
    LifespanExceeded { duration_s: f64, max_s: f64 },
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RejectReason::Empty => f.write_str("no points"),
            RejectReason::InvalidFps(v) => write!(f, "fps must be positive and finite, got {v}"),
            RejectReason::NegativeStartFrame(v) => write!(f, "start_frame must be >= 0, got {v}"),
            RejectReason::NonFinitePoint { index } => write!(f, "point {index} is not finite"),
            RejectReason::LifespanExceeded { duration_s, max_s } => {
                write!(f, "duration {duration_s:.3} s exceeds max lifespan {max_s} s")
            }
        }
    }
}

/// A record that failed validation, with enough context to report it.
#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub line: usize,
    pub id: String,
    pub reason: RejectReason,
}

/// A line that did not parse as a trajectory record at all.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseFailure {
    pub line: usize,
    pub message: String,
}

/// Total accounting of one ingestion pass: every input record lands in
/// exactly one of the three buckets.
#[derive(Debug, Default)]
pub struct IngestOutcome {
    pub accepted: Vec<MotionTrajectory>,
    pub rejected: Vec<Rejection>,
    pub parse_errors: Vec<ParseFailure>,
}

impl IngestOutcome {
    pub fn total_records(&self) -> usize {
        self.accepted.len() + self.rejected.len() + self.parse_errors.len()
    }
}

/// Reads trajectory records from a JSON-lines stream.
///
/// Blank lines are skipped. Records longer than `max_lifespan_s` are rejected
/// with their id; malformed lines become parse failures naming the line
/// number. Input order is preserved within each bucket.
pub fn ingest_trajectories<R: BufRead>(
    reader: R,
    max_lifespan_s: f64,
) -> std::io::Result<IngestOutcome> {
    let mut out = IngestOutcome::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let record: TrajectoryRecord = match serde_json::from_str(trimmed) {
            Ok(r) => r,
            Err(e) => {
                out.parse_errors.push(ParseFailure {
                    line: lineno,
                    message: e.to_string(),
                });
                continue;
            }
        };
        match validate_record(record, max_lifespan_s) {
            Ok(t) => out.accepted.push(t),
            Err((id, reason)) => out.rejected.push(Rejection {
                line: lineno,
                id,
                reason,
            }),
        }
    }
    Ok(out)
}

fn validate_record(
    record: TrajectoryRecord,
    max_lifespan_s: f64,
) -> Result<MotionTrajectory, (String, RejectReason)> {
    let points: Vec<Point> = record.points.iter().map(|p| Point::new(p[0], p[1])).collect();
    let t = MotionTrajectory::new(record.id.clone(), record.fps, record.start_frame, points)
        .map_err(|e| {
            let reason = match e {
                TrajectoryError::Empty => RejectReason::Empty,
                TrajectoryError::InvalidFps(v) => RejectReason::InvalidFps(v),
                TrajectoryError::NegativeStartFrame(v) => RejectReason::NegativeStartFrame(v),
                TrajectoryError::NonFinitePoint { index } => RejectReason::NonFinitePoint { index },
            };
            (record.id.clone(), reason)
        })?;
    let duration_s = t.duration_s();
    if duration_s > max_lifespan_s {
        return Err((
            record.id,
            RejectReason::LifespanExceeded {
                duration_s,
                max_s: max_lifespan_s,
            },
        ));
    }
    Ok(t)
}
