//! The analytics report: everything one pipeline run produced, as a
//! schema-versioned JSON document. Reports are deterministic for fixed
//! inputs and seed; nothing time- or host-dependent is recorded.

use serde::{Deserialize, Serialize};

use crate::analytics::RepEstimate;
use crate::config::PipelineConfig;
use crate::eval::EvalMetrics;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticsReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub seed: u64,
    pub config: PipelineConfig,
    pub ingestion: IngestionSummary,
    pub trajectories: Vec<TrajectoryReport>,
    /// Flat segment list; ids are indices into this list.
    pub segments: Vec<SegmentReport>,
    pub clusters: Vec<ClusterReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluation: Option<EvalMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestionSummary {
    pub accepted: usize,
    pub rejected: Vec<RejectedRecord>,
    pub parse_errors: Vec<ParseErrorRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedRecord {
    pub line: usize,
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseErrorRecord {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryReport {
    pub id: String,
    /// True when trimming left fewer than two samples; such trajectories
    /// carry no windows or segments but are still reported.
    pub stationary: bool,
    /// Windows whose normalization or feature extraction failed; classified
    /// as non-exercise.
    pub degenerate_windows: usize,
    pub windows: Vec<WindowReport>,
    /// Ids into the report's flat segment list.
    pub segment_ids: Vec<usize>,
}

/// One classified window, in source-frame time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub start_frame: i64,
    pub end_frame: i64,
    pub probability: f64,
    /// Label after vote smoothing.
    pub positive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentReport {
    pub id: usize,
    pub source_id: String,
    pub start_frame: i64,
    pub end_frame: i64,
    pub window_indices: Vec<usize>,
    pub label_confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub id: usize,
    pub box_id: u32,
    pub member_segments: Vec<usize>,
    pub combined: CombinedSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reps: Option<RepEstimate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recognition: Option<RecognitionReport>,
    /// Analytics steps that could not run (degenerate input and the like);
    /// recorded instead of silently dropped.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub analytics_errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedSummary {
    pub start_frame: i64,
    pub end_frame: i64,
    pub n_points: usize,
    pub interpolated_gaps: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognitionReport {
    pub label: String,
    pub label_index: usize,
    /// Renormalized probability per class, index-aligned with the bundle's
    /// class list; sums to 1.
    pub probabilities: Vec<f64>,
    pub windows_used: usize,
    pub single_window_fallback: bool,
}

impl AnalyticsReport {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<AnalyticsReport, String> {
        let report: AnalyticsReport = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if report.schema_version != REPORT_SCHEMA_VERSION {
            return Err(format!(
                "unsupported report schema version {}, expected {}",
                report.schema_version, REPORT_SCHEMA_VERSION
            ));
        }
        report.check_references()?;
        Ok(report)
    }

    /// Every id mentioned anywhere must resolve inside the report.
    pub fn check_references(&self) -> Result<(), String> {
        for (i, s) in self.segments.iter().enumerate() {
            if s.id != i {
                return Err(format!("segment {i} carries id {}", s.id));
            }
            if !self.trajectories.iter().any(|t| t.id == s.source_id) {
                return Err(format!("segment {i} references unknown trajectory '{}'", s.source_id));
            }
        }
        for t in &self.trajectories {
            for &sid in &t.segment_ids {
                if sid >= self.segments.len() {
                    return Err(format!("trajectory '{}' references segment {sid}", t.id));
                }
            }
        }
        for c in &self.clusters {
            for &sid in &c.member_segments {
                if sid >= self.segments.len() {
                    return Err(format!("cluster {} references segment {sid}", c.id));
                }
            }
            if let Some(r) = &c.recognition {
                let sum: f64 = r.probabilities.iter().sum();
                if (sum - 1.0).abs() > 1e-6 {
                    return Err(format!("cluster {} probabilities sum to {sum}", c.id));
                }
            }
        }
        Ok(())
    }
}
