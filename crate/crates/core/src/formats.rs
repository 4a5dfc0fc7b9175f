//! On-disk contracts: trajectory JSON lines, the box configuration document,
//! ground-truth JSON lines and the versioned model bundle.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FEATURE_VERSION;
use crate::nn::{MlpModel, TrainConfig};
use crate::trajectory::{BoundingBox, MotionTrajectory, TrajectoryRecord};

pub const BUNDLE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("invalid box configuration: {0}")]
    BadBoxes(String),
    #[error("unsupported bundle version {found}, expected {expected}")]
    BundleVersion { found: u32, expected: u32 },
    #[error("bundle feature version {found} does not match this build ({expected})")]
    FeatureVersion { found: u32, expected: u32 },
    #[error("{0}")]
    Invalid(String),
}

/// Writes trajectories in the JSON-lines interchange format, one object per
/// line.
pub fn write_trajectories<W: Write>(
    mut writer: W,
    trajectories: &[MotionTrajectory],
) -> Result<(), FormatError> {
    for t in trajectories {
        let record = TrajectoryRecord::from(t);
        serde_json::to_writer(&mut writer, &record)
            .map_err(|e| FormatError::Invalid(e.to_string()))?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// The box configuration document: `{"boxes": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxConfig {
    pub boxes: Vec<BoundingBox>,
}

pub fn read_boxes<R: std::io::Read>(reader: R) -> Result<Vec<BoundingBox>, FormatError> {
    let cfg: BoxConfig =
        serde_json::from_reader(reader).map_err(|e| FormatError::BadBoxes(e.to_string()))?;
    crate::trajectory::validate_boxes(&cfg.boxes)
        .map_err(|e| FormatError::BadBoxes(e.to_string()))?;
    Ok(cfg.boxes)
}

pub fn write_boxes<W: Write>(mut writer: W, boxes: &[BoundingBox]) -> Result<(), FormatError> {
    let cfg = BoxConfig { boxes: boxes.to_vec() };
    serde_json::to_writer_pretty(&mut writer, &cfg)
        .map_err(|e| FormatError::Invalid(e.to_string()))?;
    writer.write_all(b"\n")?;
    Ok(())
}

/// One ground-truth annotation. The subject is either a trajectory (`id`)
/// or a station region (`region`, a box id); exercise-level truth for
/// cluster evaluation uses regions, per-trajectory truth uses ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<String>,
    pub start_frame: i64,
    pub end_frame: i64,
    pub reps: f64,
}

impl GroundTruthRecord {
    /// Whether this annotation marks exercise motion: a known exercise class,
    /// or an unknown class with a positive repetition count.
    pub fn is_exercise(&self) -> bool {
        match self.class.as_deref().and_then(crate::synth::MotionKind::from_name) {
            Some(kind) => kind.is_exercise(),
            None => self.reps > 0.0,
        }
    }
}

pub fn read_ground_truth<R: BufRead>(reader: R) -> Result<Vec<GroundTruthRecord>, FormatError> {
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let record: GroundTruthRecord =
            serde_json::from_str(trimmed).map_err(|e| FormatError::Malformed {
                line: idx + 1,
                message: e.to_string(),
            })?;
        if record.id.is_none() && record.region.is_none() {
            return Err(FormatError::Malformed {
                line: idx + 1,
                message: "record needs an 'id' or a 'region'".into(),
            });
        }
        records.push(record);
    }
    Ok(records)
}

pub fn write_ground_truth<W: Write>(
    mut writer: W,
    records: &[GroundTruthRecord],
) -> Result<(), FormatError> {
    for r in records {
        serde_json::to_writer(&mut writer, r).map_err(|e| FormatError::Invalid(e.to_string()))?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// The self-describing bundle of trained models. Models a corpus could not
/// support are absent; the pipeline requires what it actually uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub bundle_version: u32,
    pub feature_version: u32,
    pub seed: u64,
    /// Recognition class names, index-aligned with the recognizer output.
    pub classes: Vec<String>,
    pub train_config: TrainConfig,
    pub detector: Option<MlpModel>,
    pub regressor: Option<MlpModel>,
    pub recognizer: Option<MlpModel>,
}

impl ModelBundle {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bundle serializes")
    }

    pub fn from_json(text: &str) -> Result<ModelBundle, FormatError> {
        let bundle: ModelBundle =
            serde_json::from_str(text).map_err(|e| FormatError::Invalid(e.to_string()))?;
        if bundle.bundle_version != BUNDLE_VERSION {
            return Err(FormatError::BundleVersion {
                found: bundle.bundle_version,
                expected: BUNDLE_VERSION,
            });
        }
        if bundle.feature_version != FEATURE_VERSION {
            return Err(FormatError::FeatureVersion {
                found: bundle.feature_version,
                expected: FEATURE_VERSION,
            });
        }
        Ok(bundle)
    }
}
