//! Pipeline configuration with the documented defaults: 11 s keypoint
//! lifespan, 5 s windows at 1 s stride, 4 px stationary threshold, 3-vote
//! smoothing and a 15-degree phase gate. Every value can be overridden by a
//! JSON config file, and any file field left out keeps its default.

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterConfig;
use crate::detect::DetectorConfig;
use crate::nn::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Trajectories longer than this are rejected at ingestion (seconds).
    pub max_lifespan_s: f64,
    /// Sliding-window length in seconds.
    pub window_s: f64,
    /// Sliding-window stride in seconds.
    pub stride_s: f64,
    /// Minimum inter-sample movement; slower samples are trimmed (pixels).
    pub min_move_px: f64,
    /// Repetition counts below this are excluded from regressor training.
    pub min_training_reps: f64,
    pub detector: DetectorConfig,
    pub cluster: ClusterConfig,
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            max_lifespan_s: 11.0,
            window_s: 5.0,
            stride_s: 1.0,
            min_move_px: 4.0,
            min_training_reps: 5.0,
            detector: DetectorConfig::default(),
            cluster: ClusterConfig::default(),
            train: TrainConfig::default(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    /// Applies a seed override to every seeded component.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.train.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.max_lifespan_s > 0.0) {
            return Err("max_lifespan_s must be positive".into());
        }
        if !(self.window_s > 0.0 && self.stride_s > 0.0) {
            return Err("window_s and stride_s must be positive".into());
        }
        if self.min_move_px < 0.0 {
            return Err("min_move_px must be non-negative".into());
        }
        if self.detector.vote_k == 0 || self.detector.vote_k % 2 == 0 {
            return Err("detector.vote_k must be odd and >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.detector.threshold) {
            return Err("detector.threshold must be in [0, 1]".into());
        }
        if !(self.cluster.phase_threshold_deg >= 0.0) {
            return Err("cluster.phase_threshold_deg must be non-negative".into());
        }
        Ok(())
    }
}
