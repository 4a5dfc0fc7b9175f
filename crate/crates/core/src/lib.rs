//! Engine for detecting, clustering, counting and recognizing repetitive
//! exercise motion in 2-D keypoint trajectories.
//!
//! The pipeline ingests trajectories produced by any upstream point tracker,
//! classifies sliding windows as exercise or not, groups co-located and
//! co-phased exercise segments into clusters, and derives a repetition count
//! and exercise label for each cluster. A synthetic-trajectory generator with
//! analytic ground truth doubles as the verification harness.

pub mod analytics;
pub mod cluster;
pub mod config;
pub mod detect;
pub mod dsp;
pub mod eval;
pub mod features;
pub mod formats;
pub mod nn;
pub mod pipeline;
pub mod report;
pub mod synth;
pub mod trajectory;
