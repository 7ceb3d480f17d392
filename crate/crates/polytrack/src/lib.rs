//! polytrack: a tracking-by-detection 3D multi-object tracking engine.
//!
//! Per-frame 3D detections flow through score filtering and rotated NMS,
//! voxel-masked geometric association (Hungarian / Greedy / MNN / DTO
//! multi-hypothesis), confidence-weighted adaptive Kalman filtering and
//! confidence-count mixed life-cycle management. An evaluation harness
//! computes CLEAR-MOT and recall-sweep metrics (MOTA, AMOTA, AMOTP,
//! sAMOTA) against ground truth and generates synthetic scenarios for
//! verification.

pub mod association;
pub mod config;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod lifecycle;
pub mod motion;
pub mod pipeline;
pub mod types;

pub use config::{default_config, validate_config, LifeCycleMode, Solver, TrackerConfig};
pub use error::{Error, Result};
pub use pipeline::{run_sequence, FrameInput, FrameOutput, Tracker};
pub use types::{Box3D, Category, Detection, TrackStatus, Tracklet};
