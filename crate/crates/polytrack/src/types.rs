//! Shared domain types: object categories, oriented boxes, detections and
//! tracklets.

use std::fmt;

use crate::motion::{FilterState, MotionModel};

/// The seven tracked object categories, with a stable index in `[0, 7)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    Car,
    Bicycle,
    Motorcycle,
    Pedestrian,
    Bus,
    Trailer,
    Truck,
}

impl Category {
    pub const COUNT: usize = 7;

    pub const ALL: [Category; Category::COUNT] = [
        Category::Car,
        Category::Bicycle,
        Category::Motorcycle,
        Category::Pedestrian,
        Category::Bus,
        Category::Trailer,
        Category::Truck,
    ];

    /// Stable integer index of this category.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Category> {
        Category::ALL.get(index).copied()
    }

    /// Canonical lower-case name used by file formats and config keys.
    pub fn name(self) -> &'static str {
        match self {
            Category::Car => "car",
            Category::Bicycle => "bicycle",
            Category::Motorcycle => "motorcycle",
            Category::Pedestrian => "pedestrian",
            Category::Bus => "bus",
            Category::Trailer => "trailer",
            Category::Truck => "truck",
        }
    }

    /// Parses a category token. Accepts the canonical name plus the common
    /// short forms (bic, moto, ped, tra, tru).
    pub fn parse(token: &str) -> Option<Category> {
        match token.to_ascii_lowercase().as_str() {
            "car" => Some(Category::Car),
            "bicycle" | "bic" => Some(Category::Bicycle),
            "motorcycle" | "moto" => Some(Category::Motorcycle),
            "pedestrian" | "ped" => Some(Category::Pedestrian),
            "bus" => Some(Category::Bus),
            "trailer" | "tra" => Some(Category::Trailer),
            "truck" | "tru" => Some(Category::Truck),
            _ => None,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_yaw(yaw: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut wrapped = yaw.rem_euclid(two_pi);
    if wrapped > std::f64::consts::PI {
        wrapped -= two_pi;
    }
    wrapped
}

/// Oriented 3D bounding box in a fixed world frame.
///
/// `size` is (length, width, height); `yaw` rotates the footprint about the
/// vertical axis and is kept in `(-pi, pi]`; `velocity` is the planar
/// (vx, vy) world-frame velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box3D {
    pub center: [f64; 3],
    pub size: [f64; 3],
    pub yaw: f64,
    pub velocity: [f64; 2],
}

impl Box3D {
    pub fn new(center: [f64; 3], size: [f64; 3], yaw: f64, velocity: [f64; 2]) -> Box3D {
        Box3D {
            center,
            size,
            yaw: normalize_yaw(yaw),
            velocity,
        }
    }

    /// Checks the box invariants: positive extents, finite components.
    pub fn validate(&self) -> std::result::Result<(), String> {
        for (value, label) in self
            .center
            .iter()
            .map(|v| (*v, "center"))
            .chain(self.size.iter().map(|v| (*v, "size")))
            .chain([(self.yaw, "yaw")])
            .chain(self.velocity.iter().map(|v| (*v, "velocity")))
        {
            if !value.is_finite() {
                return Err(format!("non-finite {label} component"));
            }
        }
        if self.size.iter().any(|&s| s <= 0.0) {
            return Err(format!(
                "box size must be positive, got ({}, {}, {})",
                self.size[0], self.size[1], self.size[2]
            ));
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        self.size[0] * self.size[1] * self.size[2]
    }

    pub fn bottom_z(&self) -> f64 {
        self.center[2] - self.size[2] / 2.0
    }

    pub fn top_z(&self) -> f64 {
        self.center[2] + self.size[2] / 2.0
    }
}

/// One detector output for one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub box3d: Box3D,
    /// Detector confidence in `[0, 1]`.
    pub score: f64,
    pub category: Category,
    pub frame_index: usize,
    /// Unique within its frame; used for deterministic tie-breaks.
    pub detection_id: u32,
}

/// Tracklet life-cycle status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Terminated,
}

impl TrackStatus {
    pub fn name(self) -> &'static str {
        match self {
            TrackStatus::Tentative => "tentative",
            TrackStatus::Confirmed => "confirmed",
            TrackStatus::Terminated => "terminated",
        }
    }

    pub fn parse(token: &str) -> Option<TrackStatus> {
        match token {
            "tentative" => Some(TrackStatus::Tentative),
            "confirmed" => Some(TrackStatus::Confirmed),
            "terminated" => Some(TrackStatus::Terminated),
            _ => None,
        }
    }
}

impl fmt::Display for TrackStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A persistent tracked identity.
///
/// The motion filter carries the time-variant state (position, heading,
/// speed); `time_invariant` carries the median-smoothed box extents.
/// `score_avg` is the exponentially weighted score used for soft
/// termination, `score_latest` the last (possibly decayed) detection score.
#[derive(Debug, Clone)]
pub struct Tracklet {
    pub track_id: u64,
    pub category: Category,
    pub filter: FilterState,
    pub model: MotionModel,
    pub score_avg: f64,
    pub score_latest: f64,
    /// Matched frames since birth.
    pub hits: u32,
    /// Consecutive unmatched frames.
    pub misses: u32,
    /// Frames since birth.
    pub age: u32,
    pub status: TrackStatus,
    /// Median-smoothed (length, width, height).
    pub time_invariant: [f64; 3],
    pub size_history: Vec<[f64; 3]>,
}

impl Tracklet {
    /// Current state vector of the motion filter.
    pub fn state_vector(&self) -> &crate::motion::StateVector {
        &self.filter.x
    }

    /// Current state covariance of the motion filter.
    pub fn covariance(&self) -> &crate::motion::StateMatrix {
        &self.filter.p
    }

    /// Box reconstructed from the filter state and smoothed extents.
    pub fn current_box(&self) -> Box3D {
        let x = &self.filter.x;
        let yaw = x[self.model.yaw_index()];
        let velocity = self.model.planar_velocity(x);
        Box3D::new([x[0], x[1], x[2]], self.time_invariant, yaw, velocity)
    }
}
