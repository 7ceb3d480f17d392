//! Motion filtering: constant-velocity, constant-turn-rate-and-acceleration
//! and kinematic bicycle transitions under a shared 7-state Kalman filter,
//! with confidence-weighted updates and residual/velocity-driven noise
//! adaptation.
//!
//! State layouts:
//! - CV:      [x, y, z, yaw, vx, vy, vz]
//! - CTRA:    [x, y, z, v, a, yaw, yaw_rate]
//! - Bicycle: [x, y, z, v, a, yaw, steer]
//!
//! Measurements are always [x, y, z, yaw]. The weighted update uses
//! `x' = x + w K (z - H x)` and the matching Joseph-style covariance
//! `P' = (I - w K H) P (I - w K H)^T + w^2 K R K^T`, which reduce to the
//! standard forms at w = 1 and leave the prior untouched at w = 0.

use nalgebra::{SMatrix, SVector};

use crate::config::{MotionModelKind, TrackerConfig};
use crate::error::{Error, Result};
use crate::types::{normalize_yaw, Detection};

pub const STATE_DIM: usize = 7;
pub const MEAS_DIM: usize = 4;

pub type StateVector = SVector<f64, STATE_DIM>;
pub type StateMatrix = SMatrix<f64, STATE_DIM, STATE_DIM>;
pub type Measurement = SVector<f64, MEAS_DIM>;
pub type MeasMatrix = SMatrix<f64, MEAS_DIM, MEAS_DIM>;
pub type ObsMatrix = SMatrix<f64, MEAS_DIM, STATE_DIM>;

/// Turn rates / steering below this switch to the straight-line limit.
const TURN_EPS: f64 = 1e-6;

/// Window of the size median filter applied to box extents.
pub const SIZE_MEDIAN_WINDOW: usize = 5;

/// Concrete motion model of one tracklet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MotionModel {
    Cv,
    Ctra,
    Bicycle {
        /// Effective wheelbase in meters.
        wheelbase: f64,
        /// Distance from box center to the rear axle in meters.
        rear_offset: f64,
    },
}

impl MotionModel {
    /// Instantiates the configured model kind for a box of the given length.
    pub fn from_kind(kind: MotionModelKind, box_length: f64, cfg: &TrackerConfig) -> MotionModel {
        match kind {
            MotionModelKind::Cv => MotionModel::Cv,
            MotionModelKind::Ctra => MotionModel::Ctra,
            MotionModelKind::Bicycle => MotionModel::Bicycle {
                wheelbase: (cfg.wheelbase_ratio * box_length).max(1e-3),
                rear_offset: (cfg.rear_tire_ratio * box_length).max(1e-3),
            },
        }
    }

    /// Index of the yaw channel within the state vector.
    pub fn yaw_index(&self) -> usize {
        match self {
            MotionModel::Cv => 3,
            _ => 5,
        }
    }

    /// Linear map from state to the [x, y, z, yaw] measurement.
    pub fn observation_matrix(&self) -> ObsMatrix {
        let mut h = ObsMatrix::zeros();
        h[(0, 0)] = 1.0;
        h[(1, 1)] = 1.0;
        h[(2, 2)] = 1.0;
        h[(3, self.yaw_index())] = 1.0;
        h
    }

    /// Planar (vx, vy) velocity implied by the state.
    pub fn planar_velocity(&self, x: &StateVector) -> [f64; 2] {
        match self {
            MotionModel::Cv => [x[4], x[5]],
            MotionModel::Ctra | MotionModel::Bicycle { .. } => {
                let (sin_yaw, cos_yaw) = x[5].sin_cos();
                [x[3] * cos_yaw, x[3] * sin_yaw]
            }
        }
    }

    /// Applies the (possibly nonlinear) transition over `dt` seconds.
    pub fn transition(&self, x: &StateVector, dt: f64) -> StateVector {
        let mut next = *x;
        match *self {
            MotionModel::Cv => {
                next[0] += x[4] * dt;
                next[1] += x[5] * dt;
                next[2] += x[6] * dt;
            }
            MotionModel::Ctra => {
                let (v, a, yaw, omega) = (x[3], x[4], x[5], x[6]);
                let yaw1 = yaw + omega * dt;
                if omega.abs() > TURN_EPS {
                    let v1 = v + a * dt;
                    next[0] += (v1 * yaw1.sin() - v * yaw.sin()) / omega
                        + a * (yaw1.cos() - yaw.cos()) / (omega * omega);
                    next[1] += (v * yaw.cos() - v1 * yaw1.cos()) / omega
                        + a * (yaw1.sin() - yaw.sin()) / (omega * omega);
                } else {
                    let arc = v * dt + 0.5 * a * dt * dt;
                    next[0] += arc * yaw.cos();
                    next[1] += arc * yaw.sin();
                }
                next[3] = v + a * dt;
                next[5] = yaw1;
            }
            MotionModel::Bicycle {
                wheelbase,
                rear_offset,
            } => {
                let (v, a, yaw, steer) = (x[3], x[4], x[5], x[6]);
                let slip = (rear_offset / wheelbase * steer.tan()).atan();
                let arc = v * dt + 0.5 * a * dt * dt;
                let heading = yaw + slip;
                next[0] += arc * heading.cos();
                next[1] += arc * heading.sin();
                next[3] = v + a * dt;
                next[5] = yaw + arc * slip.sin() / rear_offset;
            }
        }
        next[self.yaw_index()] = normalize_yaw(next[self.yaw_index()]);
        next
    }

    /// Analytic Jacobian of [`MotionModel::transition`] at `x`.
    pub fn jacobian(&self, x: &StateVector, dt: f64) -> StateMatrix {
        let mut f = StateMatrix::identity();
        match *self {
            MotionModel::Cv => {
                f[(0, 4)] = dt;
                f[(1, 5)] = dt;
                f[(2, 6)] = dt;
            }
            MotionModel::Ctra => {
                let (v, a, yaw, omega) = (x[3], x[4], x[5], x[6]);
                let yaw1 = yaw + omega * dt;
                let (sin0, cos0) = yaw.sin_cos();
                let (sin1, cos1) = yaw1.sin_cos();
                if omega.abs() > TURN_EPS {
                    let v1 = v + a * dt;
                    let w2 = omega * omega;
                    let dx = (v1 * sin1 - v * sin0) / omega + a * (cos1 - cos0) / w2;
                    let dy = (v * cos0 - v1 * cos1) / omega + a * (sin1 - sin0) / w2;
                    f[(0, 3)] = (sin1 - sin0) / omega;
                    f[(0, 4)] = dt * sin1 / omega + (cos1 - cos0) / w2;
                    f[(0, 5)] = (v1 * cos1 - v * cos0) / omega - a * (sin1 - sin0) / w2;
                    f[(0, 6)] = v1 * dt * cos1 / omega - dx / omega - a * dt * sin1 / w2
                        - a * (cos1 - cos0) / (w2 * omega);
                    f[(1, 3)] = (cos0 - cos1) / omega;
                    f[(1, 4)] = -dt * cos1 / omega + (sin1 - sin0) / w2;
                    f[(1, 5)] = (v1 * sin1 - v * sin0) / omega + a * (cos1 - cos0) / w2;
                    f[(1, 6)] = v1 * dt * sin1 / omega - dy / omega + a * dt * cos1 / w2
                        - a * (sin1 - sin0) / (w2 * omega);
                } else {
                    let arc = v * dt + 0.5 * a * dt * dt;
                    let darc_domega = v * dt * dt / 2.0 + a * dt * dt * dt / 3.0;
                    f[(0, 3)] = dt * cos0;
                    f[(0, 4)] = 0.5 * dt * dt * cos0;
                    f[(0, 5)] = -arc * sin0;
                    f[(0, 6)] = -darc_domega * sin0;
                    f[(1, 3)] = dt * sin0;
                    f[(1, 4)] = 0.5 * dt * dt * sin0;
                    f[(1, 5)] = arc * cos0;
                    f[(1, 6)] = darc_domega * cos0;
                }
                f[(3, 4)] = dt;
                f[(5, 6)] = dt;
            }
            MotionModel::Bicycle {
                wheelbase,
                rear_offset,
            } => {
                let (v, a, yaw, steer) = (x[3], x[4], x[5], x[6]);
                let ratio = rear_offset / wheelbase;
                let tan_steer = steer.tan();
                let slip = (ratio * tan_steer).atan();
                // d slip / d steer = ratio sec^2(steer) / (1 + ratio^2 tan^2(steer))
                let sec2 = 1.0 + tan_steer * tan_steer;
                let dslip_dsteer = ratio * sec2 / (1.0 + ratio * ratio * tan_steer * tan_steer);
                let arc = v * dt + 0.5 * a * dt * dt;
                let heading = yaw + slip;
                let (sin_h, cos_h) = heading.sin_cos();
                let (sin_s, cos_s) = slip.sin_cos();
                f[(0, 3)] = dt * cos_h;
                f[(0, 4)] = 0.5 * dt * dt * cos_h;
                f[(0, 5)] = -arc * sin_h;
                f[(0, 6)] = -arc * sin_h * dslip_dsteer;
                f[(1, 3)] = dt * sin_h;
                f[(1, 4)] = 0.5 * dt * dt * sin_h;
                f[(1, 5)] = arc * cos_h;
                f[(1, 6)] = arc * cos_h * dslip_dsteer;
                f[(3, 4)] = dt;
                f[(5, 3)] = dt * sin_s / rear_offset;
                f[(5, 4)] = 0.5 * dt * dt * sin_s / rear_offset;
                f[(5, 6)] = arc * cos_s * dslip_dsteer / rear_offset;
            }
        }
        f
    }
}

/// Full Kalman filter state of one tracklet.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub x: StateVector,
    pub p: StateMatrix,
    pub q: StateMatrix,
    pub r: MeasMatrix,
    pub h: ObsMatrix,
    /// Frame period in seconds used by the next prediction.
    pub dt: f64,
}

impl FilterState {
    /// Initializes a filter from a detection under the given model.
    pub fn from_detection(det: &Detection, model: &MotionModel, cfg: &TrackerConfig) -> FilterState {
        let b = &det.box3d;
        let mut x = StateVector::zeros();
        x[0] = b.center[0];
        x[1] = b.center[1];
        x[2] = b.center[2];
        let mut p = StateMatrix::zeros();
        for i in 0..3 {
            p[(i, i)] = cfg.init_pos_var;
        }
        match model {
            MotionModel::Cv => {
                x[3] = b.yaw;
                x[4] = b.velocity[0];
                x[5] = b.velocity[1];
                p[(3, 3)] = cfg.init_yaw_var;
                for i in 4..7 {
                    p[(i, i)] = cfg.init_speed_var;
                }
            }
            MotionModel::Ctra | MotionModel::Bicycle { .. } => {
                x[3] = b.velocity[0].hypot(b.velocity[1]);
                x[5] = b.yaw;
                p[(3, 3)] = cfg.init_speed_var;
                p[(4, 4)] = cfg.init_speed_var;
                p[(5, 5)] = cfg.init_yaw_var;
                p[(6, 6)] = cfg.init_yaw_var;
            }
        }
        FilterState {
            x,
            p,
            q: StateMatrix::identity() * cfg.process_noise,
            r: MeasMatrix::identity() * cfg.measurement_noise,
            h: model.observation_matrix(),
            dt: cfg.frame_period,
        }
    }

    /// Measurement vector [x, y, z, yaw] of a detection box.
    pub fn measurement_of(det: &Detection) -> Measurement {
        Measurement::new(
            det.box3d.center[0],
            det.box3d.center[1],
            det.box3d.center[2],
            det.box3d.yaw,
        )
    }

    /// Innovation `z - H x` with the yaw component wrapped into `(-pi, pi]`.
    pub fn innovation(&self, z: &Measurement) -> Measurement {
        let mut y = z - self.h * self.x;
        y[3] = normalize_yaw(y[3]);
        y
    }
}

fn yaw_state_index(h: &ObsMatrix) -> usize {
    (0..STATE_DIM)
        .find(|&j| h[(3, j)] != 0.0)
        .unwrap_or(3)
}

/// Propagates state and covariance: `x <- f(x)`, `P <- F P F^T + Q`.
pub fn predict(fs: &FilterState, model: &MotionModel) -> Result<FilterState> {
    if fs.x.iter().any(|v| !v.is_finite()) {
        return Err(Error::DivergedFilter(format!(
            "non-finite state before prediction: {:?}",
            fs.x.as_slice()
        )));
    }
    let f = model.jacobian(&fs.x, fs.dt);
    let x = model.transition(&fs.x, fs.dt);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::DivergedFilter(
            "non-finite state after prediction".to_string(),
        ));
    }
    let p = f * fs.p * f.transpose() + fs.q;
    Ok(FilterState { x, p, ..fs.clone() })
}

/// Confidence-weighted measurement update.
///
/// With `weighted` false the weight is pinned to 1 and this is the standard
/// Joseph-form update; with weight 0 state and covariance stay exactly at
/// the prior.
pub fn update(fs: &FilterState, z: &Measurement, w: f64, weighted: bool) -> Result<FilterState> {
    let weight = if weighted { w.clamp(0.0, 1.0) } else { 1.0 };
    let innovation = fs.innovation(z);
    let s = fs.h * fs.p * fs.h.transpose() + fs.r;
    let s_inv = match s.try_inverse() {
        Some(inv) => inv,
        None => {
            let svd = s.svd(false, false);
            let max_sv = svd.singular_values.max();
            let min_sv = svd.singular_values.min();
            let condition = if min_sv > 0.0 { max_sv / min_sv } else { f64::INFINITY };
            return Err(Error::SingularInnovation { condition });
        }
    };
    let gain = fs.p * fs.h.transpose() * s_inv;
    let mut x = fs.x + gain * innovation * weight;
    let identity = StateMatrix::identity();
    let a = identity - gain * fs.h * weight;
    let p = a * fs.p * a.transpose() + gain * fs.r * gain.transpose() * (weight * weight);
    let p = (p + p.transpose()) * 0.5;
    let yaw_idx = yaw_state_index(&fs.h);
    x[yaw_idx] = normalize_yaw(x[yaw_idx]);
    Ok(FilterState { x, p, ..fs.clone() })
}

/// Residual-driven measurement-noise scaling: shrink R by 10% for small
/// residual norms, grow it by 10% for large ones.
pub fn adapt_r(r: &MeasMatrix, residual: &Measurement) -> MeasMatrix {
    let norm = residual.norm();
    if norm < 1.0 {
        r * 0.9
    } else if norm > 5.0 {
        r * 1.1
    } else {
        *r
    }
}

/// Velocity-driven process-noise scaling: shrink Q below 1 m/s, grow it
/// above 10 m/s.
pub fn adapt_q(q: &StateMatrix, x: &StateVector, model: &MotionModel) -> StateMatrix {
    let [vx, vy] = model.planar_velocity(x);
    let speed = vx.hypot(vy);
    if speed < 1.0 {
        q * 0.9
    } else if speed > 10.0 {
        q * 1.1
    } else {
        *q
    }
}

/// Componentwise median of the last `min(window, len)` size triples.
pub fn median_smooth(history: &[[f64; 3]], window: usize) -> [f64; 3] {
    assert!(!history.is_empty(), "median_smooth needs history");
    assert!(window >= 1 && window % 2 == 1, "window must be odd and >= 1");
    let tail = &history[history.len().saturating_sub(window)..];
    let mut out = [0.0; 3];
    let mut component = Vec::with_capacity(tail.len());
    for (axis, slot) in out.iter_mut().enumerate() {
        component.clear();
        component.extend(tail.iter().map(|s| s[axis]));
        component.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mid = component.len() / 2;
        *slot = if component.len() % 2 == 1 {
            component[mid]
        } else {
            (component[mid - 1] + component[mid]) / 2.0
        };
    }
    out
}
