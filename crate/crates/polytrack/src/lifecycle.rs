//! Tracklet birth, confirmation, score refinement and termination.
//!
//! Matched tracks refresh their scores through an exponentially weighted
//! average; missed tracks decay their latest score by a per-category rate
//! and feed the decayed value through the same average, so the
//! confidence-based termination modes share one formula.

use crate::config::{LifeCycleMode, TrackerConfig};
use crate::motion::{FilterState, MotionModel};
use crate::types::{Detection, TrackStatus, Tracklet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LifecycleEventKind {
    Born,
    Confirmed,
    Terminated,
    Penalized,
    Refreshed,
}

/// Audit-log entry for one life-cycle transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifecycleEvent {
    pub kind: LifecycleEventKind,
    pub track_id: u64,
    pub frame_index: usize,
    pub score_after: f64,
}

/// Refreshes a matched tracklet: resets the miss counter, folds the new
/// detection score into the running average, and confirms the track once it
/// has enough hits.
pub fn on_match(
    track: &mut Tracklet,
    det_score: f64,
    frame_index: usize,
    cfg: &TrackerConfig,
    events: &mut Vec<LifecycleEvent>,
) {
    debug_assert!(track.status != TrackStatus::Terminated);
    track.misses = 0;
    track.hits += 1;
    track.score_latest = det_score;
    track.score_avg = cfg.ewma_alpha * det_score + (1.0 - cfg.ewma_alpha) * track.score_avg;
    events.push(LifecycleEvent {
        kind: LifecycleEventKind::Refreshed,
        track_id: track.track_id,
        frame_index,
        score_after: track.score_avg,
    });
    if track.status == TrackStatus::Tentative && track.hits >= cfg.min_hits_to_confirm {
        track.status = TrackStatus::Confirmed;
        events.push(LifecycleEvent {
            kind: LifecycleEventKind::Confirmed,
            track_id: track.track_id,
            frame_index,
            score_after: track.score_avg,
        });
    }
}

/// Penalizes an unmatched tracklet: decays the latest score by the
/// category rate (floored at zero) and treats it as a low-confidence
/// pseudo-observation of the running average.
pub fn on_miss(
    track: &mut Tracklet,
    frame_index: usize,
    cfg: &TrackerConfig,
    events: &mut Vec<LifecycleEvent>,
) {
    debug_assert!(track.status != TrackStatus::Terminated);
    track.misses += 1;
    track.score_latest = (track.score_latest - cfg.decay_rate[track.category]).max(0.0);
    track.score_avg =
        cfg.ewma_alpha * track.score_latest + (1.0 - cfg.ewma_alpha) * track.score_avg;
    events.push(LifecycleEvent {
        kind: LifecycleEventKind::Penalized,
        track_id: track.track_id,
        frame_index,
        score_after: track.score_avg,
    });
}

/// Termination predicate under the configured life-cycle mode.
pub fn should_terminate(track: &Tracklet, cfg: &TrackerConfig) -> bool {
    let delete = cfg.delete_threshold[track.category];
    match cfg.life_cycle_mode {
        LifeCycleMode::CountMaxAge => track.misses > cfg.max_age,
        LifeCycleMode::ConfidenceLatest => track.score_latest < delete,
        LifeCycleMode::ConfidenceAverage => track.score_avg < delete,
        LifeCycleMode::ConfidenceCountMixed => {
            track.score_avg < delete || track.misses > cfg.max_age
        }
    }
}

/// Initializes a tentative tracklet from an unmatched detection.
pub fn spawn(
    det: &Detection,
    track_id: u64,
    frame_index: usize,
    cfg: &TrackerConfig,
    events: &mut Vec<LifecycleEvent>,
) -> Tracklet {
    let model = MotionModel::from_kind(cfg.motion_model[det.category], det.box3d.size[0], cfg);
    let filter = FilterState::from_detection(det, &model, cfg);
    events.push(LifecycleEvent {
        kind: LifecycleEventKind::Born,
        track_id,
        frame_index,
        score_after: det.score,
    });
    Tracklet {
        track_id,
        category: det.category,
        filter,
        model,
        score_avg: det.score,
        score_latest: det.score,
        hits: 1,
        misses: 0,
        age: 0,
        status: TrackStatus::Tentative,
        time_invariant: det.box3d.size,
        size_history: vec![det.box3d.size],
    }
}
