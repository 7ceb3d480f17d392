//! Frame-by-frame orchestration: pre-process, predict, associate, update,
//! life-cycle. One [`Tracker`] owns the live tracklets of one sequence.

use std::time::Instant;

use crate::association::{two_stage_associate, AssociationResult};
use crate::config::{validate_config, TrackerConfig};
use crate::error::{Error, Result};
use crate::geometry::{nms_with_stats, NmsStats};
use crate::lifecycle::{self, LifecycleEvent};
use crate::motion::{self, FilterState, SIZE_MEDIAN_WINDOW};
use crate::types::{Box3D, Category, Detection, TrackStatus, Tracklet};

/// One frame of detector output.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameInput {
    pub frame_index: usize,
    /// Seconds; strictly increasing across a sequence.
    pub timestamp: f64,
    pub detections: Vec<Detection>,
}

/// One emitted track state.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackOutput {
    pub track_id: u64,
    pub box3d: Box3D,
    pub category: Category,
    pub score_avg: f64,
    pub status: TrackStatus,
}

/// Wall time spent in each pipeline stage, microseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StageTimings {
    pub preprocess_us: u64,
    pub predict_us: u64,
    pub associate_us: u64,
    pub update_us: u64,
    pub lifecycle_us: u64,
}

impl StageTimings {
    fn add(&mut self, other: &StageTimings) {
        self.preprocess_us += other.preprocess_us;
        self.predict_us += other.predict_us;
        self.associate_us += other.associate_us;
        self.update_us += other.update_us;
        self.lifecycle_us += other.lifecycle_us;
    }
}

/// Tracker output for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput {
    pub frame_index: usize,
    pub tracks: Vec<TrackOutput>,
    pub timings: StageTimings,
}

/// Whole-sequence throughput summary.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub frames: usize,
    /// Total tracking wall time in seconds, excluding I/O.
    pub total_seconds: f64,
    pub fps: f64,
    pub stage_totals: StageTimings,
}

/// Pre-processing counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PreprocessStats {
    /// Detections dropped by score filtering.
    pub filtered_out: usize,
    /// Detections suppressed by NMS.
    pub suppressed: usize,
    /// Pairwise overlap evaluations spent in NMS.
    pub nms_comparisons: u64,
}

/// Score filtering followed by per-category NMS.
pub fn preprocess(dets: &[Detection], cfg: &TrackerConfig) -> Vec<Detection> {
    preprocess_with_stats(dets, cfg).0
}

/// Like [`preprocess`], also reporting filter/suppression counters.
pub fn preprocess_with_stats(
    dets: &[Detection],
    cfg: &TrackerConfig,
) -> (Vec<Detection>, PreprocessStats) {
    let mut stats = PreprocessStats::default();
    let mut kept = Vec::with_capacity(dets.len());
    for category in Category::ALL {
        let threshold = cfg.sf_threshold[category];
        let candidates: Vec<Detection> = dets
            .iter()
            .filter(|d| d.category == category)
            .copied()
            .collect();
        if candidates.is_empty() {
            continue;
        }
        let passed: Vec<Detection> = candidates
            .iter()
            .filter(|d| d.score >= threshold)
            .copied()
            .collect();
        stats.filtered_out += candidates.len() - passed.len();

        // Scale-NMS hook: suppression decisions run on footprint-scaled
        // copies, kept detections are emitted unscaled.
        let scale = cfg.scale_nms_factor[category];
        let nms_input: Vec<Detection> = if scale == 1.0 {
            passed.clone()
        } else {
            passed
                .iter()
                .map(|d| {
                    let mut scaled = *d;
                    scaled.box3d.size[0] *= scale;
                    scaled.box3d.size[1] *= scale;
                    scaled
                })
                .collect()
        };
        let (survivors, nms_stats): (Vec<Detection>, NmsStats) = nms_with_stats(
            &nms_input,
            cfg.nms_threshold[category],
            cfg.nms_metric[category],
            cfg.voxel_size,
        );
        stats.nms_comparisons += nms_stats.comparisons;
        stats.suppressed += passed.len() - survivors.len();
        if scale == 1.0 {
            kept.extend(survivors);
        } else {
            let surviving_ids: Vec<u32> = survivors.iter().map(|d| d.detection_id).collect();
            kept.extend(
                passed
                    .iter()
                    .filter(|d| surviving_ids.contains(&d.detection_id))
                    .copied(),
            );
        }
    }
    (kept, stats)
}

/// Stateful tracker over one detection sequence.
#[derive(Debug)]
pub struct Tracker {
    cfg: TrackerConfig,
    tracks: Vec<Tracklet>,
    archive: Vec<Tracklet>,
    events: Vec<LifecycleEvent>,
    next_id: u64,
    last_timestamp: Option<f64>,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Result<Tracker> {
        let violations = validate_config(&cfg);
        if !violations.is_empty() {
            let summary: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
            return Err(Error::Config(summary.join("; ")));
        }
        Ok(Tracker {
            cfg,
            tracks: Vec::new(),
            archive: Vec::new(),
            events: Vec::new(),
            next_id: 1,
            last_timestamp: None,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    /// Life-cycle audit log accumulated so far.
    pub fn events(&self) -> &[LifecycleEvent] {
        &self.events
    }

    /// Live (non-terminated) tracklets.
    pub fn live_tracks(&self) -> &[Tracklet] {
        &self.tracks
    }

    /// Terminated tracklets, retained for evaluation.
    pub fn archive(&self) -> &[Tracklet] {
        &self.archive
    }

    /// Advances the tracker by one frame.
    pub fn step(&mut self, frame: &FrameInput) -> Result<FrameOutput> {
        if let Some(last) = self.last_timestamp {
            if frame.timestamp <= last {
                return Err(Error::Pipeline(format!(
                    "frame {}: timestamp {} not after previous {}",
                    frame.frame_index, frame.timestamp, last
                )));
            }
        }
        let dt = self
            .last_timestamp
            .map(|last| frame.timestamp - last)
            .unwrap_or(self.cfg.frame_period);
        self.last_timestamp = Some(frame.timestamp);

        let t_preprocess = Instant::now();
        let dets = preprocess(&frame.detections, &self.cfg);
        let preprocess_us = t_preprocess.elapsed().as_micros() as u64;

        let t_predict = Instant::now();
        for track in &mut self.tracks {
            track.filter.dt = dt;
            track.filter = motion::predict(&track.filter, &track.model).map_err(|e| {
                Error::Pipeline(format!(
                    "frame {}: track {}: {e}",
                    frame.frame_index, track.track_id
                ))
            })?;
            track.age += 1;
        }
        let predict_us = t_predict.elapsed().as_micros() as u64;

        let t_associate = Instant::now();
        let assoc: AssociationResult = two_stage_associate(&dets, &self.tracks, &self.cfg);
        let associate_us = t_associate.elapsed().as_micros() as u64;

        let t_update = Instant::now();
        for &(det_idx, track_idx) in &assoc.matched {
            let det = &dets[det_idx];
            let track = &mut self.tracks[track_idx];
            let z = FilterState::measurement_of(det);
            if self.cfg.adaptive_noise {
                let residual = track.filter.innovation(&z);
                track.filter.r = motion::adapt_r(&track.filter.r, &residual);
            }
            track.filter = motion::update(
                &track.filter,
                &z,
                det.score,
                self.cfg.confidence_weighting,
            )
            .map_err(|e| {
                Error::Pipeline(format!(
                    "frame {}: track {}: {e}",
                    frame.frame_index, track.track_id
                ))
            })?;
            if self.cfg.adaptive_noise {
                track.filter.q = motion::adapt_q(&track.filter.q, &track.filter.x, &track.model);
            }
            track.size_history.push(det.box3d.size);
            track.time_invariant = motion::median_smooth(&track.size_history, SIZE_MEDIAN_WINDOW);
        }
        let update_us = t_update.elapsed().as_micros() as u64;

        let t_lifecycle = Instant::now();
        for &(det_idx, track_idx) in &assoc.matched {
            lifecycle::on_match(
                &mut self.tracks[track_idx],
                dets[det_idx].score,
                frame.frame_index,
                &self.cfg,
                &mut self.events,
            );
        }
        let mut terminated = vec![false; self.tracks.len()];
        for &track_idx in &assoc.unmatched_tracks {
            let track = &mut self.tracks[track_idx];
            lifecycle::on_miss(track, frame.frame_index, &self.cfg, &mut self.events);
            if lifecycle::should_terminate(track, &self.cfg) {
                track.status = TrackStatus::Terminated;
                terminated[track_idx] = true;
                self.events.push(LifecycleEvent {
                    kind: crate::lifecycle::LifecycleEventKind::Terminated,
                    track_id: track.track_id,
                    frame_index: frame.frame_index,
                    score_after: track.score_avg,
                });
            }
        }
        for &det_idx in &assoc.unmatched_dets {
            let track = lifecycle::spawn(
                &dets[det_idx],
                self.next_id,
                frame.frame_index,
                &self.cfg,
                &mut self.events,
            );
            self.next_id += 1;
            self.tracks.push(track);
        }
        let mut survivors = Vec::with_capacity(self.tracks.len());
        for (i, track) in self.tracks.drain(..).enumerate() {
            // indices beyond the termination flags are tracks spawned this frame
            if i < terminated.len() && terminated[i] {
                self.archive.push(track);
            } else {
                survivors.push(track);
            }
        }
        self.tracks = survivors;
        let lifecycle_us = t_lifecycle.elapsed().as_micros() as u64;

        let mut outputs: Vec<TrackOutput> = self
            .tracks
            .iter()
            .filter(|t| !self.cfg.confirmed_only || t.status == TrackStatus::Confirmed)
            .map(|t| TrackOutput {
                track_id: t.track_id,
                box3d: t.current_box(),
                category: t.category,
                score_avg: t.score_avg,
                status: t.status,
            })
            .collect();
        outputs.sort_by_key(|t| t.track_id);

        Ok(FrameOutput {
            frame_index: frame.frame_index,
            tracks: outputs,
            timings: StageTimings {
                preprocess_us,
                predict_us,
                associate_us,
                update_us,
                lifecycle_us,
            },
        })
    }
}

/// Runs a whole sequence through a fresh tracker, reporting per-frame
/// outputs and the throughput summary.
pub fn run_sequence(
    frames: &[FrameInput],
    cfg: &TrackerConfig,
) -> Result<(Vec<FrameOutput>, RunSummary)> {
    if frames.is_empty() {
        return Err(Error::Pipeline("empty frame sequence".to_string()));
    }
    let mut tracker = Tracker::new(cfg.clone())?;
    let mut outputs = Vec::with_capacity(frames.len());
    let mut stage_totals = StageTimings::default();
    let started = Instant::now();
    for frame in frames {
        let out = tracker.step(frame)?;
        stage_totals.add(&out.timings);
        outputs.push(out);
    }
    let total_seconds = started.elapsed().as_secs_f64();
    let summary = RunSummary {
        frames: frames.len(),
        total_seconds,
        fps: frames.len() as f64 / total_seconds.max(1e-12),
        stage_totals,
    };
    Ok((outputs, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::default_config;

    fn det(x: f64, y: f64, score: f64, frame: usize, id: u32) -> Detection {
        Detection {
            box3d: Box3D::new([x, y, 0.75], [4.5, 2.0, 1.5], 0.0, [0.0, 0.0]),
            score,
            category: Category::Car,
            frame_index: frame,
            detection_id: id,
        }
    }

    fn frame(index: usize, dets: Vec<Detection>) -> FrameInput {
        FrameInput {
            frame_index: index,
            timestamp: index as f64 * 0.5,
            detections: dets,
        }
    }

    #[test]
    fn preprocess_applies_sf_then_nms() {
        let cfg = default_config();
        // Car SF threshold is 0.16
        let low = det(0.0, 0.0, 0.10, 0, 0);
        let (out, stats) = preprocess_with_stats(&[low], &cfg);
        assert!(out.is_empty());
        assert_eq!(stats.filtered_out, 1);

        // Truck threshold is 0: kept regardless
        let mut truck = det(0.0, 0.0, 0.01, 0, 0);
        truck.category = Category::Truck;
        assert_eq!(preprocess(&[truck], &cfg).len(), 1);

        // duplicate boxes collapse to the better one
        let dup = [det(0.0, 0.0, 0.9, 0, 0), det(0.0, 0.0, 0.8, 0, 1)];
        let survivors = preprocess(&dup, &cfg);
        assert_eq!(survivors.len(), 1);
        assert_eq!(survivors[0].score, 0.9);
    }

    #[test]
    fn empty_first_frame_is_fine() {
        let cfg = default_config();
        let mut tracker = Tracker::new(cfg).unwrap();
        let out = tracker.step(&frame(0, vec![])).unwrap();
        assert!(out.tracks.is_empty());
    }

    #[test]
    fn stationary_detection_confirms_after_two_hits() {
        let cfg = default_config();
        let mut tracker = Tracker::new(cfg).unwrap();
        let f0 = tracker.step(&frame(0, vec![det(0.0, 0.0, 0.9, 0, 0)])).unwrap();
        assert!(f0.tracks.is_empty()); // tentative, confirmed-only output
        let f1 = tracker.step(&frame(1, vec![det(0.0, 0.0, 0.9, 1, 0)])).unwrap();
        assert_eq!(f1.tracks.len(), 1);
        assert_eq!(f1.tracks[0].status, TrackStatus::Confirmed);
        assert_eq!(tracker.live_tracks()[0].hits, 2);
    }

    #[test]
    fn out_of_order_timestamp_is_an_error() {
        let cfg = default_config();
        let mut tracker = Tracker::new(cfg).unwrap();
        tracker.step(&frame(0, vec![])).unwrap();
        let bad = FrameInput {
            frame_index: 1,
            timestamp: -1.0,
            detections: vec![],
        };
        assert!(matches!(tracker.step(&bad), Err(Error::Pipeline(_))));
    }

    #[test]
    fn crossing_objects_keep_identities() {
        let cfg = default_config();
        let mut frames = Vec::new();
        for i in 0..10 {
            let t = i as f64 * 0.5;
            // object A moves +x, object B moves -x; they cross near x = 10
            let a = Detection {
                box3d: Box3D::new([t * 4.0, 0.0, 0.75], [4.5, 2.0, 1.5], 0.0, [4.0, 0.0]),
                score: 0.9,
                category: Category::Car,
                frame_index: i,
                detection_id: 0,
            };
            let b = Detection {
                box3d: Box3D::new(
                    [20.0 - t * 4.0, 3.0, 0.75],
                    [4.5, 2.0, 1.5],
                    std::f64::consts::PI,
                    [-4.0, 0.0],
                ),
                score: 0.9,
                category: Category::Car,
                frame_index: i,
                detection_id: 1,
            };
            frames.push(frame(i, vec![a, b]));
        }
        let (outputs, _) = run_sequence(&frames, &cfg).unwrap();
        // after confirmation both tracks appear with stable ids
        let last = outputs.last().unwrap();
        assert_eq!(last.tracks.len(), 2);
        let mut ids: Vec<u64> = last.tracks.iter().map(|t| t.track_id).collect();
        ids.sort_unstable();
        assert_eq!(ids, vec![1, 2]);
        // identity of the +x mover stays id 1 throughout
        for out in &outputs[2..] {
            let plus_mover = out
                .tracks
                .iter()
                .min_by(|p, q| {
                    let expect_x = out.frame_index as f64 * 2.0;
                    let dp = (p.box3d.center[0] - expect_x).abs();
                    let dq = (q.box3d.center[0] - expect_x).abs();
                    dp.partial_cmp(&dq).unwrap()
                })
                .unwrap();
            assert_eq!(plus_mover.track_id, 1, "identity switch at frame {}", out.frame_index);
        }
    }

    #[test]
    fn run_sequence_is_deterministic() {
        let cfg = default_config();
        let frames: Vec<FrameInput> = (0..8)
            .map(|i| {
                frame(
                    i,
                    vec![
                        det(i as f64 * 1.5, 0.0, 0.8, i, 0),
                        det(-5.0, i as f64, 0.7, i, 1),
                    ],
                )
            })
            .collect();
        let (a, _) = run_sequence(&frames, &cfg).unwrap();
        let (b, _) = run_sequence(&frames, &cfg).unwrap();
        for (fa, fb) in a.iter().zip(&b) {
            assert_eq!(fa.frame_index, fb.frame_index);
            assert_eq!(fa.tracks, fb.tracks);
        }
    }

    #[test]
    fn track_ids_never_reused() {
        let mut cfg = default_config();
        cfg.life_cycle_mode = crate::config::LifeCycleMode::CountMaxAge;
        cfg.max_age = 1;
        let mut tracker = Tracker::new(cfg).unwrap();
        // spawn, lose, spawn again at the same place: fresh id
        tracker.step(&frame(0, vec![det(0.0, 0.0, 0.9, 0, 0)])).unwrap();
        tracker.step(&frame(1, vec![])).unwrap();
        tracker.step(&frame(2, vec![])).unwrap();
        tracker.step(&frame(3, vec![])).unwrap();
        assert!(tracker.live_tracks().is_empty());
        tracker.step(&frame(4, vec![det(0.0, 0.0, 0.9, 4, 0)])).unwrap();
        assert_eq!(tracker.live_tracks()[0].track_id, 2);
        assert_eq!(tracker.archive().len(), 1);
        assert_eq!(tracker.archive()[0].track_id, 1);
    }

    #[test]
    fn sf_first_never_increases_nms_comparisons() {
        let cfg = default_config();
        let mut rng_state = 88172645463325252u64;
        let mut next = move || {
            // xorshift; plenty for fuzzing box layouts
            rng_state ^= rng_state << 13;
            rng_state ^= rng_state >> 7;
            rng_state ^= rng_state << 17;
            (rng_state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..100 {
            let n = (next() * 30.0) as usize;
            let dets: Vec<Detection> = (0..n)
                .map(|i| det(next() * 40.0 - 20.0, next() * 40.0 - 20.0, next(), 0, i as u32))
                .collect();
            let (_, with_sf) = preprocess_with_stats(&dets, &cfg);
            let mut no_sf_cfg = cfg.clone();
            no_sf_cfg.sf_threshold = crate::config::PerCategory::uniform(0.0);
            let (_, without_sf) = preprocess_with_stats(&dets, &no_sf_cfg);
            assert!(with_sf.nms_comparisons <= without_sf.nms_comparisons);
        }
    }
}
