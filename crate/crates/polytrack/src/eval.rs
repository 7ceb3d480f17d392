//! Evaluation harness: CLEAR-MOT matching with identity persistence, the
//! recall-sweep accuracy metrics (AMOTA / AMOTP / sAMOTA), and a seeded
//! synthetic scenario generator for desk-scale verification.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::association;
use crate::config::parse_kv_lines;
use crate::error::{Error, Result};
use crate::pipeline::{FrameInput, FrameOutput};
use crate::types::{normalize_yaw, Box3D, Category, Detection};

/// Default CLEAR-MOT match gate in meters (BEV center distance).
pub const DEFAULT_MATCH_DISTANCE: f64 = 2.0;
/// Default number of recall sweep points.
pub const DEFAULT_SWEEP_POINTS: usize = 40;

/// One annotated object in a ground-truth frame.
#[derive(Debug, Clone, PartialEq)]
pub struct GtObject {
    pub gt_id: u64,
    pub box3d: Box3D,
    pub category: Category,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthFrame {
    pub frame_index: usize,
    pub objects: Vec<GtObject>,
}

/// One tracker hypothesis in a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct HypObject {
    pub track_id: u64,
    pub box3d: Box3D,
    pub category: Category,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisFrame {
    pub frame_index: usize,
    pub objects: Vec<HypObject>,
}

impl From<&FrameOutput> for HypothesisFrame {
    fn from(out: &FrameOutput) -> HypothesisFrame {
        HypothesisFrame {
            frame_index: out.frame_index,
            objects: out
                .tracks
                .iter()
                .map(|t| HypObject {
                    track_id: t.track_id,
                    box3d: t.box3d,
                    category: t.category,
                    score: t.score_avg,
                })
                .collect(),
        }
    }
}

/// Accumulated CLEAR-MOT counters.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MotCounts {
    pub gt: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub id_switches: u64,
    pub matches: u64,
    pub distance_sum: f64,
}

/// Per-frame matching increments.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatch {
    /// (gt index, hyp index, distance) triples for this frame.
    pub pairs: Vec<(usize, usize, f64)>,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub id_switches: u64,
}

/// Sequential CLEAR-MOT matcher. Pairs from the previous frame persist while
/// both sides exist and stay within the gate; the remainder is matched by
/// minimal center distance.
#[derive(Debug, Clone)]
pub struct MotAccumulator {
    dist_threshold: f64,
    last_match: HashMap<u64, u64>,
    pub counts: MotCounts,
}

impl MotAccumulator {
    pub fn new(dist_threshold: f64) -> MotAccumulator {
        MotAccumulator {
            dist_threshold,
            last_match: HashMap::new(),
            counts: MotCounts::default(),
        }
    }

    pub fn match_frame(
        &mut self,
        gt: &GroundTruthFrame,
        hyp: &HypothesisFrame,
    ) -> Result<FrameMatch> {
        if gt.frame_index != hyp.frame_index {
            return Err(Error::Eval(format!(
                "frame mismatch: gt {} vs hyp {}",
                gt.frame_index, hyp.frame_index
            )));
        }
        let distance = |g: &GtObject, h: &HypObject| {
            crate::geometry::center_distance(&g.box3d, &h.box3d)
        };
        let hyp_by_track: HashMap<u64, usize> = hyp
            .objects
            .iter()
            .enumerate()
            .map(|(i, h)| (h.track_id, i))
            .collect();

        let mut gt_free = vec![true; gt.objects.len()];
        let mut hyp_free = vec![true; hyp.objects.len()];
        let mut pairs: Vec<(usize, usize, f64)> = Vec::new();

        // persist previous pairings still within the gate
        for (gi, g) in gt.objects.iter().enumerate() {
            if let Some(&track_id) = self.last_match.get(&g.gt_id) {
                if let Some(&hi) = hyp_by_track.get(&track_id) {
                    if hyp_free[hi] {
                        let d = distance(g, &hyp.objects[hi]);
                        if d <= self.dist_threshold {
                            pairs.push((gi, hi, d));
                            gt_free[gi] = false;
                            hyp_free[hi] = false;
                        }
                    }
                }
            }
        }

        // minimal-distance assignment for the remainder
        let free_gt: Vec<usize> = (0..gt.objects.len()).filter(|&i| gt_free[i]).collect();
        let free_hyp: Vec<usize> = (0..hyp.objects.len()).filter(|&i| hyp_free[i]).collect();
        if !free_gt.is_empty() && !free_hyp.is_empty() {
            let costs = DMatrix::from_fn(free_gt.len(), free_hyp.len(), |r, c| {
                let d = distance(&gt.objects[free_gt[r]], &hyp.objects[free_hyp[c]]);
                if d <= self.dist_threshold {
                    d
                } else {
                    association::COST_SENTINEL
                }
            });
            let solved = association::hungarian(&costs, self.dist_threshold);
            for &(r, c) in &solved.matched {
                pairs.push((free_gt[r], free_hyp[c], costs[(r, c)]));
            }
        }

        let mut id_switches = 0;
        for &(gi, hi, d) in &pairs {
            let gt_id = gt.objects[gi].gt_id;
            let track_id = hyp.objects[hi].track_id;
            if let Some(&previous) = self.last_match.get(&gt_id) {
                if previous != track_id {
                    id_switches += 1;
                }
            }
            self.last_match.insert(gt_id, track_id);
            self.counts.matches += 1;
            self.counts.distance_sum += d;
        }
        let false_positives = (hyp.objects.len() - pairs.len()) as u64;
        let false_negatives = (gt.objects.len() - pairs.len()) as u64;
        self.counts.gt += gt.objects.len() as u64;
        self.counts.false_positives += false_positives;
        self.counts.false_negatives += false_negatives;
        self.counts.id_switches += id_switches;

        pairs.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        Ok(FrameMatch {
            pairs,
            false_positives,
            false_negatives,
            id_switches,
        })
    }
}

/// `1 - (FP + FN + IDS) / GT`.
pub fn mota(counts: &MotCounts) -> Result<f64> {
    if counts.gt == 0 {
        return Err(Error::Eval("MOTA undefined for zero ground truth".to_string()));
    }
    Ok(1.0
        - (counts.false_positives + counts.false_negatives + counts.id_switches) as f64
            / counts.gt as f64)
}

/// Metrics of one evaluated category (or the aggregate).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CategoryMetrics {
    pub gt: u64,
    pub mota: f64,
    pub amota: f64,
    pub amotp: f64,
    pub samota: f64,
    pub recall: f64,
    pub id_switches: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    /// IDS summed over the recall sweep points.
    pub ids_sweep_total: u64,
}

/// Full evaluation output.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub per_category: Vec<(Category, CategoryMetrics)>,
    pub aggregate: CategoryMetrics,
    pub dist_threshold: f64,
    pub sweep_points: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    pub dist_threshold: f64,
    pub sweep_points: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            dist_threshold: DEFAULT_MATCH_DISTANCE,
            sweep_points: DEFAULT_SWEEP_POINTS,
        }
    }
}

struct PassOutcome {
    counts: MotCounts,
    matched_scores: Vec<f64>,
}

/// Runs one full matching pass, keeping only hypotheses with
/// `score >= score_threshold`.
fn run_pass(
    frames: &[(GroundTruthFrame, HypothesisFrame)],
    score_threshold: Option<f64>,
    dist_threshold: f64,
) -> PassOutcome {
    let mut acc = MotAccumulator::new(dist_threshold);
    let mut matched_scores = Vec::new();
    for (gt, hyp) in frames {
        let filtered = match score_threshold {
            Some(s) => HypothesisFrame {
                frame_index: hyp.frame_index,
                objects: hyp.objects.iter().filter(|h| h.score >= s).cloned().collect(),
            },
            None => hyp.clone(),
        };
        let fm = acc
            .match_frame(gt, &filtered)
            .expect("aligned frames by construction");
        matched_scores.extend(fm.pairs.iter().map(|&(_, hi, _)| filtered.objects[hi].score));
    }
    PassOutcome {
        counts: acc.counts,
        matched_scores,
    }
}

fn clamp01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

fn category_metrics(
    frames: &[(GroundTruthFrame, HypothesisFrame)],
    opts: &EvalOptions,
) -> Result<CategoryMetrics> {
    let base = run_pass(frames, None, opts.dist_threshold);
    let gt_total = base.counts.gt;
    if gt_total == 0 {
        return Err(Error::Eval("category without ground truth".to_string()));
    }
    let base_mota = mota(&base.counts)?;
    let recall = base.counts.matches as f64 / gt_total as f64;

    // Candidate thresholds come from the matched hypothesis scores of the
    // unfiltered pass: the k-th highest matched score is the loosest
    // threshold that can still deliver k matches.
    let mut ranked_scores = base.matched_scores.clone();
    ranked_scores.sort_by(|a, b| b.partial_cmp(a).unwrap());

    let mut motar_sum = 0.0;
    let mut samota_sum = 0.0;
    let mut motp_sum = 0.0;
    let mut motp_points = 0usize;
    let mut ids_sweep_total = 0u64;
    for step in 1..=opts.sweep_points {
        let target_recall = step as f64 / opts.sweep_points as f64;
        let needed = (target_recall * gt_total as f64).ceil() as usize;
        if needed == 0 || needed > ranked_scores.len() {
            // unreachable recall point contributes zero accuracy
            continue;
        }
        let threshold = ranked_scores[needed - 1];
        let pass = run_pass(frames, Some(threshold), opts.dist_threshold);
        let c = pass.counts;
        let errors = (c.id_switches + c.false_positives + c.false_negatives) as f64;
        let motar = clamp01(
            1.0 - (errors - (1.0 - target_recall) * gt_total as f64)
                / (target_recall * gt_total as f64),
        );
        motar_sum += motar;
        // scaled accuracy against the recall actually achieved at this
        // threshold; false negatives cancel by construction
        let achieved = c.matches as f64 / gt_total as f64;
        if achieved > 0.0 {
            samota_sum += clamp01(
                1.0 - (c.id_switches + c.false_positives) as f64 / (achieved * gt_total as f64),
            );
        }
        if c.matches > 0 {
            motp_sum += c.distance_sum / c.matches as f64;
            motp_points += 1;
        }
        ids_sweep_total += c.id_switches;
    }
    let sweep = opts.sweep_points as f64;
    Ok(CategoryMetrics {
        gt: gt_total,
        mota: base_mota,
        amota: motar_sum / sweep,
        amotp: if motp_points > 0 {
            motp_sum / motp_points as f64
        } else {
            0.0
        },
        samota: samota_sum / sweep,
        recall,
        id_switches: base.counts.id_switches,
        false_positives: base.counts.false_positives,
        false_negatives: base.counts.false_negatives,
        ids_sweep_total,
    })
}

/// Evaluates tracker output against ground truth, per category present in
/// the ground truth plus an aggregate (unweighted mean of the rate metrics,
/// sums of the counters).
pub fn evaluate(
    gt: &[GroundTruthFrame],
    hyp: &[HypothesisFrame],
    opts: &EvalOptions,
) -> Result<MetricReport> {
    if gt.iter().map(|f| f.objects.len()).sum::<usize>() == 0 {
        return Err(Error::Eval("no ground truth objects".to_string()));
    }
    let frame_indices: BTreeSet<usize> = gt
        .iter()
        .map(|f| f.frame_index)
        .chain(hyp.iter().map(|f| f.frame_index))
        .collect();
    let gt_by_frame: BTreeMap<usize, &GroundTruthFrame> =
        gt.iter().map(|f| (f.frame_index, f)).collect();
    let hyp_by_frame: BTreeMap<usize, &HypothesisFrame> =
        hyp.iter().map(|f| (f.frame_index, f)).collect();

    let categories: Vec<Category> = Category::ALL
        .into_iter()
        .filter(|&c| {
            gt.iter()
                .any(|f| f.objects.iter().any(|o| o.category == c))
        })
        .collect();

    let mut per_category = Vec::new();
    for &category in &categories {
        let frames: Vec<(GroundTruthFrame, HypothesisFrame)> = frame_indices
            .iter()
            .map(|&idx| {
                let gtf = GroundTruthFrame {
                    frame_index: idx,
                    objects: gt_by_frame
                        .get(&idx)
                        .map(|f| {
                            f.objects
                                .iter()
                                .filter(|o| o.category == category)
                                .cloned()
                                .collect()
                        })
                        .unwrap_or_default(),
                };
                let hypf = HypothesisFrame {
                    frame_index: idx,
                    objects: hyp_by_frame
                        .get(&idx)
                        .map(|f| {
                            f.objects
                                .iter()
                                .filter(|o| o.category == category)
                                .cloned()
                                .collect()
                        })
                        .unwrap_or_default(),
                };
                (gtf, hypf)
            })
            .collect();
        per_category.push((category, category_metrics(&frames, opts)?));
    }

    let n = per_category.len() as f64;
    let aggregate = CategoryMetrics {
        gt: per_category.iter().map(|(_, m)| m.gt).sum(),
        mota: per_category.iter().map(|(_, m)| m.mota).sum::<f64>() / n,
        amota: per_category.iter().map(|(_, m)| m.amota).sum::<f64>() / n,
        amotp: per_category.iter().map(|(_, m)| m.amotp).sum::<f64>() / n,
        samota: per_category.iter().map(|(_, m)| m.samota).sum::<f64>() / n,
        recall: per_category.iter().map(|(_, m)| m.recall).sum::<f64>() / n,
        id_switches: per_category.iter().map(|(_, m)| m.id_switches).sum(),
        false_positives: per_category.iter().map(|(_, m)| m.false_positives).sum(),
        false_negatives: per_category.iter().map(|(_, m)| m.false_negatives).sum(),
        ids_sweep_total: per_category.iter().map(|(_, m)| m.ids_sweep_total).sum(),
    };
    Ok(MetricReport {
        per_category,
        aggregate,
        dist_threshold: opts.dist_threshold,
        sweep_points: opts.sweep_points,
    })
}

/// Trajectory family of a synthetic scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotionKind {
    Linear,
    Turning,
}

impl MotionKind {
    pub fn parse(token: &str) -> Option<MotionKind> {
        match token.to_ascii_lowercase().as_str() {
            "linear" => Some(MotionKind::Linear),
            "turning" => Some(MotionKind::Turning),
            _ => None,
        }
    }
}

/// Parameters of a synthetic scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub objects: usize,
    pub frames: usize,
    pub motion: MotionKind,
    /// Gaussian center noise, meters.
    pub sigma_pos: f64,
    /// Independent per-object-frame drop probability.
    pub drop_rate: f64,
    /// Poisson rate of clutter detections per frame.
    pub clutter_rate: f64,
    pub seed: u64,
    pub dt: f64,
    pub categories: Vec<Category>,
    /// Length of one forced consecutive-drop window per object; 0 disables.
    pub occlusion_len: usize,
    /// Spawn ring radius, meters.
    pub radius: f64,
    pub speed_min: f64,
    pub speed_max: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            objects: 10,
            frames: 40,
            motion: MotionKind::Linear,
            sigma_pos: 0.3,
            drop_rate: 0.1,
            clutter_rate: 2.0,
            seed: 0,
            dt: 0.5,
            categories: vec![Category::Car],
            occlusion_len: 0,
            radius: 35.0,
            speed_min: 3.0,
            speed_max: 6.0,
        }
    }
}

impl SynthSpec {
    /// Parses the `key = value` scenario grammar.
    pub fn from_str(text: &str) -> Result<SynthSpec> {
        let mut spec = SynthSpec::default();
        for (line, key, value) in parse_kv_lines(text)? {
            let fail = |message: String| Error::Parse { line, message };
            match key.as_str() {
                "objects" => spec.objects = value.parse().map_err(|_| fail(format!("invalid integer '{value}'")))?,
                "frames" => spec.frames = value.parse().map_err(|_| fail(format!("invalid integer '{value}'")))?,
                "motion" => {
                    spec.motion = MotionKind::parse(&value)
                        .ok_or_else(|| fail(format!("unknown motion kind '{value}'")))?
                }
                "sigma_pos" => spec.sigma_pos = value.parse().map_err(|_| fail(format!("invalid number '{value}'")))?,
                "drop_rate" => spec.drop_rate = value.parse().map_err(|_| fail(format!("invalid number '{value}'")))?,
                "clutter_rate" => spec.clutter_rate = value.parse().map_err(|_| fail(format!("invalid number '{value}'")))?,
                "seed" => spec.seed = value.parse().map_err(|_| fail(format!("invalid integer '{value}'")))?,
                "dt" => spec.dt = value.parse().map_err(|_| fail(format!("invalid number '{value}'")))?,
                "occlusion_len" => spec.occlusion_len = value.parse().map_err(|_| fail(format!("invalid integer '{value}'")))?,
                "radius" => spec.radius = value.parse().map_err(|_| fail(format!("invalid number '{value}'")))?,
                "speed_min" => spec.speed_min = value.parse().map_err(|_| fail(format!("invalid number '{value}'")))?,
                "speed_max" => spec.speed_max = value.parse().map_err(|_| fail(format!("invalid number '{value}'")))?,
                "categories" => {
                    let parsed: Option<Vec<Category>> =
                        value.split(',').map(|t| Category::parse(t.trim())).collect();
                    spec.categories =
                        parsed.ok_or_else(|| fail(format!("invalid category list '{value}'")))?;
                    if spec.categories.is_empty() {
                        return Err(fail("empty category list".to_string()));
                    }
                }
                _ => return Err(fail(format!("unknown scenario key '{key}'"))),
            }
        }
        Ok(spec)
    }
}

/// Reference box extents per category used by the generator.
pub fn category_size(category: Category) -> [f64; 3] {
    match category {
        Category::Car => [4.5, 2.0, 1.7],
        Category::Bicycle => [1.8, 0.6, 1.4],
        Category::Motorcycle => [2.2, 0.8, 1.5],
        Category::Pedestrian => [0.7, 0.7, 1.8],
        Category::Bus => [11.0, 3.0, 3.5],
        Category::Trailer => [12.0, 2.9, 3.8],
        Category::Truck => [7.0, 2.5, 3.0],
    }
}

struct SynthObject {
    gt_id: u64,
    category: Category,
    size: [f64; 3],
    motion: ObjectMotion,
    occlusion: Option<(usize, usize)>,
}

enum ObjectMotion {
    Linear {
        start: [f64; 2],
        velocity: [f64; 2],
    },
    Turning {
        center: [f64; 2],
        turn_radius: f64,
        phase0: f64,
        angular_rate: f64,
    },
}

impl SynthObject {
    fn pose_at(&self, t: f64) -> ([f64; 2], [f64; 2], f64) {
        match self.motion {
            ObjectMotion::Linear { start, velocity } => {
                let pos = [start[0] + velocity[0] * t, start[1] + velocity[1] * t];
                let yaw = velocity[1].atan2(velocity[0]);
                (pos, velocity, yaw)
            }
            ObjectMotion::Turning {
                center,
                turn_radius,
                phase0,
                angular_rate,
            } => {
                let phase = phase0 + angular_rate * t;
                let pos = [
                    center[0] + turn_radius * phase.cos(),
                    center[1] + turn_radius * phase.sin(),
                ];
                let velocity = [
                    -turn_radius * angular_rate * phase.sin(),
                    turn_radius * angular_rate * phase.cos(),
                ];
                let yaw = velocity[1].atan2(velocity[0]);
                (pos, velocity, yaw)
            }
        }
    }
}

/// Generates a deterministic synthetic scene: objects spawned on a ring and
/// driven through the center (linear) or around circles (turning), with
/// Gaussian center noise, independent drops, optional per-object occlusion
/// windows and Poisson clutter. True detections score U(0.6, 1.0), clutter
/// U(0.1, 0.5).
pub fn synth_scenario(spec: &SynthSpec) -> (Vec<FrameInput>, Vec<GroundTruthFrame>) {
    assert!(spec.objects > 0 && spec.frames > 0 && !spec.categories.is_empty());
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let tau = 2.0 * std::f64::consts::PI;

    let mut objects = Vec::with_capacity(spec.objects);
    for i in 0..spec.objects {
        let category = spec.categories[i % spec.categories.len()];
        let size = category_size(category);
        let angle = tau * i as f64 / spec.objects as f64 + rng.random_range(-0.2..0.2);
        let start = [spec.radius * angle.cos(), spec.radius * angle.sin()];
        let speed = rng.random_range(spec.speed_min..spec.speed_max);
        let motion = match spec.motion {
            MotionKind::Linear => {
                // aim through the center with a small lateral offset so
                // trajectories cross without colliding simultaneously
                let lateral = rng.random_range(-4.0..4.0);
                let target = [-angle.sin() * lateral, angle.cos() * lateral];
                let dir = [target[0] - start[0], target[1] - start[1]];
                let norm = dir[0].hypot(dir[1]).max(1e-9);
                ObjectMotion::Linear {
                    start,
                    velocity: [speed * dir[0] / norm, speed * dir[1] / norm],
                }
            }
            MotionKind::Turning => {
                let turn_radius = rng.random_range(10.0..25.0);
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let phase0 = rng.random_range(0.0..tau);
                let center = [
                    start[0] - turn_radius * phase0.cos(),
                    start[1] - turn_radius * phase0.sin(),
                ];
                ObjectMotion::Turning {
                    center,
                    turn_radius,
                    phase0,
                    angular_rate: sign * speed / turn_radius,
                }
            }
        };
        let occlusion = (spec.occlusion_len > 0 && spec.frames > spec.occlusion_len + 8).then(|| {
            let start_frame =
                rng.random_range(spec.frames / 4..(3 * spec.frames / 4).max(spec.frames / 4 + 1));
            (start_frame, start_frame + spec.occlusion_len)
        });
        objects.push(SynthObject {
            gt_id: (i + 1) as u64,
            category,
            size,
            motion,
            occlusion,
        });
    }

    let noise = (spec.sigma_pos > 0.0).then(|| Normal::new(0.0, spec.sigma_pos).unwrap());
    let clutter = (spec.clutter_rate > 0.0).then(|| Poisson::new(spec.clutter_rate).unwrap());

    let mut frames = Vec::with_capacity(spec.frames);
    let mut gt_frames = Vec::with_capacity(spec.frames);
    for frame_index in 0..spec.frames {
        let t = frame_index as f64 * spec.dt;
        let mut gt_objects = Vec::with_capacity(objects.len());
        let mut detections = Vec::new();
        let mut next_det_id = 0u32;
        for obj in &objects {
            let (pos, velocity, yaw) = obj.pose_at(t);
            let gt_box = Box3D::new(
                [pos[0], pos[1], obj.size[2] / 2.0],
                obj.size,
                yaw,
                velocity,
            );
            gt_objects.push(GtObject {
                gt_id: obj.gt_id,
                box3d: gt_box,
                category: obj.category,
            });

            let occluded = obj
                .occlusion
                .is_some_and(|(s, e)| frame_index >= s && frame_index < e);
            let dropped = spec.drop_rate > 0.0 && rng.random_range(0.0..1.0) < spec.drop_rate;
            if occluded || dropped {
                continue;
            }
            let mut center = gt_box.center;
            if let Some(n) = noise {
                center[0] += n.sample(&mut rng);
                center[1] += n.sample(&mut rng);
                center[2] += n.sample(&mut rng);
            }
            detections.push(Detection {
                box3d: Box3D::new(center, obj.size, yaw, velocity),
                score: rng.random_range(0.6..1.0),
                category: obj.category,
                frame_index,
                detection_id: next_det_id,
            });
            next_det_id += 1;
        }
        if let Some(p) = clutter {
            let count = p.sample(&mut rng) as usize;
            let span = spec.radius + 10.0;
            for _ in 0..count {
                let category = spec.categories[rng.random_range(0..spec.categories.len())];
                let size = category_size(category);
                detections.push(Detection {
                    box3d: Box3D::new(
                        [
                            rng.random_range(-span..span),
                            rng.random_range(-span..span),
                            size[2] / 2.0,
                        ],
                        size,
                        normalize_yaw(rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)),
                        [0.0, 0.0],
                    ),
                    score: rng.random_range(0.1..0.5),
                    category,
                    frame_index,
                    detection_id: next_det_id,
                });
                next_det_id += 1;
            }
        }
        frames.push(FrameInput {
            frame_index,
            timestamp: t,
            detections,
        });
        gt_frames.push(GroundTruthFrame {
            frame_index,
            objects: gt_objects,
        });
    }
    (frames, gt_frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn gt_frame(frame_index: usize, entries: &[(u64, f64, f64)]) -> GroundTruthFrame {
        GroundTruthFrame {
            frame_index,
            objects: entries
                .iter()
                .map(|&(gt_id, x, y)| GtObject {
                    gt_id,
                    box3d: Box3D::new([x, y, 0.75], [4.5, 2.0, 1.5], 0.0, [0.0, 0.0]),
                    category: Category::Car,
                })
                .collect(),
        }
    }

    fn hyp_frame(frame_index: usize, entries: &[(u64, f64, f64, f64)]) -> HypothesisFrame {
        HypothesisFrame {
            frame_index,
            objects: entries
                .iter()
                .map(|&(track_id, x, y, score)| HypObject {
                    track_id,
                    box3d: Box3D::new([x, y, 0.75], [4.5, 2.0, 1.5], 0.0, [0.0, 0.0]),
                    category: Category::Car,
                    score,
                })
                .collect(),
        }
    }

    #[test]
    fn perfect_frame_has_no_errors() {
        let mut acc = MotAccumulator::new(2.0);
        let fm = acc
            .match_frame(
                &gt_frame(0, &[(1, 0.0, 0.0), (2, 10.0, 0.0)]),
                &hyp_frame(0, &[(7, 0.1, 0.0, 0.9), (8, 10.1, 0.0, 0.9)]),
            )
            .unwrap();
        assert_eq!(fm.false_positives, 0);
        assert_eq!(fm.false_negatives, 0);
        assert_eq!(fm.id_switches, 0);
        assert_eq!(fm.pairs.len(), 2);
    }

    #[test]
    fn missing_hypothesis_counts_fn() {
        let mut acc = MotAccumulator::new(2.0);
        let fm = acc
            .match_frame(&gt_frame(0, &[(1, 0.0, 0.0)]), &hyp_frame(0, &[]))
            .unwrap();
        assert_eq!(fm.false_negatives, 1);
        assert_eq!(acc.counts.false_negatives, 1);
    }

    #[test]
    fn identity_switch_detected() {
        let mut acc = MotAccumulator::new(2.0);
        acc.match_frame(
            &gt_frame(0, &[(1, 0.0, 0.0)]),
            &hyp_frame(0, &[(10, 0.0, 0.0, 0.9)]),
        )
        .unwrap();
        let fm = acc
            .match_frame(
                &gt_frame(1, &[(1, 1.0, 0.0)]),
                &hyp_frame(1, &[(11, 1.0, 0.0, 0.9)]),
            )
            .unwrap();
        assert_eq!(fm.id_switches, 1);
        assert_eq!(acc.counts.id_switches, 1);
    }

    #[test]
    fn persistence_beats_closer_interloper() {
        let mut acc = MotAccumulator::new(2.0);
        acc.match_frame(
            &gt_frame(0, &[(1, 0.0, 0.0)]),
            &hyp_frame(0, &[(10, 0.0, 0.0, 0.9)]),
        )
        .unwrap();
        // track 11 is marginally closer, but the previous pair persists
        let fm = acc
            .match_frame(
                &gt_frame(1, &[(1, 0.0, 0.0)]),
                &hyp_frame(1, &[(10, 0.5, 0.0, 0.9), (11, 0.3, 0.0, 0.9)]),
            )
            .unwrap();
        assert_eq!(fm.id_switches, 0);
        assert_eq!(fm.pairs.len(), 1);
        assert_eq!(fm.false_positives, 1);
    }

    #[test]
    fn frame_mismatch_is_an_error() {
        let mut acc = MotAccumulator::new(2.0);
        assert!(acc
            .match_frame(&gt_frame(0, &[]), &hyp_frame(1, &[]))
            .is_err());
    }

    #[test]
    fn match_totals_partition_frame() {
        let mut acc = MotAccumulator::new(2.0);
        let gt = gt_frame(0, &[(1, 0.0, 0.0), (2, 8.0, 0.0), (3, 50.0, 0.0)]);
        let hyp = hyp_frame(0, &[(10, 0.2, 0.0, 0.9), (11, 30.0, 0.0, 0.8)]);
        let fm = acc.match_frame(&gt, &hyp).unwrap();
        assert_eq!(fm.pairs.len() as u64 + fm.false_positives, hyp.objects.len() as u64);
        assert_eq!(fm.pairs.len() as u64 + fm.false_negatives, gt.objects.len() as u64);
    }

    #[test]
    fn mota_formula() {
        let counts = MotCounts {
            gt: 10,
            false_positives: 1,
            false_negatives: 1,
            id_switches: 0,
            matches: 9,
            distance_sum: 0.0,
        };
        assert_abs_diff_eq!(mota(&counts).unwrap(), 0.8, epsilon = 1e-15);
        assert!(mota(&MotCounts::default()).is_err());
    }

    #[test]
    fn perfect_tracker_scores_unity() {
        let gt: Vec<GroundTruthFrame> = (0..10)
            .map(|i| gt_frame(i, &[(1, i as f64, 0.0), (2, -(i as f64), 5.0)]))
            .collect();
        let hyp: Vec<HypothesisFrame> = (0..10)
            .map(|i| {
                hyp_frame(
                    i,
                    &[(1, i as f64, 0.0, 0.9), (2, -(i as f64), 5.0, 0.8)],
                )
            })
            .collect();
        let report = evaluate(&gt, &hyp, &EvalOptions::default()).unwrap();
        assert_abs_diff_eq!(report.aggregate.mota, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(report.aggregate.amota, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(report.aggregate.samota, 1.0, epsilon = 1e-12);
        assert_eq!(report.aggregate.id_switches, 0);
    }

    #[test]
    fn empty_hypotheses_score_zero_amota() {
        let gt: Vec<GroundTruthFrame> = (0..5).map(|i| gt_frame(i, &[(1, 0.0, 0.0)])).collect();
        let hyp: Vec<HypothesisFrame> = (0..5).map(|i| hyp_frame(i, &[])).collect();
        let report = evaluate(&gt, &hyp, &EvalOptions::default()).unwrap();
        assert_eq!(report.aggregate.amota, 0.0);
        assert_eq!(report.aggregate.false_negatives, 5);
    }

    #[test]
    fn no_ground_truth_is_an_error() {
        let gt = vec![gt_frame(0, &[])];
        let hyp = vec![hyp_frame(0, &[])];
        assert!(evaluate(&gt, &hyp, &EvalOptions::default()).is_err());
    }

    #[test]
    fn amota_invariant_to_monotone_score_rescale() {
        let gt: Vec<GroundTruthFrame> = (0..8)
            .map(|i| gt_frame(i, &[(1, i as f64, 0.0), (2, 20.0 - i as f64, 8.0)]))
            .collect();
        // imperfect hypotheses: one track lost halfway
        let hyp: Vec<HypothesisFrame> = (0..8)
            .map(|i| {
                if i < 4 {
                    hyp_frame(
                        i,
                        &[(1, i as f64, 0.0, 0.9), (2, 20.0 - i as f64, 8.0, 0.5)],
                    )
                } else {
                    hyp_frame(i, &[(1, i as f64, 0.0, 0.9)])
                }
            })
            .collect();
        let base = evaluate(&gt, &hyp, &EvalOptions::default()).unwrap();
        let rescaled: Vec<HypothesisFrame> = hyp
            .iter()
            .map(|f| HypothesisFrame {
                frame_index: f.frame_index,
                objects: f
                    .objects
                    .iter()
                    .map(|o| HypObject {
                        score: o.score * 0.5 + 0.1, // monotone map
                        ..o.clone()
                    })
                    .collect(),
            })
            .collect();
        let moved = evaluate(&gt, &rescaled, &EvalOptions::default()).unwrap();
        assert_abs_diff_eq!(base.aggregate.amota, moved.aggregate.amota, epsilon = 1e-12);
    }

    #[test]
    fn clutter_track_never_raises_mota() {
        let gt: Vec<GroundTruthFrame> = (0..6).map(|i| gt_frame(i, &[(1, 0.0, 0.0)])).collect();
        let clean: Vec<HypothesisFrame> = (0..6)
            .map(|i| hyp_frame(i, &[(1, 0.0, 0.0, 0.9)]))
            .collect();
        let noisy: Vec<HypothesisFrame> = (0..6)
            .map(|i| hyp_frame(i, &[(1, 0.0, 0.0, 0.9), (99, 40.0, 40.0, 0.3)]))
            .collect();
        let base = evaluate(&gt, &clean, &EvalOptions::default()).unwrap();
        let polluted = evaluate(&gt, &noisy, &EvalOptions::default()).unwrap();
        assert!(polluted.aggregate.mota <= base.aggregate.mota);
    }

    #[test]
    fn generator_is_deterministic_and_noise_free_at_zero_sigma() {
        let spec = SynthSpec {
            sigma_pos: 0.0,
            drop_rate: 0.0,
            clutter_rate: 0.0,
            objects: 3,
            frames: 5,
            ..SynthSpec::default()
        };
        let (frames_a, gt_a) = synth_scenario(&spec);
        let (frames_b, gt_b) = synth_scenario(&spec);
        assert_eq!(frames_a, frames_b);
        assert_eq!(gt_a, gt_b);
        for (frame, gtf) in frames_a.iter().zip(&gt_a) {
            assert_eq!(frame.detections.len(), gtf.objects.len());
            for (det, gt_obj) in frame.detections.iter().zip(&gtf.objects) {
                assert_eq!(det.box3d, gt_obj.box3d);
            }
        }
    }

    #[test]
    fn generator_matches_closed_form_linear_positions() {
        let spec = SynthSpec {
            sigma_pos: 0.0,
            drop_rate: 0.0,
            clutter_rate: 0.0,
            objects: 2,
            frames: 10,
            ..SynthSpec::default()
        };
        let (_, gt) = synth_scenario(&spec);
        for obj_idx in 0..2 {
            let p0 = gt[0].objects[obj_idx].box3d;
            let v = p0.velocity;
            for (f, frame) in gt.iter().enumerate() {
                let t = f as f64 * spec.dt;
                let p = frame.objects[obj_idx].box3d;
                assert_abs_diff_eq!(p.center[0], p0.center[0] + v[0] * t, epsilon = 1e-9);
                assert_abs_diff_eq!(p.center[1], p0.center[1] + v[1] * t, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn synth_spec_grammar() {
        let spec = SynthSpec::from_str(
            "objects = 4\nframes = 12\nmotion = turning\ncategories = car, pedestrian\nseed = 9\n",
        )
        .unwrap();
        assert_eq!(spec.objects, 4);
        assert_eq!(spec.motion, MotionKind::Turning);
        assert_eq!(spec.categories, vec![Category::Car, Category::Pedestrian]);
        assert!(SynthSpec::from_str("bogus = 1\n").is_err());
    }
}
