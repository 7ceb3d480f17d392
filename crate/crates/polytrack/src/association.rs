//! Detection-track association: per-category cost tensors and the four
//! solvers (Hungarian, Greedy, mutual nearest neighbor, and the
//! hypothesis-based DTO variant), plus the two-stage frame association.

use nalgebra::DMatrix;

use crate::config::{PerCategory, Solver, TrackerConfig};
use crate::geometry;
use crate::types::{Category, Detection, TrackStatus, Tracklet};

/// Cost assigned to infeasible (masked) pairs.
pub const COST_SENTINEL: f64 = 1e9;

/// Outcome of one association pass. Detection/track indices each appear
/// exactly once across the matched pairs and the unmatched lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssociationResult {
    /// (detection index, track index) pairs, sorted by detection index.
    pub matched: Vec<(usize, usize)>,
    pub unmatched_dets: Vec<usize>,
    pub unmatched_tracks: Vec<usize>,
}

impl AssociationResult {
    pub fn empty(n_dets: usize, n_tracks: usize) -> AssociationResult {
        AssociationResult {
            matched: Vec::new(),
            unmatched_dets: (0..n_dets).collect(),
            unmatched_tracks: (0..n_tracks).collect(),
        }
    }

    fn from_pairs(pairs: Vec<(usize, usize)>, n_dets: usize, n_tracks: usize) -> AssociationResult {
        let mut det_used = vec![false; n_dets];
        let mut track_used = vec![false; n_tracks];
        for &(d, t) in &pairs {
            det_used[d] = true;
            track_used[t] = true;
        }
        let mut matched = pairs;
        matched.sort_unstable();
        AssociationResult {
            matched,
            unmatched_dets: (0..n_dets).filter(|&d| !det_used[d]).collect(),
            unmatched_tracks: (0..n_tracks).filter(|&t| !track_used[t]).collect(),
        }
    }
}

/// One candidate assignment with its log-likelihood score.
#[derive(Debug, Clone)]
pub struct Hypothesis {
    pub assignment: AssociationResult,
    pub log_likelihood: f64,
}

/// Per-category cost slice with the global indices it was built from.
#[derive(Debug, Clone)]
pub struct CategorySlice {
    pub category: Category,
    /// Global detection indices backing the matrix rows.
    pub det_indices: Vec<usize>,
    /// Global track indices backing the matrix columns.
    pub track_indices: Vec<usize>,
    pub costs: DMatrix<f64>,
}

/// Per-category detection x track cost matrices; masked pairs carry
/// [`COST_SENTINEL`].
#[derive(Debug, Clone, Default)]
pub struct CostTensor {
    pub slices: Vec<CategorySlice>,
}

impl CostTensor {
    pub fn total_dets(&self) -> usize {
        self.slices.iter().map(|s| s.det_indices.len()).sum()
    }

    pub fn total_tracks(&self) -> usize {
        self.slices.iter().map(|s| s.track_indices.len()).sum()
    }
}

/// Affinity used when filling a cost matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostMetric {
    /// `1 - giou_3d`, the first-stage association cost.
    Giou3d,
    /// `1 - giou_bev`.
    GiouBev,
    /// BEV center distance divided by `norm`.
    CenterDistance { norm: f64 },
}

fn pair_cost(metric: CostMetric, det: &Detection, track_box: &crate::types::Box3D) -> f64 {
    match metric {
        CostMetric::Giou3d => 1.0 - geometry::giou_3d(&det.box3d, track_box),
        CostMetric::GiouBev => 1.0 - geometry::giou_bev(&det.box3d, track_box),
        CostMetric::CenterDistance { norm } => {
            geometry::center_distance(&det.box3d, track_box) / norm
        }
    }
}

/// Builds per-category cost matrices over the given detections and tracks.
/// `mask[i][j]` false marks the pair infeasible; cross-category pairs never
/// share a matrix.
pub fn build_costs(
    dets: &[Detection],
    tracks: &[Tracklet],
    mask: &[Vec<bool>],
    metric: CostMetric,
) -> CostTensor {
    let track_boxes: Vec<crate::types::Box3D> = tracks.iter().map(|t| t.current_box()).collect();
    let mut slices = Vec::new();
    for category in Category::ALL {
        let det_indices: Vec<usize> = (0..dets.len())
            .filter(|&i| dets[i].category == category)
            .collect();
        let track_indices: Vec<usize> = (0..tracks.len())
            .filter(|&j| tracks[j].category == category)
            .collect();
        if det_indices.is_empty() && track_indices.is_empty() {
            continue;
        }
        let costs = DMatrix::from_fn(det_indices.len(), track_indices.len(), |r, c| {
            let (i, j) = (det_indices[r], track_indices[c]);
            if mask[i][j] {
                pair_cost(metric, &dets[i], &track_boxes[j])
            } else {
                COST_SENTINEL
            }
        });
        slices.push(CategorySlice {
            category,
            det_indices,
            track_indices,
            costs,
        });
    }
    CostTensor { slices }
}

/// Minimum-cost assignment of min(rows, cols) pairs via shortest augmenting
/// paths (Jonker-Volgenant style potentials), exact on f64 costs.
fn solve_lap_min(costs: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let (rows, cols) = costs.shape();
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    if rows > cols {
        let transposed = costs.transpose();
        return solve_lap_inner(&transposed)
            .into_iter()
            .map(|(r, c)| (c, r))
            .collect();
    }
    solve_lap_inner(costs)
}

/// Core solver; requires rows <= cols. 1-based internal arrays, column 0 is
/// the virtual source.
fn solve_lap_inner(costs: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let (n, m) = costs.shape();
    let mut u = vec![0.0_f64; n + 1];
    let mut v = vec![0.0_f64; m + 1];
    let mut col_match = vec![0_usize; m + 1]; // row matched to column (0 = none)
    let mut path = vec![0_usize; m + 1];

    for row in 1..=n {
        col_match[0] = row;
        let mut j0 = 0_usize;
        let mut min_slack = vec![f64::INFINITY; m + 1];
        let mut visited = vec![false; m + 1];
        loop {
            visited[j0] = true;
            let i0 = col_match[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0_usize;
            for j in 1..=m {
                if visited[j] {
                    continue;
                }
                let reduced = costs[(i0 - 1, j - 1)] - u[i0] - v[j];
                if reduced < min_slack[j] {
                    min_slack[j] = reduced;
                    path[j] = j0;
                }
                if min_slack[j] < delta {
                    delta = min_slack[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if visited[j] {
                    u[col_match[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            j0 = j1;
            if col_match[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = path[j0];
            col_match[j0] = col_match[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut pairs = Vec::with_capacity(n);
    for j in 1..=m {
        if col_match[j] != 0 {
            pairs.push((col_match[j] - 1, j - 1));
        }
    }
    pairs.sort_unstable();
    pairs
}

/// Optimal assignment followed by threshold gating: pairs with cost above
/// `threshold` are demoted to unmatched.
pub fn hungarian(costs: &DMatrix<f64>, threshold: f64) -> AssociationResult {
    let (n_dets, n_tracks) = costs.shape();
    let pairs = solve_lap_min(costs)
        .into_iter()
        .filter(|&(d, t)| costs[(d, t)] <= threshold)
        .collect();
    AssociationResult::from_pairs(pairs, n_dets, n_tracks)
}

/// Repeatedly matches the globally smallest remaining entry within the
/// threshold; ties break on (row, col) order.
pub fn greedy(costs: &DMatrix<f64>, threshold: f64) -> AssociationResult {
    let (n_dets, n_tracks) = costs.shape();
    let mut det_free = vec![true; n_dets];
    let mut track_free = vec![true; n_tracks];
    let mut pairs = Vec::new();
    loop {
        let mut best: Option<(usize, usize)> = None;
        let mut best_cost = f64::INFINITY;
        for d in 0..n_dets {
            if !det_free[d] {
                continue;
            }
            for t in 0..n_tracks {
                if !track_free[t] {
                    continue;
                }
                let c = costs[(d, t)];
                if c < best_cost {
                    best_cost = c;
                    best = Some((d, t));
                }
            }
        }
        match best {
            Some((d, t)) if best_cost <= threshold => {
                det_free[d] = false;
                track_free[t] = false;
                pairs.push((d, t));
            }
            _ => break,
        }
    }
    AssociationResult::from_pairs(pairs, n_dets, n_tracks)
}

/// Mutual-nearest-neighbor matching: a pair matches iff each side is the
/// other's arg-min (ties to the lowest index) and the cost passes the gate.
pub fn mnn(costs: &DMatrix<f64>, threshold: f64) -> AssociationResult {
    let (n_dets, n_tracks) = costs.shape();
    if n_dets == 0 || n_tracks == 0 {
        return AssociationResult::empty(n_dets, n_tracks);
    }
    let row_argmin: Vec<usize> = (0..n_dets)
        .map(|d| (0..n_tracks).min_by(|&a, &b| costs[(d, a)].partial_cmp(&costs[(d, b)]).unwrap()).unwrap())
        .collect();
    let col_argmin: Vec<usize> = (0..n_tracks)
        .map(|t| (0..n_dets).min_by(|&a, &b| costs[(a, t)].partial_cmp(&costs[(b, t)]).unwrap()).unwrap())
        .collect();
    let pairs = (0..n_dets)
        .filter_map(|d| {
            let t = row_argmin[d];
            (col_argmin[t] == d && costs[(d, t)] <= threshold).then_some((d, t))
        })
        .collect();
    AssociationResult::from_pairs(pairs, n_dets, n_tracks)
}

fn hypothesis_log_likelihood(result: &AssociationResult, costs: &DMatrix<f64>, tau: f64) -> f64 {
    let matched_cost: f64 = result.matched.iter().map(|&(d, t)| costs[(d, t)]).sum();
    let misses = result.unmatched_dets.len() + result.unmatched_tracks.len();
    -matched_cost - tau * misses as f64
}

/// Generates the gated candidate assignments for one category: the optimal
/// assignment plus up to `top_k - 1` alternatives obtained by forbidding one
/// of its matched pairs and re-solving, scored by log-likelihood with a
/// per-miss penalty of `tau`, then pruned at likelihood ratio `prune_alpha`.
pub fn dto_hypotheses(
    costs: &DMatrix<f64>,
    tau: f64,
    top_k: usize,
    prune_alpha: f64,
) -> Vec<Hypothesis> {
    let base = hungarian(costs, tau);
    let base_matched = base.matched.clone();
    let mut hypotheses = vec![Hypothesis {
        log_likelihood: hypothesis_log_likelihood(&base, costs, tau),
        assignment: base,
    }];
    for &(d, t) in base_matched.iter().take(top_k.saturating_sub(1)) {
        let mut forbidden = costs.clone();
        forbidden[(d, t)] = COST_SENTINEL;
        let alt = hungarian(&forbidden, tau);
        if hypotheses.iter().any(|h| h.assignment == alt) {
            continue;
        }
        // likelihood is scored against the true costs
        hypotheses.push(Hypothesis {
            log_likelihood: hypothesis_log_likelihood(&alt, costs, tau),
            assignment: alt,
        });
    }
    let best = hypotheses
        .iter()
        .map(|h| h.log_likelihood)
        .fold(f64::NEG_INFINITY, f64::max);
    let cutoff = best + prune_alpha.ln();
    hypotheses.retain(|h| h.log_likelihood >= cutoff);
    hypotheses
}

/// Commits the surviving hypotheses of one category to a single result:
/// pairs shared by every hypothesis stand, conflicts resolve to the
/// highest-likelihood hypothesis, and every committed pair is gated by tau.
fn dto_category(costs: &DMatrix<f64>, tau: f64, top_k: usize, prune_alpha: f64) -> AssociationResult {
    let (n_dets, n_tracks) = costs.shape();
    let hypotheses = dto_hypotheses(costs, tau, top_k, prune_alpha);
    let best = hypotheses
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| {
            a.log_likelihood
                .partial_cmp(&b.log_likelihood)
                .unwrap()
                .then(ib.cmp(ia)) // ties keep the earliest hypothesis
        })
        .map(|(_, h)| h)
        .expect("at least the base hypothesis exists");
    let pairs = best
        .assignment
        .matched
        .iter()
        .copied()
        .filter(|&(d, t)| costs[(d, t)] <= tau)
        .collect();
    AssociationResult::from_pairs(pairs, n_dets, n_tracks)
}

/// Per-class optimal assignment with threshold gating and the pruned
/// multi-hypothesis layer; results are merged back onto global indices.
pub fn dto(
    costs: &CostTensor,
    thresholds: &PerCategory<f64>,
    top_k: usize,
    prune_alpha: f64,
) -> AssociationResult {
    let mut matched = Vec::new();
    let mut unmatched_dets = Vec::new();
    let mut unmatched_tracks = Vec::new();
    for slice in &costs.slices {
        let local = dto_category(&slice.costs, thresholds[slice.category], top_k, prune_alpha);
        matched.extend(
            local
                .matched
                .iter()
                .map(|&(d, t)| (slice.det_indices[d], slice.track_indices[t])),
        );
        unmatched_dets.extend(local.unmatched_dets.iter().map(|&d| slice.det_indices[d]));
        unmatched_tracks.extend(local.unmatched_tracks.iter().map(|&t| slice.track_indices[t]));
    }
    matched.sort_unstable();
    unmatched_dets.sort_unstable();
    unmatched_tracks.sort_unstable();
    AssociationResult {
        matched,
        unmatched_dets,
        unmatched_tracks,
    }
}

/// Runs the configured solver over every category slice of a tensor and
/// merges the per-category results onto global indices.
pub fn solve_tensor(costs: &CostTensor, cfg: &TrackerConfig) -> AssociationResult {
    if cfg.solver == Solver::Dto {
        return dto(costs, &cfg.assoc_threshold, cfg.mht_top_k, cfg.mht_prune_alpha);
    }
    let mut matched = Vec::new();
    let mut unmatched_dets = Vec::new();
    let mut unmatched_tracks = Vec::new();
    for slice in &costs.slices {
        let tau = cfg.assoc_threshold[slice.category];
        let local = match cfg.solver {
            Solver::Hungarian => hungarian(&slice.costs, tau),
            Solver::Greedy => greedy(&slice.costs, tau),
            Solver::Mnn => mnn(&slice.costs, tau),
            Solver::Dto => unreachable!(),
        };
        matched.extend(
            local
                .matched
                .iter()
                .map(|&(d, t)| (slice.det_indices[d], slice.track_indices[t])),
        );
        unmatched_dets.extend(local.unmatched_dets.iter().map(|&d| slice.det_indices[d]));
        unmatched_tracks.extend(local.unmatched_tracks.iter().map(|&t| slice.track_indices[t]));
    }
    matched.sort_unstable();
    unmatched_dets.sort_unstable();
    unmatched_tracks.sort_unstable();
    AssociationResult {
        matched,
        unmatched_dets,
        unmatched_tracks,
    }
}

/// Two-stage frame association over predicted tracks.
///
/// Stage 1 matches all detections against confirmed tracks with the
/// configured solver on the voxel-masked `1 - giou_3d` cost. Stage 2 matches
/// the remaining detections against tentative tracks on normalized center
/// distance with a fixed gate. Indices refer to the input slices.
pub fn two_stage_associate(
    dets: &[Detection],
    tracks: &[Tracklet],
    cfg: &TrackerConfig,
) -> AssociationResult {
    let confirmed: Vec<usize> = (0..tracks.len())
        .filter(|&j| tracks[j].status == TrackStatus::Confirmed)
        .collect();
    let tentative: Vec<usize> = (0..tracks.len())
        .filter(|&j| tracks[j].status == TrackStatus::Tentative)
        .collect();

    // Stage 1: confirmed tracks, gIoU cost under the voxel mask.
    let confirmed_tracks: Vec<Tracklet> = confirmed.iter().map(|&j| tracks[j].clone()).collect();
    let det_centers: Vec<[f64; 2]> = dets
        .iter()
        .map(|d| [d.box3d.center[0], d.box3d.center[1]])
        .collect();
    let track_centers: Vec<[f64; 2]> = confirmed_tracks
        .iter()
        .map(|t| {
            let b = t.current_box();
            [b.center[0], b.center[1]]
        })
        .collect();
    let mask = geometry::voxel_mask(&det_centers, &track_centers, cfg.voxel_size);
    let tensor = build_costs(dets, &confirmed_tracks, &mask, CostMetric::Giou3d);
    let stage1 = solve_tensor(&tensor, cfg);

    let mut matched: Vec<(usize, usize)> = stage1
        .matched
        .iter()
        .map(|&(d, local_t)| (d, confirmed[local_t]))
        .collect();
    let mut unmatched_tracks: Vec<usize> = stage1
        .unmatched_tracks
        .iter()
        .map(|&local_t| confirmed[local_t])
        .collect();
    // Detections of categories with no confirmed track never appear in the
    // stage-1 tensor; they are unmatched too.
    let mut in_stage1 = vec![false; dets.len()];
    for slice in &tensor.slices {
        for &d in &slice.det_indices {
            in_stage1[d] = true;
        }
    }
    let mut leftover_dets: Vec<usize> = stage1.unmatched_dets.clone();
    leftover_dets.extend((0..dets.len()).filter(|&d| !in_stage1[d]));
    leftover_dets.sort_unstable();

    // Stage 2: tentative tracks on normalized center distance.
    let tentative_tracks: Vec<Tracklet> = tentative.iter().map(|&j| tracks[j].clone()).collect();
    let stage2_dets: Vec<Detection> = leftover_dets.iter().map(|&d| dets[d]).collect();
    let all_feasible = vec![vec![true; tentative_tracks.len()]; stage2_dets.len()];
    let tensor2 = build_costs(
        &stage2_dets,
        &tentative_tracks,
        &all_feasible,
        CostMetric::CenterDistance {
            norm: cfg.stage2_distance_norm,
        },
    );
    let mut stage2_matched_dets = vec![false; stage2_dets.len()];
    let mut stage2_matched_tracks = vec![false; tentative_tracks.len()];
    for slice in &tensor2.slices {
        let local = hungarian(&slice.costs, cfg.stage2_gate);
        for &(d, t) in &local.matched {
            let global_det = leftover_dets[slice.det_indices[d]];
            let global_track = tentative[slice.track_indices[t]];
            matched.push((global_det, global_track));
            stage2_matched_dets[slice.det_indices[d]] = true;
            stage2_matched_tracks[slice.track_indices[t]] = true;
        }
    }

    let unmatched_dets: Vec<usize> = (0..stage2_dets.len())
        .filter(|&d| !stage2_matched_dets[d])
        .map(|d| leftover_dets[d])
        .collect();
    unmatched_tracks.extend(
        (0..tentative_tracks.len())
            .filter(|&t| !stage2_matched_tracks[t])
            .map(|t| tentative[t]),
    );
    matched.sort_unstable();
    let mut unmatched_dets = unmatched_dets;
    unmatched_dets.sort_unstable();
    unmatched_tracks.sort_unstable();
    AssociationResult {
        matched,
        unmatched_dets,
        unmatched_tracks,
    }
}
