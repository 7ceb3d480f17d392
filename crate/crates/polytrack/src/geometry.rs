//! Rotated-box overlap metrics, non-maximum suppression and the voxel mask
//! that gates association.
//!
//! Footprint intersection uses Sutherland-Hodgman clipping of convex quads
//! and the shoelace formula; the generalized metrics use the convex hull of
//! both footprints as the enclosing region.

use std::collections::HashMap;

use crate::config::NmsMetric;
use crate::types::{Box3D, Detection};

/// Intersection areas below this are treated as zero.
const AREA_EPS: f64 = 1e-12;

/// Convex counter-clockwise footprint polygon.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon2D {
    vertices: Vec<[f64; 2]>,
}

impl Polygon2D {
    /// Wraps a vertex list that is already convex and counter-clockwise.
    pub fn new(vertices: Vec<[f64; 2]>) -> Polygon2D {
        debug_assert!(vertices.len() >= 3);
        Polygon2D { vertices }
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        shoelace_area(&self.vertices)
    }
}

fn shoelace_area(points: &[[f64; 2]]) -> f64 {
    if points.len() < 3 {
        return 0.0;
    }
    let mut twice_area = 0.0;
    for i in 0..points.len() {
        let [x0, y0] = points[i];
        let [x1, y1] = points[(i + 1) % points.len()];
        twice_area += x0 * y1 - x1 * y0;
    }
    twice_area / 2.0
}

/// Counter-clockwise 4-vertex footprint of a box rotated by its yaw.
pub fn bev_polygon(b: &Box3D) -> Polygon2D {
    let (half_l, half_w) = (b.size[0] / 2.0, b.size[1] / 2.0);
    let (sin_yaw, cos_yaw) = b.yaw.sin_cos();
    let corners = [
        [half_l, half_w],
        [-half_l, half_w],
        [-half_l, -half_w],
        [half_l, -half_w],
    ];
    let vertices = corners
        .iter()
        .map(|[cx, cy]| {
            [
                b.center[0] + cx * cos_yaw - cy * sin_yaw,
                b.center[1] + cx * sin_yaw + cy * cos_yaw,
            ]
        })
        .collect();
    Polygon2D::new(vertices)
}

/// Clips a convex CCW subject polygon against a convex CCW clip polygon.
fn clip_convex(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut output: Vec<[f64; 2]> = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let [ax, ay] = clip[i];
        let [bx, by] = clip[(i + 1) % clip.len()];
        // signed distance > 0 means left of edge a->b (inside for CCW clip)
        let side = |p: &[f64; 2]| (bx - ax) * (p[1] - ay) - (by - ay) * (p[0] - ax);
        let input = std::mem::take(&mut output);
        for j in 0..input.len() {
            let current = input[j];
            let next = input[(j + 1) % input.len()];
            let side_cur = side(&current);
            let side_next = side(&next);
            if side_cur >= 0.0 {
                output.push(current);
            }
            if (side_cur > 0.0 && side_next < 0.0) || (side_cur < 0.0 && side_next > 0.0) {
                let t = side_cur / (side_cur - side_next);
                output.push([
                    current[0] + t * (next[0] - current[0]),
                    current[1] + t * (next[1] - current[1]),
                ]);
            }
        }
    }
    output
}

fn intersection_area(a: &Polygon2D, b: &Polygon2D) -> f64 {
    let clipped = clip_convex(a.vertices(), b.vertices());
    let area = shoelace_area(&clipped);
    if area < AREA_EPS {
        0.0
    } else {
        area
    }
}

/// Convex hull via monotone chain; returns CCW vertices.
fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = points.to_vec();
    pts.sort_by(|p, q| p.partial_cmp(q).unwrap());
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: &[f64; 2], a: &[f64; 2], b: &[f64; 2]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(pts.len() * 2);
    for p in pts.iter().chain(pts.iter().rev().skip(1)) {
        while hull.len() >= 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(*p);
    }
    hull.pop();
    hull
}

fn hull_area(a: &Polygon2D, b: &Polygon2D) -> f64 {
    let mut points = a.vertices().to_vec();
    points.extend_from_slice(b.vertices());
    shoelace_area(&convex_hull(&points))
}

/// Footprint intersection-over-union.
pub fn iou_bev(a: &Box3D, b: &Box3D) -> f64 {
    let pa = bev_polygon(a);
    let pb = bev_polygon(b);
    let inter = intersection_area(&pa, &pb);
    let union = pa.area() + pb.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

fn vertical_overlap(a: &Box3D, b: &Box3D) -> f64 {
    (a.top_z().min(b.top_z()) - a.bottom_z().max(b.bottom_z())).max(0.0)
}

/// Volumetric intersection-over-union (footprint overlap times z-overlap).
pub fn iou_3d(a: &Box3D, b: &Box3D) -> f64 {
    let inter = intersection_area(&bev_polygon(a), &bev_polygon(b)) * vertical_overlap(a, b);
    let union = a.volume() + b.volume() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Generalized footprint IoU in `(-1, 1]`; penalizes the empty part of the
/// convex hull enclosing both footprints.
pub fn giou_bev(a: &Box3D, b: &Box3D) -> f64 {
    let pa = bev_polygon(a);
    let pb = bev_polygon(b);
    let inter = intersection_area(&pa, &pb);
    let union = pa.area() + pb.area() - inter;
    let hull = hull_area(&pa, &pb);
    if union <= 0.0 || hull <= 0.0 {
        return 0.0;
    }
    inter / union - (hull - union) / hull
}

/// Generalized volumetric IoU; the enclosing volume is the footprint hull
/// extruded over the joint z-extent.
pub fn giou_3d(a: &Box3D, b: &Box3D) -> f64 {
    let pa = bev_polygon(a);
    let pb = bev_polygon(b);
    let inter = intersection_area(&pa, &pb) * vertical_overlap(a, b);
    let union = a.volume() + b.volume() - inter;
    let z_extent = a.top_z().max(b.top_z()) - a.bottom_z().min(b.bottom_z());
    let hull_volume = hull_area(&pa, &pb) * z_extent;
    if union <= 0.0 || hull_volume <= 0.0 {
        return 0.0;
    }
    inter / union - (hull_volume - union) / hull_volume
}

/// Euclidean distance between the footprint centers.
pub fn center_distance(a: &Box3D, b: &Box3D) -> f64 {
    let dx = a.center[0] - b.center[0];
    let dy = a.center[1] - b.center[1];
    dx.hypot(dy)
}

/// Integer BEV cell coordinates of a position at a given cell size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VoxelIndex {
    pub i: i64,
    pub j: i64,
}

pub fn voxel_index(x: f64, y: f64, voxel_size: f64) -> VoxelIndex {
    VoxelIndex {
        i: (x / voxel_size).floor() as i64,
        j: (y / voxel_size).floor() as i64,
    }
}

fn cells_adjacent(a: VoxelIndex, b: VoxelIndex) -> bool {
    (a.i - b.i).abs() <= 1 && (a.j - b.j).abs() <= 1
}

/// Feasibility mask over detection x track BEV centers: true iff the two
/// centers fall in the same or 8-adjacent cells.
pub fn voxel_mask(
    det_centers: &[[f64; 2]],
    track_centers: &[[f64; 2]],
    voxel_size: f64,
) -> Vec<Vec<bool>> {
    let track_cells: Vec<VoxelIndex> = track_centers
        .iter()
        .map(|c| voxel_index(c[0], c[1], voxel_size))
        .collect();
    det_centers
        .iter()
        .map(|c| {
            let det_cell = voxel_index(c[0], c[1], voxel_size);
            track_cells
                .iter()
                .map(|&tc| cells_adjacent(det_cell, tc))
                .collect()
        })
        .collect()
}

/// Counters reported by the suppression pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NmsStats {
    /// Number of pairwise overlap evaluations performed.
    pub comparisons: u64,
}

fn overlap(metric: NmsMetric, a: &Box3D, b: &Box3D) -> f64 {
    match metric {
        NmsMetric::IouBev => iou_bev(a, b),
        NmsMetric::Iou3d => iou_3d(a, b),
    }
}

/// Greedy score-ordered suppression. Keeps the highest-scoring box of every
/// overlapping group (overlap strictly above `threshold` suppresses); ties
/// broken by lower `detection_id`. Output is in descending-score order.
///
/// A spatial grid skips far-apart pairs. The cell edge is `voxel_size`
/// widened to the largest footprint diagonal in the input so that skipped
/// pairs provably cannot overlap, keeping the result identical to the
/// quadratic scan.
pub fn nms(dets: &[Detection], threshold: f64, metric: NmsMetric, voxel_size: f64) -> Vec<Detection> {
    nms_with_stats(dets, threshold, metric, voxel_size).0
}

pub fn nms_with_stats(
    dets: &[Detection],
    threshold: f64,
    metric: NmsMetric,
    voxel_size: f64,
) -> (Vec<Detection>, NmsStats) {
    let mut stats = NmsStats::default();
    if dets.is_empty() {
        return (Vec::new(), stats);
    }

    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .score
            .partial_cmp(&dets[a].score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(dets[a].detection_id.cmp(&dets[b].detection_id))
    });

    let max_diag = dets
        .iter()
        .map(|d| (d.box3d.size[0].powi(2) + d.box3d.size[1].powi(2)).sqrt())
        .fold(0.0_f64, f64::max);
    let cell = voxel_size.max(max_diag).max(1e-9);

    let mut grid: HashMap<VoxelIndex, Vec<usize>> = HashMap::new();
    let mut kept: Vec<Detection> = Vec::new();

    for &idx in &order {
        let candidate = &dets[idx];
        let cell_idx = voxel_index(candidate.box3d.center[0], candidate.box3d.center[1], cell);
        let mut suppressed = false;
        'neighbors: for di in -1..=1 {
            for dj in -1..=1 {
                let neighbor = VoxelIndex {
                    i: cell_idx.i + di,
                    j: cell_idx.j + dj,
                };
                if let Some(bucket) = grid.get(&neighbor) {
                    for &kept_idx in bucket {
                        stats.comparisons += 1;
                        if overlap(metric, &candidate.box3d, &kept[kept_idx].box3d) > threshold {
                            suppressed = true;
                            break 'neighbors;
                        }
                    }
                }
            }
        }
        if !suppressed {
            grid.entry(cell_idx).or_default().push(kept.len());
            kept.push(*candidate);
        }
    }
    (kept, stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Category;
    use approx::assert_abs_diff_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn boxed(x: f64, y: f64, z: f64, l: f64, w: f64, h: f64, yaw: f64) -> Box3D {
        Box3D::new([x, y, z], [l, w, h], yaw, [0.0, 0.0])
    }

    fn det(b: Box3D, score: f64, id: u32) -> Detection {
        Detection {
            box3d: b,
            score,
            category: Category::Car,
            frame_index: 0,
            detection_id: id,
        }
    }

    fn random_box(rng: &mut StdRng, span: f64, max_size: f64) -> Box3D {
        boxed(
            rng.random_range(-span..span),
            rng.random_range(-span..span),
            rng.random_range(-1.0..1.0),
            rng.random_range(0.5..max_size),
            rng.random_range(0.5..max_size),
            rng.random_range(0.5..3.0),
            rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
        )
    }

    /// Monte-Carlo BEV IoU estimate by uniform sampling over the joint AABB.
    fn sampled_iou_bev(a: &Box3D, b: &Box3D, samples: usize, rng: &mut StdRng) -> f64 {
        let pa = bev_polygon(a);
        let pb = bev_polygon(b);
        let all: Vec<[f64; 2]> = pa.vertices().iter().chain(pb.vertices()).copied().collect();
        let min_x = all.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        let max_x = all.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        let min_y = all.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
        let max_y = all.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
        let inside = |poly: &Polygon2D, p: [f64; 2]| {
            let v = poly.vertices();
            (0..v.len()).all(|i| {
                let a = v[i];
                let b = v[(i + 1) % v.len()];
                (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= 0.0
            })
        };
        let (mut in_a, mut in_b, mut in_both) = (0u64, 0u64, 0u64);
        for _ in 0..samples {
            let p = [
                rng.random_range(min_x..max_x),
                rng.random_range(min_y..max_y),
            ];
            let a_hit = inside(&pa, p);
            let b_hit = inside(&pb, p);
            in_a += a_hit as u64;
            in_b += b_hit as u64;
            in_both += (a_hit && b_hit) as u64;
        }
        let union = in_a + in_b - in_both;
        if union == 0 {
            0.0
        } else {
            in_both as f64 / union as f64
        }
    }

    fn brute_force_nms(dets: &[Detection], threshold: f64, metric: NmsMetric) -> Vec<Detection> {
        let mut order: Vec<usize> = (0..dets.len()).collect();
        order.sort_by(|&a, &b| {
            dets[b]
                .score
                .partial_cmp(&dets[a].score)
                .unwrap()
                .then(dets[a].detection_id.cmp(&dets[b].detection_id))
        });
        let mut kept: Vec<Detection> = Vec::new();
        for &i in &order {
            if kept
                .iter()
                .all(|k| overlap(metric, &dets[i].box3d, &k.box3d) <= threshold)
            {
                kept.push(dets[i]);
            }
        }
        kept
    }

    #[test]
    fn bev_polygon_axis_aligned_unit_box() {
        let p = bev_polygon(&boxed(0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0));
        let mut verts = p.vertices().to_vec();
        verts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut expected = vec![[0.5, 0.5], [-0.5, 0.5], [-0.5, -0.5], [0.5, -0.5]];
        expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (v, e) in verts.iter().zip(&expected) {
            assert_abs_diff_eq!(v[0], e[0], epsilon = 1e-12);
            assert_abs_diff_eq!(v[1], e[1], epsilon = 1e-12);
        }
        assert_abs_diff_eq!(p.area(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn bev_polygon_quarter_turn_square_symmetry() {
        let p0 = bev_polygon(&boxed(0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0));
        let p90 = bev_polygon(&boxed(0.0, 0.0, 0.0, 1.0, 1.0, 1.0, std::f64::consts::FRAC_PI_2));
        let mut v0 = p0.vertices().to_vec();
        let mut v90 = p90.vertices().to_vec();
        let canon = |v: &mut Vec<[f64; 2]>| {
            for p in v.iter_mut() {
                p[0] = (p[0] * 1e9).round() / 1e9;
                p[1] = (p[1] * 1e9).round() / 1e9;
            }
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        };
        canon(&mut v0);
        canon(&mut v90);
        assert_eq!(v0, v90);
    }

    #[test]
    fn bev_polygon_rotated_rectangle() {
        // 2x1 box at 45 degrees: corners are the rotation of (+-1, +-0.5)
        let p = bev_polygon(&boxed(0.0, 0.0, 0.0, 2.0, 1.0, 1.0, std::f64::consts::FRAC_PI_4));
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let expect = [
            [r * (1.0 - 0.5), r * (1.0 + 0.5)],
            [r * (-1.0 - 0.5), r * (-1.0 + 0.5)],
            [r * (-1.0 + 0.5), r * (-1.0 - 0.5)],
            [r * (1.0 + 0.5), r * (1.0 - 0.5)],
        ];
        for e in expect {
            assert!(
                p.vertices()
                    .iter()
                    .any(|v| (v[0] - e[0]).abs() < 1e-12 && (v[1] - e[1]).abs() < 1e-12),
                "missing vertex {e:?} in {:?}",
                p.vertices()
            );
        }
    }

    #[test]
    fn iou_bev_known_values() {
        let a = boxed(0.0, 0.0, 0.0, 2.0, 2.0, 1.0, 0.0);
        assert_abs_diff_eq!(iou_bev(&a, &a), 1.0, epsilon = 1e-12);
        let far = boxed(100.0, 0.0, 0.0, 2.0, 2.0, 1.0, 0.0);
        assert_eq!(iou_bev(&a, &far), 0.0);
        // two 2x2 squares offset by (1, 0): overlap 2, union 6
        let shifted = boxed(1.0, 0.0, 0.0, 2.0, 2.0, 1.0, 0.0);
        assert_abs_diff_eq!(iou_bev(&a, &shifted), 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn iou_3d_known_values() {
        let a = boxed(0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0);
        assert_abs_diff_eq!(iou_3d(&a, &a), 1.0, epsilon = 1e-12);
        let stacked = boxed(0.0, 0.0, 5.0, 1.0, 1.0, 1.0, 0.0);
        assert_eq!(iou_3d(&a, &stacked), 0.0);
        let shifted = boxed(0.5, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0);
        assert_abs_diff_eq!(iou_3d(&a, &shifted), 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn giou_bev_known_values() {
        let a = boxed(0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0);
        assert_abs_diff_eq!(giou_bev(&a, &a), 1.0, epsilon = 1e-12);
        // unit squares offset (2,0): iou 0, union 2, hull 3
        let apart = boxed(2.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0);
        assert_abs_diff_eq!(giou_bev(&a, &apart), -1.0 / 3.0, epsilon = 1e-12);
        // touching squares: hull equals union
        let touching = boxed(1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0);
        assert_abs_diff_eq!(giou_bev(&a, &touching), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn giou_3d_known_values() {
        let a = boxed(0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0);
        assert_abs_diff_eq!(giou_3d(&a, &a), 1.0, epsilon = 1e-12);
        // unit cubes offset (0.5, 0, 0): hull volume equals union volume
        let shifted = boxed(0.5, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0);
        assert_abs_diff_eq!(giou_3d(&a, &shifted), 1.0 / 3.0, epsilon = 1e-12);
        // far apart the metric approaches -1
        let far = boxed(100.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0);
        assert!(giou_3d(&a, &far) < -0.9);
    }

    #[test]
    fn center_distance_known_values() {
        let a = boxed(0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0);
        assert_eq!(center_distance(&a, &a), 0.0);
        let b = boxed(3.0, 4.0, 10.0, 1.0, 1.0, 1.0, 0.0);
        assert_abs_diff_eq!(center_distance(&a, &b), 5.0, epsilon = 1e-12);
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..50 {
            let p = random_box(&mut rng, 20.0, 4.0);
            let q = random_box(&mut rng, 20.0, 4.0);
            let expect =
                ((p.center[0] - q.center[0]).powi(2) + (p.center[1] - q.center[1]).powi(2)).sqrt();
            assert_abs_diff_eq!(center_distance(&p, &q), expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn metrics_are_symmetric() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..200 {
            let a = random_box(&mut rng, 5.0, 4.0);
            let b = random_box(&mut rng, 5.0, 4.0);
            assert_abs_diff_eq!(iou_bev(&a, &b), iou_bev(&b, &a), epsilon = 1e-12);
            assert_abs_diff_eq!(iou_3d(&a, &b), iou_3d(&b, &a), epsilon = 1e-12);
            assert_abs_diff_eq!(giou_bev(&a, &b), giou_bev(&b, &a), epsilon = 1e-12);
            assert_abs_diff_eq!(giou_3d(&a, &b), giou_3d(&b, &a), epsilon = 1e-12);
        }
    }

    #[test]
    fn metric_ranges_and_giou_bound() {
        let mut rng = StdRng::seed_from_u64(13);
        for _ in 0..300 {
            let a = random_box(&mut rng, 4.0, 4.0);
            let b = random_box(&mut rng, 4.0, 4.0);
            let iou2 = iou_bev(&a, &b);
            let iou3 = iou_3d(&a, &b);
            assert!((0.0..=1.0).contains(&iou2));
            assert!((0.0..=1.0).contains(&iou3));
            assert!(giou_bev(&a, &b) <= iou2 + 1e-12);
            assert!(giou_3d(&a, &b) <= iou3 + 1e-12);
            assert!(giou_bev(&a, &b) > -1.0);
        }
    }

    #[test]
    fn metrics_invariant_under_rigid_transform() {
        let mut rng = StdRng::seed_from_u64(23);
        for _ in 0..100 {
            let a = random_box(&mut rng, 5.0, 4.0);
            let b = random_box(&mut rng, 5.0, 4.0);
            let angle: f64 = rng.random_range(-3.0..3.0);
            let (tx, ty) = (rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0));
            let transform = |bx: &Box3D| {
                let (s, c) = angle.sin_cos();
                Box3D::new(
                    [
                        c * bx.center[0] - s * bx.center[1] + tx,
                        s * bx.center[0] + c * bx.center[1] + ty,
                        bx.center[2],
                    ],
                    bx.size,
                    bx.yaw + angle,
                    bx.velocity,
                )
            };
            let (ta, tb) = (transform(&a), transform(&b));
            assert_abs_diff_eq!(iou_bev(&a, &b), iou_bev(&ta, &tb), epsilon = 1e-9);
            assert_abs_diff_eq!(giou_3d(&a, &b), giou_3d(&ta, &tb), epsilon = 1e-9);
        }
    }

    #[test]
    fn monte_carlo_iou_oracle() {
        let mut rng = StdRng::seed_from_u64(31);
        for trial in 0..30 {
            let a = random_box(&mut rng, 3.0, 4.0);
            let mut b = random_box(&mut rng, 3.0, 4.0);
            // bias towards overlapping pairs
            if trial % 2 == 0 {
                b.center[0] = a.center[0] + rng.random_range(-2.0..2.0);
                b.center[1] = a.center[1] + rng.random_range(-2.0..2.0);
            }
            let exact = iou_bev(&a, &b);
            let sampled = sampled_iou_bev(&a, &b, 200_000, &mut rng);
            assert!(
                (exact - sampled).abs() < 0.01,
                "exact {exact} vs sampled {sampled}"
            );
        }
    }

    #[test]
    fn voxel_mask_adjacency() {
        assert_eq!(
            voxel_mask(&[[0.0, 0.0]], &[[0.0, 0.0]], 5.0),
            vec![vec![true]]
        );
        assert_eq!(
            voxel_mask(&[[0.0, 0.0]], &[[100.0, 0.0]], 5.0),
            vec![vec![false]]
        );
        // 4.9 m apart straddling the cell border at x = 5: cells 0 and 1
        assert_eq!(
            voxel_mask(&[[4.0, 0.0]], &[[8.9, 0.0]], 5.0),
            vec![vec![true]]
        );
    }

    #[test]
    fn nms_single_and_duplicate() {
        let b = boxed(0.0, 0.0, 0.0, 4.0, 2.0, 1.5, 0.3);
        let single = nms(&[det(b, 0.7, 0)], 0.08, NmsMetric::IouBev, 5.0);
        assert_eq!(single.len(), 1);

        let pair = [det(b, 0.9, 0), det(b, 0.8, 1)];
        let kept = nms(&pair, 0.08, NmsMetric::IouBev, 5.0);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].score, 0.9);
    }

    #[test]
    fn nms_matches_brute_force_on_random_scenes() {
        let mut rng = StdRng::seed_from_u64(41);
        for _ in 0..100 {
            let n = rng.random_range(0..25);
            let dets: Vec<Detection> = (0..n)
                .map(|i| {
                    det(
                        random_box(&mut rng, 15.0, 6.0),
                        rng.random_range(0.05..1.0),
                        i as u32,
                    )
                })
                .collect();
            let fast = nms(&dets, 0.08, NmsMetric::IouBev, 5.0);
            let slow = brute_force_nms(&dets, 0.08, NmsMetric::IouBev);
            assert_eq!(fast, slow);
        }
    }

    #[test]
    fn nms_is_idempotent() {
        let mut rng = StdRng::seed_from_u64(43);
        for _ in 0..50 {
            let dets: Vec<Detection> = (0..15)
                .map(|i| {
                    det(
                        random_box(&mut rng, 10.0, 5.0),
                        rng.random_range(0.05..1.0),
                        i as u32,
                    )
                })
                .collect();
            let once = nms(&dets, 0.1, NmsMetric::Iou3d, 5.0);
            let twice = nms(&once, 0.1, NmsMetric::Iou3d, 5.0);
            assert_eq!(once, twice);
        }
    }

    #[test]
    fn nms_large_voxel_equals_unmasked() {
        let mut rng = StdRng::seed_from_u64(47);
        let dets: Vec<Detection> = (0..30)
            .map(|i| {
                det(
                    random_box(&mut rng, 20.0, 5.0),
                    rng.random_range(0.05..1.0),
                    i as u32,
                )
            })
            .collect();
        // scene diameter well below this cell size: grid degenerates
        let wide = nms(&dets, 0.08, NmsMetric::IouBev, 1e6);
        let slow = brute_force_nms(&dets, 0.08, NmsMetric::IouBev);
        assert_eq!(wide, slow);
    }

    #[test]
    fn nms_empty_input() {
        assert!(nms(&[], 0.08, NmsMetric::IouBev, 5.0).is_empty());
    }
}
