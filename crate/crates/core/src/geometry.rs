//! Point-cloud and planar geometry primitives shared by the planner,
//! contact synthesis and metrics.
//!
//! All 2D work happens in the ground plane: a [`Point3`] projects to
//! `(x, y)` and `z` is dropped.

use nalgebra::{Vector2, Vector3};

use crate::error::{FoldError, Result};

pub type Point3 = Vector3<f64>;
pub type Point2 = Vector2<f64>;

/// Ground-plane projection.
#[inline]
pub fn to_ground(p: &Point3) -> Point2 {
    Point2::new(p.x, p.y)
}

/// An N-point snapshot of the garment. Frames taken through the same
/// observer correspond index-by-index.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloudFrame {
    pub frame_id: u64,
    pub points: Vec<Point3>,
}

impl PointCloudFrame {
    pub fn new(frame_id: u64, points: Vec<Point3>) -> Self {
        Self { frame_id, points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Point3 {
        centroid(&self.points)
    }
}

/// Per-point displacement between two corresponded frames.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    pub source: u64,
    pub target: u64,
    pub displacements: Vec<Point3>,
}

impl FlowField {
    pub fn len(&self) -> usize {
        self.displacements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.displacements.is_empty()
    }

    pub fn max_norm(&self) -> f64 {
        self.displacements.iter().map(|d| d.norm()).fold(0.0, f64::max)
    }
}

pub fn centroid(points: &[Point3]) -> Point3 {
    if points.is_empty() {
        return Point3::zeros();
    }
    points.iter().sum::<Point3>() / points.len() as f64
}

/// Farthest-point sampling. The first pick is the point nearest the
/// centroid; every later pick maximizes its distance to the chosen set.
/// Ties go to the lowest index, so the result is fully deterministic.
pub fn farthest_point_sample(points: &[Point3], k: usize) -> Result<Vec<usize>> {
    if points.is_empty() {
        return Err(FoldError::EmptyInput);
    }
    if k == 0 || k > points.len() {
        return Err(FoldError::BadK { k, n: points.len() });
    }
    let c = centroid(points);
    let first = argmin_by(points.iter().map(|p| (p - c).norm_squared()));

    let mut chosen = Vec::with_capacity(k);
    let mut taken = vec![false; points.len()];
    let mut min_d2 = vec![f64::INFINITY; points.len()];
    let mut next = first;
    for _ in 0..k {
        chosen.push(next);
        taken[next] = true;
        let anchor = points[next];
        let mut best = usize::MAX;
        let mut best_d2 = f64::NEG_INFINITY;
        for (i, p) in points.iter().enumerate() {
            let d2 = (p - anchor).norm_squared();
            if d2 < min_d2[i] {
                min_d2[i] = d2;
            }
            if !taken[i] && min_d2[i] > best_d2 {
                best_d2 = min_d2[i];
                best = i;
            }
        }
        next = best;
    }
    Ok(chosen)
}

fn argmin_by(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::INFINITY;
    for (i, v) in values.enumerate() {
        if v < best_v {
            best_v = v;
            best = i;
        }
    }
    best
}

/// Result of a planar convex hull.
#[derive(Clone, Debug, PartialEq)]
pub enum Hull {
    /// Counter-clockwise, no repeated or collinear vertices.
    Polygon(Vec<Point2>),
    Segment(Point2, Point2),
    Point(Point2),
}

impl Hull {
    pub fn polygon(&self) -> Option<&[Point2]> {
        match self {
            Hull::Polygon(v) => Some(v),
            _ => None,
        }
    }
}

#[inline]
fn cross(o: &Point2, a: &Point2, b: &Point2) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Andrew's monotone chain.
pub fn convex_hull_2d(points: &[Point2]) -> Result<Hull> {
    if points.is_empty() {
        return Err(FoldError::EmptyInput);
    }
    let mut pts: Vec<Point2> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() == 1 {
        return Ok(Hull::Point(pts[0]));
    }

    let mut lower: Vec<Point2> = Vec::with_capacity(pts.len());
    for p in &pts {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<Point2> = Vec::with_capacity(pts.len());
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);

    if lower.len() < 3 {
        // All input collinear: the chain collapses to the two extremes.
        let a = pts[0];
        let b = pts[pts.len() - 1];
        return Ok(Hull::Segment(a, b));
    }
    Ok(Hull::Polygon(lower))
}

/// Shoelace area of a simple polygon (positive for counter-clockwise).
pub fn polygon_area(poly: &[Point2]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        s += a.x * b.y - b.x * a.y;
    }
    0.5 * s
}

/// Minimum-area oriented bounding rectangle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrientedRect {
    pub area: f64,
    /// Direction of the first side, in `[0, pi/2)`.
    pub angle: f64,
    /// Side lengths along `angle` and `angle + pi/2`.
    pub extents: (f64, f64),
    pub center: Point2,
}

/// Rotating calipers over the convex hull. One side of the optimal
/// rectangle is collinear with a hull edge; three antipodal pointers
/// advance monotonically as the edge walks around the hull.
pub fn min_area_rect(points: &[Point2]) -> Result<OrientedRect> {
    let hull = match convex_hull_2d(points)? {
        Hull::Polygon(v) => v,
        _ => return Err(FoldError::Degenerate("collinear input has no bounding rectangle")),
    };
    let h = hull.len();
    let at = |i: usize| hull[i % h];

    let mut best: Option<(f64, usize, f64, f64, f64)> = None;
    // Pointers: farthest along normal, max along edge, min along edge.
    let (mut far, mut right, mut left) = (0usize, 0usize, 0usize);
    for i in 0..h {
        let o = at(i);
        let e = (at(i + 1) - o).normalize();
        let n = Point2::new(-e.y, e.x);
        let along = |j: usize| (at(j) - o).dot(&e);
        let up = |j: usize| (at(j) - o).dot(&n);
        if i == 0 {
            far = (0..h).max_by(|&a, &b| up(a).total_cmp(&up(b))).unwrap_or(0);
            right = (0..h).max_by(|&a, &b| along(a).total_cmp(&along(b))).unwrap_or(0);
            left = (0..h).min_by(|&a, &b| along(a).total_cmp(&along(b))).unwrap_or(0);
        } else {
            while up(far + 1) > up(far) + 1e-15 {
                far = (far + 1) % h;
            }
            while along(right + 1) > along(right) + 1e-15 {
                right = (right + 1) % h;
            }
            while along(left + 1) < along(left) - 1e-15 {
                left = (left + 1) % h;
            }
        }
        let height = up(far);
        let lo = along(left);
        let hi = along(right);
        let area = height * (hi - lo);
        if best.map_or(true, |b| area < b.0) {
            best = Some((area, i, lo, hi, height));
        }
    }

    let (area, i, lo, hi, height) = best.expect("polygon hull has edges");
    let o = at(i);
    let e = (at(i + 1) - o).normalize();
    let n = Point2::new(-e.y, e.x);
    let center = o + e * (0.5 * (lo + hi)) + n * (0.5 * height);
    let mut angle = e.y.atan2(e.x);
    let mut extents = (hi - lo, height);
    // Fold the direction into [0, pi/2), swapping sides on quarter turns.
    let quarter = std::f64::consts::FRAC_PI_2;
    while angle < 0.0 {
        angle += quarter;
        extents = (extents.1, extents.0);
    }
    while angle >= quarter {
        angle -= quarter;
        extents = (extents.1, extents.0);
    }
    Ok(OrientedRect { area, angle, extents, center })
}

/// Symmetric Chamfer distance: the mean nearest-neighbour distance from
/// `a` to `b` and from `b` to `a`, averaged.
pub fn chamfer_distance(a: &[Point3], b: &[Point3]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(FoldError::EmptyInput);
    }
    Ok(0.5 * (mean_nearest(a, b) + mean_nearest(b, a)))
}

fn mean_nearest(from: &[Point3], to: &[Point3]) -> f64 {
    let total: f64 = from
        .iter()
        .map(|p| {
            to.iter()
                .map(|q| (p - q).norm_squared())
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .sum();
    total / from.len() as f64
}

pub fn compute_flow(from: &PointCloudFrame, to: &PointCloudFrame) -> Result<FlowField> {
    if from.len() != to.len() {
        return Err(FoldError::SizeMismatch { expected: from.len(), actual: to.len() });
    }
    Ok(FlowField {
        source: from.frame_id,
        target: to.frame_id,
        displacements: from.points.iter().zip(&to.points).map(|(a, b)| b - a).collect(),
    })
}

/// Rotation of `p` about the vertical axis through the origin.
pub fn rotate_z(p: &Point3, theta: f64) -> Point3 {
    let (s, c) = theta.sin_cos();
    Point3::new(c * p.x - s * p.y, s * p.x + c * p.y, p.z)
}
