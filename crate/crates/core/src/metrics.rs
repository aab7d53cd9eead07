//! Fold quality metrics: projected area, rectangularity, area ratio and the
//! success judgement, plus report serialization.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{FoldError, Result};
use crate::geometry::{chamfer_distance, min_area_rect, to_ground, Point2, Point3};

/// Success thresholds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricThresholds {
    pub min_rectangularity: f64,
    pub max_area_ratio: f64,
}

impl Default for MetricThresholds {
    fn default() -> Self {
        MetricThresholds { min_rectangularity: 0.75, max_area_ratio: 0.55 }
    }
}

impl MetricThresholds {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v <= 1.0;
        if !unit(self.min_rectangularity) {
            return Err(FoldError::BadParam { field: "min_rectangularity", reason: "must be in (0, 1]".into() });
        }
        if !unit(self.max_area_ratio) {
            return Err(FoldError::BadParam { field: "max_area_ratio", reason: "must be in (0, 1]".into() });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FoldReport {
    pub rectangularity: f64,
    pub area_ratio: f64,
    pub success: bool,
    /// Chamfer distance of the final vertices to the goal configuration.
    pub chamfer_to_goal: f64,
    pub initial_area: f64,
    pub final_area: f64,
}

/// Axis-aligned grid covering a set of projected points.
struct Grid {
    min: Point2,
    cell: f64,
    nx: usize,
    ny: usize,
}

impl Grid {
    fn covering(points: &[Point2]) -> Result<Grid> {
        let mut min = Point2::repeat(f64::INFINITY);
        let mut max = Point2::repeat(f64::NEG_INFINITY);
        for p in points {
            min = min.inf(p);
            max = max.sup(p);
        }
        let span = max - min;
        if !(span.x > 0.0 && span.y > 0.0) {
            return Err(FoldError::Degenerate("zero projected area"));
        }
        let cell = (span.norm() / 512.0).max(1e-3);
        let nx = ((span.x / cell).ceil() as usize).max(1);
        let ny = ((span.y / cell).ceil() as usize).max(1);
        Ok(Grid { min, cell, nx, ny })
    }
}

/// Interval of a triangle and of a box on one axis; true if they overlap
/// with positive length.
fn separated(axis: Point2, tri: &[Point2; 3], lo: Point2, hi: Point2, slack: f64) -> bool {
    let proj = |p: &Point2| axis.dot(p);
    let (mut tmin, mut tmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in tri {
        tmin = tmin.min(proj(p));
        tmax = tmax.max(proj(p));
    }
    let corners = [lo, Point2::new(hi.x, lo.y), hi, Point2::new(lo.x, hi.y)];
    let (mut bmin, mut bmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for c in &corners {
        bmin = bmin.min(proj(c));
        bmax = bmax.max(proj(c));
    }
    tmax <= bmin + slack || bmax <= tmin + slack
}

/// Area of the union of `triangles` projected to the ground plane, by
/// conservative rasterization: every grid cell that a triangle overlaps
/// with positive area counts once. Cell size is the larger of 1 mm and
/// 1/512 of the bounding-box diagonal.
pub fn projected_area(positions: &[Point3], triangles: &[[usize; 3]]) -> Result<f64> {
    if triangles.is_empty() {
        return Err(FoldError::EmptyInput);
    }
    let flat: Vec<Point2> = positions.iter().map(to_ground).collect();
    for t in triangles {
        if let Some(&v) = t.iter().find(|&&v| v >= flat.len()) {
            return Err(FoldError::BadVertex { vertex: v, count: flat.len() });
        }
    }
    let used: Vec<Point2> = triangles.iter().flat_map(|t| t.iter().map(|&v| flat[v])).collect();
    let grid = Grid::covering(&used)?;
    let slack = 1e-9 * grid.cell;
    let mut covered = vec![false; grid.nx * grid.ny];
    for t in triangles {
        let tri = [flat[t[0]], flat[t[1]], flat[t[2]]];
        let twice_area = (tri[1] - tri[0]).perp(&(tri[2] - tri[0]));
        if twice_area.abs() < 1e-18 {
            continue;
        }
        let axes = [0, 1, 2].map(|i| {
            let e = tri[(i + 1) % 3] - tri[i];
            Point2::new(-e.y, e.x)
        });
        let lo = tri[0].inf(&tri[1]).inf(&tri[2]) - grid.min;
        let hi = tri[0].sup(&tri[1]).sup(&tri[2]) - grid.min;
        let i0 = ((lo.x / grid.cell).floor().max(0.0) as usize).min(grid.nx - 1);
        let i1 = ((hi.x / grid.cell).ceil() as usize).min(grid.nx);
        let j0 = ((lo.y / grid.cell).floor().max(0.0) as usize).min(grid.ny - 1);
        let j1 = ((hi.y / grid.cell).ceil() as usize).min(grid.ny);
        for j in j0..j1 {
            for i in i0..i1 {
                let idx = j * grid.nx + i;
                if covered[idx] {
                    continue;
                }
                let c_lo = grid.min + Point2::new(i as f64, j as f64) * grid.cell;
                let c_hi = c_lo + Point2::repeat(grid.cell);
                // Box axes first: the cell range already bounds them, but
                // touching cells must still be rejected.
                let hit = !separated(Point2::x(), &tri, c_lo, c_hi, slack)
                    && !separated(Point2::y(), &tri, c_lo, c_hi, slack)
                    && axes.iter().all(|a| !separated(*a, &tri, c_lo, c_hi, slack * a.norm()));
                covered[idx] = hit;
            }
        }
    }
    let area = covered.iter().filter(|&&c| c).count() as f64 * grid.cell * grid.cell;
    if area <= 0.0 {
        return Err(FoldError::Degenerate("zero projected area"));
    }
    Ok(area)
}

/// Projected area over the area of the minimum bounding rectangle of the
/// projected vertices.
pub fn rectangularity(positions: &[Point3], triangles: &[[usize; 3]]) -> Result<f64> {
    let area = projected_area(positions, triangles)?;
    rectangularity_with_area(positions, triangles, area)
}

fn rectangularity_with_area(positions: &[Point3], triangles: &[[usize; 3]], area: f64) -> Result<f64> {
    let mut used: Vec<usize> = triangles.iter().flatten().copied().collect();
    used.sort_unstable();
    used.dedup();
    let flat: Vec<Point2> = used.iter().map(|&v| to_ground(&positions[v])).collect();
    let rect = min_area_rect(&flat)?;
    Ok(area / rect.area)
}

pub fn area_ratio(final_positions: &[Point3], initial_positions: &[Point3], triangles: &[[usize; 3]]) -> Result<f64> {
    Ok(projected_area(final_positions, triangles)? / projected_area(initial_positions, triangles)?)
}

pub fn judge(rectangularity: f64, area_ratio: f64, thresholds: &MetricThresholds) -> bool {
    rectangularity >= thresholds.min_rectangularity && area_ratio <= thresholds.max_area_ratio
}

/// Full report for a fold from `initial` to `final_positions`, with
/// `goal` as the intended configuration.
pub fn evaluate(
    initial: &[Point3],
    final_positions: &[Point3],
    goal: &[Point3],
    triangles: &[[usize; 3]],
    thresholds: &MetricThresholds,
) -> Result<FoldReport> {
    if initial.len() != final_positions.len() {
        return Err(FoldError::SizeMismatch { expected: initial.len(), actual: final_positions.len() });
    }
    let initial_area = projected_area(initial, triangles)?;
    let final_area = projected_area(final_positions, triangles)?;
    let rectangularity = rectangularity_with_area(final_positions, triangles, final_area)?;
    let area_ratio = final_area / initial_area;
    Ok(FoldReport {
        rectangularity,
        area_ratio,
        success: judge(rectangularity, area_ratio, thresholds),
        chamfer_to_goal: chamfer_distance(final_positions, goal)?,
        initial_area,
        final_area,
    })
}

impl FoldReport {
    /// `key=value` lines.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "rectangularity={}", self.rectangularity);
        let _ = writeln!(s, "area_ratio={}", self.area_ratio);
        let _ = writeln!(s, "success={}", self.success);
        let _ = writeln!(s, "chamfer_to_goal={}", self.chamfer_to_goal);
        let _ = writeln!(s, "initial_area={}", self.initial_area);
        let _ = writeln!(s, "final_area={}", self.final_area);
        s
    }

    pub fn from_kv(text: &str) -> Result<FoldReport> {
        let map = parse_kv(text)?;
        let num = |key: &'static str| -> Result<f64> {
            let raw = map.get(key).ok_or(FoldError::Parse { offset: text.len(), message: format!("missing `{key}`") })?;
            raw.parse().map_err(|_| FoldError::Parse { offset: 0, message: format!("bad number for `{key}`: {raw}") })
        };
        let success = match map.get("success").map(String::as_str) {
            Some("true") => true,
            Some("false") => false,
            other => return Err(FoldError::Parse { offset: 0, message: format!("bad `success`: {other:?}") }),
        };
        Ok(FoldReport {
            rectangularity: num("rectangularity")?,
            area_ratio: num("area_ratio")?,
            success,
            chamfer_to_goal: num("chamfer_to_goal")?,
            initial_area: num("initial_area")?,
            final_area: num("final_area")?,
        })
    }
}

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
/// Later keys override earlier ones.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let body = line.trim();
        if !body.is_empty() && !body.starts_with('#') {
            let (k, v) = body
                .split_once('=')
                .ok_or_else(|| FoldError::Parse { offset, message: format!("expected key=value, got `{body}`") })?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        offset += line.len();
    }
    Ok(map)
}

/// Means over a batch of reports.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricSummary {
    pub episodes: usize,
    pub rectangularity: f64,
    pub area_ratio: f64,
    pub success_rate: f64,
}

impl MetricSummary {
    pub fn from_reports<'a>(reports: impl IntoIterator<Item = &'a FoldReport>) -> MetricSummary {
        let mut s = MetricSummary::default();
        for r in reports {
            s.episodes += 1;
            s.rectangularity += r.rectangularity;
            s.area_ratio += r.area_ratio;
            s.success_rate += f64::from(u8::from(r.success));
        }
        if s.episodes > 0 {
            let n = s.episodes as f64;
            s.rectangularity /= n;
            s.area_ratio /= n;
            s.success_rate /= n;
        }
        s
    }
}

/// Table with one row per metric and method and one column per group
/// (category or ablation variant):
/// `metric,method,<col1>,<col2>,...`.
pub fn summary_csv(columns: &[String], rows: &[(String, Vec<MetricSummary>)]) -> String {
    let mut out = String::from("metric,method");
    for c in columns {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    type Pick = fn(&MetricSummary) -> f64;
    let metrics: [(&str, Pick); 3] = [
        ("rectangularity", |s| s.rectangularity),
        ("area_ratio", |s| s.area_ratio),
        ("success_rate", |s| s.success_rate),
    ];
    for (name, pick) in metrics {
        for (method, cells) in rows {
            out.push_str(name);
            out.push(',');
            out.push_str(method);
            for c in cells {
                let _ = write!(out, ",{:.4}", pick(c));
            }
            out.push('\n');
        }
    }
    out
}
