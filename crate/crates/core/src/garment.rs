//! Parametric flat garments and their per-category fold stages.
//!
//! Every garment is a union of axis-aligned panels laid on the ground,
//! collar toward +y and the wearer's left toward -x. Panels are meshed on
//! a shared tensor grid whose lines pass through every panel boundary, so
//! the triangulated area equals the analytic silhouette area.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{FoldError, Result};
use crate::geometry::{Point2, Point3};

/// Height of the flat rest pose above the ground.
pub const REST_LIFT: f64 = 0.002;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    NoSleeve,
    ShortSleeve,
    LongSleeve,
    Pants,
}

impl Category {
    pub const ALL: [Category; 4] =
        [Category::NoSleeve, Category::ShortSleeve, Category::LongSleeve, Category::Pants];

    /// Kebab-case name used on the command line and in files.
    pub fn as_str(self) -> &'static str {
        match self {
            Category::NoSleeve => "no-sleeve",
            Category::ShortSleeve => "short-sleeve",
            Category::LongSleeve => "long-sleeve",
            Category::Pants => "pants",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Category::NoSleeve => 0,
            Category::ShortSleeve => 1,
            Category::LongSleeve => 2,
            Category::Pants => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Category::ALL.get(code as usize).copied()
    }

    pub fn has_sleeves(self) -> bool {
        matches!(self, Category::ShortSleeve | Category::LongSleeve)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = FoldError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "no-sleeve" | "nosleeve" | "vest" => Ok(Category::NoSleeve),
            "short-sleeve" | "shortsleeve" | "t-shirt" | "tshirt" => Ok(Category::ShortSleeve),
            "long-sleeve" | "longsleeve" => Ok(Category::LongSleeve),
            "pants" | "trousers" => Ok(Category::Pants),
            _ => Err(FoldError::BadParam { field: "category", reason: format!("unknown `{s}`") }),
        }
    }
}

/// Dimensions of a parametric garment, in meters.
///
/// For pants `body_width` is the waist width and `body_height` the height
/// of the waist band above the legs; the sleeve fields are ignored. Shirts
/// ignore the leg fields.
#[derive(Clone, Debug, PartialEq)]
pub struct GarmentSpec {
    pub category: Category,
    pub body_width: f64,
    pub body_height: f64,
    pub sleeve_length: f64,
    pub sleeve_width: f64,
    pub leg_length: f64,
    pub leg_width: f64,
    /// Target edge length of the mesh.
    pub resolution: f64,
    /// When set, dimensions are scaled by up to +-8% overall and +-5% per field.
    pub jitter_seed: Option<u64>,
}

const JITTER: f64 = 0.08;
const ASPECT: f64 = 0.05;

impl GarmentSpec {
    pub fn default_for(category: Category) -> Self {
        let base = GarmentSpec {
            category,
            body_width: 0.50,
            body_height: 0.62,
            sleeve_length: 0.0,
            sleeve_width: 0.0,
            leg_length: 0.0,
            leg_width: 0.0,
            resolution: 0.03,
            jitter_seed: None,
        };
        match category {
            Category::NoSleeve => GarmentSpec { body_width: 0.40, body_height: 0.60, ..base },
            Category::ShortSleeve => GarmentSpec { sleeve_length: 0.20, sleeve_width: 0.16, ..base },
            Category::LongSleeve => GarmentSpec {
                body_width: 0.44,
                body_height: 0.60,
                sleeve_length: 0.42,
                sleeve_width: 0.20,
                ..base
            },
            Category::Pants => GarmentSpec {
                body_width: 0.44,
                body_height: 0.14,
                leg_length: 0.76,
                leg_width: 0.20,
                ..base
            },
        }
    }

    pub fn jittered(category: Category, seed: u64) -> Self {
        GarmentSpec { jitter_seed: Some(seed), ..Self::default_for(category) }
    }

    /// Dimensions after applying the jitter seed: a common scale plus a
    /// per-dimension aspect change, clamped so the fold stages stay valid.
    pub fn resolved(&self) -> GarmentSpec {
        let Some(seed) = self.jitter_seed else {
            return self.clone();
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6761_726d_656e_74);
        let scale = 1.0 + rng.gen_range(-JITTER..=JITTER);
        let mut j = |v: f64| v * scale * (1.0 + rng.gen_range(-ASPECT..=ASPECT));
        let mut out = GarmentSpec {
            body_width: j(self.body_width),
            body_height: j(self.body_height),
            sleeve_length: j(self.sleeve_length),
            sleeve_width: j(self.sleeve_width),
            leg_length: j(self.leg_length),
            leg_width: j(self.leg_width),
            jitter_seed: None,
            ..self.clone()
        };
        out.sleeve_length = out.sleeve_length.min(0.95 * out.body_width);
        out.sleeve_width = out.sleeve_width.min(0.45 * out.body_height);
        out.leg_width = out.leg_width.min(0.48 * out.body_width);
        let smallest = out.used_dims().iter().map(|d| d.1).fold(f64::INFINITY, f64::min);
        out.resolution = out.resolution.min(smallest / 4.0);
        out
    }

    fn used_dims(&self) -> Vec<(&'static str, f64)> {
        let mut dims = vec![("body_width", self.body_width), ("body_height", self.body_height)];
        match self.category {
            Category::NoSleeve => {}
            Category::ShortSleeve | Category::LongSleeve => {
                dims.push(("sleeve_length", self.sleeve_length));
                dims.push(("sleeve_width", self.sleeve_width));
            }
            Category::Pants => {
                dims.push(("leg_length", self.leg_length));
                dims.push(("leg_width", self.leg_width));
            }
        }
        dims
    }

    /// `key=value` lines; [`GarmentSpec::from_kv`] reads them back.
    pub fn to_kv(&self) -> String {
        let mut out = format!(
            "category={}\nbody_width={}\nbody_height={}\nsleeve_length={}\nsleeve_width={}\nleg_length={}\nleg_width={}\nresolution={}\n",
            self.category,
            self.body_width,
            self.body_height,
            self.sleeve_length,
            self.sleeve_width,
            self.leg_length,
            self.leg_width,
            self.resolution
        );
        if let Some(seed) = self.jitter_seed {
            out.push_str(&format!("jitter_seed={seed}\n"));
        }
        out
    }

    /// Reads a spec file: `category` is required, every other field
    /// defaults to the category's template.
    pub fn from_kv(text: &str) -> Result<GarmentSpec> {
        let map = crate::metrics::parse_kv(text)?;
        let category: Category = map
            .get("category")
            .ok_or_else(|| FoldError::BadSpec { field: "category", reason: "missing".into() })?
            .parse()?;
        let mut spec = GarmentSpec::default_for(category);
        for (k, v) in &map {
            let num = || -> Result<f64> {
                v.parse().map_err(|_| FoldError::BadSpec { field: "value", reason: format!("`{k}` = `{v}`") })
            };
            match k.as_str() {
                "category" => {}
                "body_width" => spec.body_width = num()?,
                "body_height" => spec.body_height = num()?,
                "sleeve_length" => spec.sleeve_length = num()?,
                "sleeve_width" => spec.sleeve_width = num()?,
                "leg_length" => spec.leg_length = num()?,
                "leg_width" => spec.leg_width = num()?,
                "resolution" => spec.resolution = num()?,
                "jitter_seed" => {
                    spec.jitter_seed = Some(v.parse().map_err(|_| FoldError::BadSpec {
                        field: "jitter_seed",
                        reason: format!("not an integer: `{v}`"),
                    })?)
                }
                _ => return Err(FoldError::BadSpec { field: "key", reason: format!("unknown `{k}`") }),
            }
        }
        spec.resolved().validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field, reason: String| Err(FoldError::BadSpec { field, reason });
        let dims = self.used_dims();
        for &(field, v) in &dims {
            if !(v.is_finite() && v > 0.0) {
                return bad(field, format!("must be positive, got {v}"));
            }
        }
        let smallest = dims.iter().map(|d| d.1).fold(f64::INFINITY, f64::min);
        if !(self.resolution > 0.0 && self.resolution <= smallest / 4.0) {
            return bad("resolution", format!("must be in (0, {}]", smallest / 4.0));
        }
        match self.category {
            Category::ShortSleeve | Category::LongSleeve => {
                if self.sleeve_length >= self.body_width {
                    return bad("sleeve_length", "folded sleeve would overhang the body".into());
                }
                if self.sleeve_width > self.body_height / 2.0 {
                    return bad("sleeve_width", "sleeve reaches below mid-height".into());
                }
            }
            Category::Pants => {
                if self.leg_width > self.body_width / 2.0 {
                    return bad("leg_width", "legs wider than half the waist".into());
                }
            }
            Category::NoSleeve => {}
        }
        Ok(())
    }

    /// Axis-aligned panels `(x0, x1, y0, y1)` making up the silhouette.
    fn panels(&self) -> Vec<[f64; 4]> {
        let hw = self.body_width / 2.0;
        match self.category {
            Category::NoSleeve => {
                let hh = self.body_height / 2.0;
                vec![[-hw, hw, -hh, hh]]
            }
            Category::ShortSleeve | Category::LongSleeve => {
                let hh = self.body_height / 2.0;
                let (l, w) = (self.sleeve_length, self.sleeve_width);
                vec![
                    [-hw, hw, -hh, hh],
                    [-hw - l, -hw, hh - w, hh],
                    [hw, hw + l, hh - w, hh],
                ]
            }
            Category::Pants => {
                let h = self.body_height + self.leg_length;
                let (top, crotch, bottom) = (h / 2.0, h / 2.0 - self.body_height, -h / 2.0);
                let lw = self.leg_width;
                vec![
                    [-hw, hw, crotch, top],
                    [-hw, -hw + lw, bottom, crotch],
                    [hw - lw, hw, bottom, crotch],
                ]
            }
        }
    }

    /// Exact area of the silhouette.
    pub fn silhouette_area(&self) -> f64 {
        self.panels().iter().map(|p| (p[1] - p[0]) * (p[3] - p[2])).sum()
    }

    pub fn contains(&self, p: &Point2) -> bool {
        self.panels()
            .iter()
            .any(|r| p.x >= r[0] - 1e-12 && p.x <= r[1] + 1e-12 && p.y >= r[2] - 1e-12 && p.y <= r[3] + 1e-12)
    }

    /// Named keypoint locations in the flat pose.
    fn keypoint_sites(&self) -> Vec<(&'static str, Point2)> {
        let hw = self.body_width / 2.0;
        let mut sites = Vec::new();
        match self.category {
            Category::Pants => {
                let h = self.body_height + self.leg_length;
                let (top, bottom) = (h / 2.0, -h / 2.0);
                let cuff = hw - self.leg_width / 2.0;
                sites.push(("left_waist", Point2::new(-hw, top)));
                sites.push(("right_waist", Point2::new(hw, top)));
                sites.push(("waist_mid", Point2::new(0.0, top)));
                sites.push(("crotch", Point2::new(0.0, top - self.body_height)));
                sites.push(("left_cuff", Point2::new(-cuff, bottom)));
                sites.push(("right_cuff", Point2::new(cuff, bottom)));
                // Where the stacked cuffs land after folding bottom up.
                sites.push(("right_cuff_target", Point2::new(cuff, top)));
            }
            _ => {
                let hh = self.body_height / 2.0;
                sites.push(("left_shoulder", Point2::new(-hw, hh)));
                sites.push(("right_shoulder", Point2::new(hw, hh)));
                sites.push(("collar_mid", Point2::new(0.0, hh)));
                sites.push(("left_hem", Point2::new(-hw, -hh)));
                sites.push(("right_hem", Point2::new(hw, -hh)));
                sites.push(("hem_mid", Point2::new(0.0, -hh)));
                if self.category.has_sleeves() {
                    let y = hh - self.sleeve_width / 2.0;
                    let tip = hw + self.sleeve_length;
                    let target = hw - self.sleeve_length;
                    sites.push(("left_sleeve_tip", Point2::new(-tip, y)));
                    sites.push(("right_sleeve_tip", Point2::new(tip, y)));
                    sites.push(("left_sleeve_target", Point2::new(-target, y)));
                    sites.push(("right_sleeve_target", Point2::new(target, y)));
                }
            }
        }
        sites
    }
}

/// Mesh edge (or bending pair) with its rest length.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub rest: f64,
}

#[derive(Clone, Debug)]
pub struct GarmentMesh {
    pub category: Category,
    /// Resolved (jitter applied) dimensions the mesh was built from.
    pub spec: GarmentSpec,
    pub vertices: Vec<Point3>,
    pub triangles: Vec<[usize; 3]>,
    pub edges: Vec<Edge>,
    /// Opposite-vertex pairs of triangles sharing an edge.
    pub bends: Vec<Edge>,
    pub keypoints: BTreeMap<String, usize>,
}

impl GarmentMesh {
    pub fn keypoint(&self, name: &str) -> Option<usize> {
        self.keypoints.get(name).copied()
    }

    pub fn keypoint_position(&self, name: &str) -> Option<Point3> {
        self.keypoint(name).map(|i| self.vertices[i])
    }

    /// Sum of triangle areas in the ground plane.
    pub fn flat_area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| self.vertices[i]);
                0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y)).abs()
            })
            .sum()
    }

    /// ASCII Wavefront OBJ of the given positions over this topology.
    pub fn write_obj<W: Write>(&self, positions: &[Point3], mut out: W) -> Result<()> {
        writeln!(out, "# {} garment, {} vertices", self.category, positions.len())?;
        for p in positions {
            writeln!(out, "v {:.6} {:.6} {:.6}", p.x, p.y, p.z)?;
        }
        for t in &self.triangles {
            writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
        }
        Ok(())
    }
}

/// Vertices and triangles of a Wavefront OBJ text. Only `v` and
/// triangular `f` records are read (`f a/b/c` forms keep the position
/// index); everything else is skipped.
pub fn read_obj(text: &str) -> Result<(Vec<Point3>, Vec<[usize; 3]>)> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let err = |message: String| FoldError::Parse { offset, message };
        let mut fields = line.split_whitespace();
        match fields.next() {
            Some("v") => {
                let c: Vec<f64> = fields.take(3).map(|f| f.parse().map_err(|_| err(format!("bad coordinate `{f}`")))).collect::<Result<_>>()?;
                if c.len() != 3 {
                    return Err(err("vertex needs three coordinates".into()));
                }
                vertices.push(Point3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx: Vec<usize> = fields
                    .map(|f| {
                        let head = f.split('/').next().unwrap_or(f);
                        head.parse::<usize>().ok().filter(|&i| i >= 1).map(|i| i - 1).ok_or_else(|| err(format!("bad face index `{f}`")))
                    })
                    .collect::<Result<_>>()?;
                if idx.len() != 3 {
                    return Err(err(format!("only triangles are supported, got {} corners", idx.len())));
                }
                faces.push([idx[0], idx[1], idx[2]]);
            }
            _ => {}
        }
        offset += line.len();
    }
    if let Some(&bad) = faces.iter().flatten().find(|&&i| i >= vertices.len()) {
        return Err(FoldError::BadVertex { vertex: bad, count: vertices.len() });
    }
    Ok((vertices, faces))
}

/// Grid coordinates covering `[lo, hi]` that hit every breakpoint; cells
/// are at most `res` long. Built on the non-negative half and mirrored so
/// the grid is exactly symmetric about zero.
fn symmetric_axis(breaks: &[f64], res: f64) -> Vec<f64> {
    let mut half: Vec<f64> = breaks.iter().map(|b| b.abs()).collect();
    half.push(0.0);
    half.sort_by(f64::total_cmp);
    half.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let mut coords = vec![0.0];
    for w in half.windows(2) {
        let n = ((w[1] - w[0]) / res).ceil().max(1.0) as usize;
        for k in 1..=n {
            coords.push(if k == n { w[1] } else { w[0] + (w[1] - w[0]) * k as f64 / n as f64 });
        }
    }
    let mut full: Vec<f64> = coords.iter().skip(1).rev().map(|c| -c).collect();
    full.extend(coords);
    full
}

/// Grid coordinates through every breakpoint, not mirrored.
fn plain_axis(breaks: &[f64], res: f64) -> Vec<f64> {
    let mut b = breaks.to_vec();
    b.sort_by(f64::total_cmp);
    b.dedup_by(|a, c| (*a - *c).abs() < 1e-12);
    let mut coords = vec![b[0]];
    for w in b.windows(2) {
        let n = ((w[1] - w[0]) / res).ceil().max(1.0) as usize;
        for k in 1..=n {
            coords.push(if k == n { w[1] } else { w[0] + (w[1] - w[0]) * k as f64 / n as f64 });
        }
    }
    coords
}

pub fn build_garment(spec: &GarmentSpec) -> Result<GarmentMesh> {
    let spec = spec.resolved();
    spec.validate()?;
    let panels = spec.panels();

    let xs_breaks: Vec<f64> = panels.iter().flat_map(|p| [p[0], p[1]]).collect();
    let ys_breaks: Vec<f64> = panels.iter().flat_map(|p| [p[2], p[3]]).collect();
    let xs = symmetric_axis(&xs_breaks, spec.resolution);
    let ys = plain_axis(&ys_breaks, spec.resolution);
    let (nx, ny) = (xs.len(), ys.len());

    let inside = |i: usize, j: usize| {
        let c = Point2::new(0.5 * (xs[i] + xs[i + 1]), 0.5 * (ys[j] + ys[j + 1]));
        panels.iter().any(|r| c.x > r[0] && c.x < r[1] && c.y > r[2] && c.y < r[3])
    };

    let mut index = vec![usize::MAX; nx * ny];
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut vid = |i: usize, j: usize, vertices: &mut Vec<Point3>| {
        let slot = &mut index[j * nx + i];
        if *slot == usize::MAX {
            *slot = vertices.len();
            vertices.push(Point3::new(xs[i], ys[j], REST_LIFT));
        }
        *slot
    };
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            if !inside(i, j) {
                continue;
            }
            let a = vid(i, j, &mut vertices);
            let b = vid(i + 1, j, &mut vertices);
            let c = vid(i + 1, j + 1, &mut vertices);
            let d = vid(i, j + 1, &mut vertices);
            // Diagonals mirror about x = 0 so the mesh is left/right symmetric.
            let left_half = 0.5 * (xs[i] + xs[i + 1]) < 0.0;
            if ((i + j) % 2 == 0) ^ left_half {
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            } else {
                triangles.push([a, b, d]);
                triangles.push([b, c, d]);
            }
        }
    }

    let (edges, bends) = topology(&vertices, &triangles);

    let mut keypoints = BTreeMap::new();
    for (name, site) in spec.keypoint_sites() {
        let nearest = vertices
            .iter()
            .enumerate()
            .min_by(|a, b| {
                // Ties prefer the vertex nearer the centerline so mirrored
                // sites resolve to mirrored vertices.
                let da = (Point2::new(a.1.x, a.1.y) - site).norm_squared();
                let db = (Point2::new(b.1.x, b.1.y) - site).norm_squared();
                da.total_cmp(&db).then(a.1.x.abs().total_cmp(&b.1.x.abs())).then(a.1.y.total_cmp(&b.1.y))
            })
            .map(|(i, _)| i)
            .expect("mesh has vertices");
        keypoints.insert(name.to_string(), nearest);
    }

    Ok(GarmentMesh { category: spec.category, spec, vertices, triangles, edges, bends, keypoints })
}

fn topology(vertices: &[Point3], triangles: &[[usize; 3]]) -> (Vec<Edge>, Vec<Edge>) {
    // Edge -> opposite vertices of the triangles that own it.
    let mut owners: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for t in triangles {
        for k in 0..3 {
            let (a, b, c) = (t[k], t[(k + 1) % 3], t[(k + 2) % 3]);
            owners.entry((a.min(b), a.max(b))).or_default().push(c);
        }
    }
    let dist = |a: usize, b: usize| (vertices[a] - vertices[b]).norm();
    let mut edges = Vec::with_capacity(owners.len());
    let mut bends = Vec::new();
    for (&(a, b), opp) in &owners {
        edges.push(Edge { a, b, rest: dist(a, b) });
        if let [c, d] = opp[..] {
            bends.push(Edge { a: c.min(d), b: c.max(d), rest: dist(c, d) });
        }
    }
    (edges, bends)
}

/// Identifier of an atomic fold.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StageId {
    LeftSleeve,
    RightSleeve,
    BottomUp,
    LeftLegOntoRight,
}

impl StageId {
    pub const ALL: [StageId; 4] =
        [StageId::LeftSleeve, StageId::RightSleeve, StageId::BottomUp, StageId::LeftLegOntoRight];

    pub fn as_str(self) -> &'static str {
        match self {
            StageId::LeftSleeve => "LeftSleeve",
            StageId::RightSleeve => "RightSleeve",
            StageId::BottomUp => "BottomUp",
            StageId::LeftLegOntoRight => "LeftLegOntoRight",
        }
    }

    pub fn code(self) -> u8 {
        StageId::ALL.iter().position(|s| *s == self).unwrap() as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        StageId::ALL.get(code as usize).copied()
    }

    pub fn valid_for(self, category: Category) -> bool {
        match self {
            StageId::LeftSleeve | StageId::RightSleeve => category.has_sleeves(),
            StageId::BottomUp => true,
            StageId::LeftLegOntoRight => category == Category::Pants,
        }
    }
}

impl fmt::Display for StageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StageId {
    type Err = FoldError;

    fn from_str(s: &str) -> Result<Self> {
        StageId::ALL
            .iter()
            .copied()
            .find(|id| id.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| FoldError::BadParam { field: "stage", reason: format!("unknown `{s}`") })
    }
}

/// A line in the ground plane. The moving half-plane is the one where
/// `moving_sign * (p - origin) . perp(direction)` is positive, with
/// `perp(d) = (-d.y, d.x)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FoldLine {
    pub origin: Point2,
    pub direction: Point2,
    pub moving_sign: f64,
}

impl FoldLine {
    pub fn new(origin: Point2, direction: Point2, moving_sign: f64) -> Self {
        Self { origin, direction: direction.normalize(), moving_sign: moving_sign.signum() }
    }

    pub fn normal(&self) -> Point2 {
        Point2::new(-self.direction.y, self.direction.x) * self.moving_sign
    }

    /// Signed in-plane distance, positive on the moving side.
    pub fn signed_distance(&self, p: &Point2) -> f64 {
        (p - self.origin).dot(&self.normal())
    }

    pub fn reflect(&self, p: &Point2) -> Point2 {
        p - self.normal() * (2.0 * self.signed_distance(p))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FoldStage {
    pub id: StageId,
    pub fold_line: FoldLine,
    pub grasp_keypoint: String,
    pub target_keypoint: String,
}

impl FoldStage {
    /// The stage for a given garment; fold lines come from the resolved
    /// garment dimensions.
    pub fn for_garment(id: StageId, mesh: &GarmentMesh) -> Result<FoldStage> {
        let category = mesh.category;
        if !id.valid_for(category) {
            return Err(FoldError::CategoryMismatch {
                stage: id.to_string(),
                category: category.to_string(),
            });
        }
        let s = &mesh.spec;
        let hw = s.body_width / 2.0;
        let up = Point2::new(0.0, 1.0);
        let (line, grasp, target) = match id {
            StageId::LeftSleeve => {
                (FoldLine::new(Point2::new(-hw, 0.0), up, 1.0), "left_sleeve_tip", "left_sleeve_target")
            }
            StageId::RightSleeve => (
                FoldLine::new(Point2::new(hw, 0.0), up, -1.0),
                "right_sleeve_tip",
                "right_sleeve_target",
            ),
            StageId::LeftLegOntoRight => {
                (FoldLine::new(Point2::new(0.0, 0.0), up, 1.0), "left_cuff", "right_cuff")
            }
            StageId::BottomUp => {
                let (lo, hi) = mesh
                    .vertices
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v.y), hi.max(v.y)));
                let mid = 0.5 * (lo + hi);
                let line = FoldLine::new(Point2::new(0.0, mid), Point2::new(1.0, 0.0), -1.0);
                if category == Category::Pants {
                    (line, "right_cuff", "right_cuff_target")
                } else {
                    (line, "hem_mid", "collar_mid")
                }
            }
        };
        Ok(FoldStage {
            id,
            fold_line: line,
            grasp_keypoint: grasp.to_string(),
            target_keypoint: target.to_string(),
        })
    }
}

pub fn default_stage_ids(category: Category) -> Vec<StageId> {
    match category {
        Category::NoSleeve => vec![StageId::BottomUp],
        Category::ShortSleeve | Category::LongSleeve => {
            vec![StageId::LeftSleeve, StageId::RightSleeve, StageId::BottomUp]
        }
        Category::Pants => vec![StageId::LeftLegOntoRight, StageId::BottomUp],
    }
}

pub fn default_stage_sequence(mesh: &GarmentMesh) -> Vec<FoldStage> {
    default_stage_ids(mesh.category)
        .into_iter()
        .map(|id| FoldStage::for_garment(id, mesh).expect("default stages are valid for their category"))
        .collect()
}

/// Counts vertices reachable from vertex 0 along edges.
pub fn connected_vertex_count(mesh: &GarmentMesh) -> usize {
    let mut adj: HashMap<usize, Vec<usize>> = HashMap::new();
    for e in &mesh.edges {
        adj.entry(e.a).or_default().push(e.b);
        adj.entry(e.b).or_default().push(e.a);
    }
    let mut seen = vec![false; mesh.vertices.len()];
    let mut stack = vec![0];
    seen[0] = true;
    let mut count = 0;
    while let Some(v) = stack.pop() {
        count += 1;
        for &n in adj.get(&v).into_iter().flatten() {
            if !seen[n] {
                seen[n] = true;
                stack.push(n);
            }
        }
    }
    count
}
