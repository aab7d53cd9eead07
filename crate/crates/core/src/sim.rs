//! Position-based cloth dynamics with compliant constraints.
//!
//! Each frame is split into substeps. A substep predicts positions under
//! gravity, projects stretch (mesh edges) and bending (opposite vertices
//! of adjacent triangles) distance constraints Gauss-Seidel style in a
//! fixed order, clamps against the ground plane, applies friction to
//! contacting vertices and recovers velocities from the position change.
//! Grasps are kinematic pins: a pinned vertex has zero inverse mass and
//! is driven along a straight line to its target over the frame.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use crate::error::{FoldError, Result};
use crate::garment::GarmentMesh;
use crate::geometry::{farthest_point_sample, Point3, PointCloudFrame};

#[derive(Clone, Debug, PartialEq)]
pub struct SimParams {
    pub dt: f64,
    pub substeps: usize,
    pub iterations: usize,
    pub gravity: Point3,
    pub stretch_compliance: f64,
    pub bend_compliance: f64,
    /// Exponential velocity damping rate, 1/s.
    pub damping: f64,
    /// Fraction of tangential velocity removed on ground contact.
    pub friction: f64,
    pub thickness: f64,
    /// Cloth mass per unit area, kg/m^2.
    pub areal_density: f64,
    pub ground: bool,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            dt: 1.0 / 60.0,
            substeps: 10,
            iterations: 10,
            gravity: Point3::new(0.0, 0.0, -9.81),
            stretch_compliance: 0.0,
            bend_compliance: 100.0,
            damping: 0.5,
            friction: 0.6,
            thickness: 0.002,
            areal_density: 0.2,
            ground: true,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |field, reason: &str| Err(FoldError::BadParam { field, reason: reason.into() });
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt", "must be positive");
        }
        if self.substeps == 0 {
            return bad("substeps", "must be at least 1");
        }
        if self.iterations == 0 {
            return bad("iterations", "must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.friction) {
            return bad("friction", "must lie in [0, 1]");
        }
        if self.stretch_compliance < 0.0 || self.bend_compliance < 0.0 || self.damping < 0.0 {
            return bad("compliance", "compliances and damping must be non-negative");
        }
        if !(self.thickness >= 0.0 && self.areal_density > 0.0) {
            return bad("thickness", "thickness >= 0 and density > 0 required");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub positions: Vec<Point3>,
    pub prev_positions: Vec<Point3>,
    pub velocities: Vec<Point3>,
    /// Grasped vertex -> kinematic target.
    pub pinned: BTreeMap<usize, Point3>,
    pub time: f64,
}

impl SimState {
    pub fn at_rest(positions: Vec<Point3>) -> Self {
        let n = positions.len();
        SimState {
            prev_positions: positions.clone(),
            positions,
            velocities: vec![Point3::zeros(); n],
            pinned: BTreeMap::new(),
            time: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct DistanceConstraint {
    a: usize,
    b: usize,
    rest: f64,
    compliance: f64,
}

/// Reorders constraints into greedy color classes (no two constraints of
/// a class share a vertex). Neighbouring projections then touch disjoint
/// vertices, which keeps the Gauss-Seidel sweep free of read-after-write
/// stalls. The order is a pure function of the input, so runs stay
/// deterministic.
fn color_order(constraints: Vec<DistanceConstraint>, n: usize) -> Vec<DistanceConstraint> {
    let mut classes: Vec<(Vec<bool>, Vec<DistanceConstraint>)> = Vec::new();
    for c in constraints {
        match classes.iter_mut().find(|(used, _)| !used[c.a] && !used[c.b]) {
            Some((used, members)) => {
                used[c.a] = true;
                used[c.b] = true;
                members.push(c);
            }
            None => {
                let mut used = vec![false; n];
                used[c.a] = true;
                used[c.b] = true;
                classes.push((used, vec![c]));
            }
        }
    }
    classes.into_iter().flat_map(|(_, members)| members).collect()
}

/// A garment mesh together with its dynamic state.
#[derive(Clone, Debug)]
pub struct Simulator {
    mesh: Arc<GarmentMesh>,
    params: SimParams,
    pub state: SimState,
    mass: Vec<f64>,
    constraints: Vec<DistanceConstraint>,
    frame: u64,
}

impl Simulator {
    pub fn new(mesh: Arc<GarmentMesh>, params: SimParams) -> Result<Self> {
        params.validate()?;
        let n = mesh.vertices.len();
        let mut mass = vec![0.0; n];
        for t in &mesh.triangles {
            let [a, b, c] = t.map(|i| mesh.vertices[i]);
            let area = 0.5 * (b - a).cross(&(c - a)).norm();
            for &i in t {
                mass[i] += params.areal_density * area / 3.0;
            }
        }
        let constraints = mesh
            .edges
            .iter()
            .map(|e| DistanceConstraint { a: e.a, b: e.b, rest: e.rest, compliance: params.stretch_compliance })
            .chain(mesh.bends.iter().map(|e| DistanceConstraint {
                a: e.a,
                b: e.b,
                rest: e.rest,
                compliance: params.bend_compliance,
            }))
            .collect();
        let constraints = color_order(constraints, n);
        let state = SimState::at_rest(mesh.vertices.clone());
        Ok(Simulator { mesh, params, state, mass, constraints, frame: 0 })
    }

    pub fn mesh(&self) -> &Arc<GarmentMesh> {
        &self.mesh
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn frame(&self) -> u64 {
        self.frame
    }

    pub fn vertex_count(&self) -> usize {
        self.state.positions.len()
    }

    fn check_vertex(&self, v: usize) -> Result<()> {
        if v >= self.vertex_count() {
            return Err(FoldError::BadVertex { vertex: v, count: self.vertex_count() });
        }
        Ok(())
    }

    /// Pin a vertex where it currently is.
    pub fn grasp(&mut self, v: usize) -> Result<()> {
        self.check_vertex(v)?;
        let here = self.state.positions[v];
        self.state.pinned.insert(v, here);
        Ok(())
    }

    /// Set the kinematic target reached by the end of the next step. The
    /// target is held at or above the collision thickness.
    pub fn move_grasp(&mut self, v: usize, target: Point3) -> Result<()> {
        let floor = if self.params.ground { self.params.thickness } else { f64::NEG_INFINITY };
        let slot = self.state.pinned.get_mut(&v).ok_or(FoldError::NotGrasped(v))?;
        *slot = Point3::new(target.x, target.y, target.z.max(floor));
        Ok(())
    }

    pub fn release(&mut self, v: usize) -> Result<()> {
        self.state.pinned.remove(&v).map(|_| ()).ok_or(FoldError::NotGrasped(v))
    }

    pub fn release_all(&mut self) {
        self.state.pinned.clear();
    }

    /// Advance one frame of `dt`.
    pub fn step(&mut self) -> Result<()> {
        let p = &self.params;
        let n = self.state.positions.len();
        let h = p.dt / p.substeps as f64;
        let decay = (-p.damping * h).exp();
        let half_gh = p.gravity * (0.5 * h);

        let inv_mass: Vec<f64> = (0..n)
            .map(|i| if self.state.pinned.contains_key(&i) { 0.0 } else { 1.0 / self.mass[i] })
            .collect();
        let pin_start: Vec<(usize, Point3, Point3)> = self
            .state
            .pinned
            .iter()
            .map(|(&i, &target)| (i, self.state.positions[i], target))
            .collect();
        // Per-step constants: compliance scaled by the substep, and
        // constraints whose endpoints are both pinned dropped.
        let active: Vec<(u32, u32, f64, f64)> = self
            .constraints
            .iter()
            .filter(|c| inv_mass[c.a] + inv_mass[c.b] > 0.0)
            .map(|c| (c.a as u32, c.b as u32, c.rest, c.compliance / (h * h)))
            .collect();
        let mut lambda = vec![0.0; active.len()];
        let mut contact = vec![false; n];

        let st = &mut self.state;
        for sub in 0..p.substeps {
            let frac = (sub + 1) as f64 / p.substeps as f64;
            for i in 0..n {
                st.prev_positions[i] = st.positions[i];
                if inv_mass[i] > 0.0 {
                    let v = st.velocities[i] * decay;
                    st.positions[i] += v * h + half_gh * h;
                }
            }
            for &(i, start, target) in &pin_start {
                st.positions[i] = if sub + 1 == p.substeps { target } else { start + (target - start) * frac };
            }

            lambda.iter_mut().for_each(|l| *l = 0.0);
            for _ in 0..p.iterations {
                let pos = &mut st.positions;
                for (&(a, b, rest, alpha), l) in active.iter().zip(lambda.iter_mut()) {
                    let (a, b) = (a as usize, b as usize);
                    let (wa, wb) = (inv_mass[a], inv_mass[b]);
                    let d = pos[a] - pos[b];
                    let len = d.norm();
                    if len < 1e-12 {
                        continue;
                    }
                    let dl = (rest - len - alpha * *l) / (wa + wb + alpha);
                    *l += dl;
                    let corr = d * (dl / len);
                    pos[a] += corr * wa;
                    pos[b] -= corr * wb;
                }
                if p.ground {
                    for i in 0..n {
                        if inv_mass[i] > 0.0 && st.positions[i].z < p.thickness {
                            st.positions[i].z = p.thickness;
                            contact[i] = true;
                        }
                    }
                }
            }

            for i in 0..n {
                if inv_mass[i] == 0.0 {
                    st.velocities[i] = (st.positions[i] - st.prev_positions[i]) / h;
                    continue;
                }
                let touching = contact[i] || (p.ground && st.positions[i].z <= p.thickness + 1e-9);
                if touching {
                    let prev = st.prev_positions[i];
                    let keep = 1.0 - p.friction;
                    st.positions[i].x = prev.x + (st.positions[i].x - prev.x) * keep;
                    st.positions[i].y = prev.y + (st.positions[i].y - prev.y) * keep;
                }
                let mut v = (st.positions[i] - st.prev_positions[i]) / h + half_gh;
                if touching && v.z < 0.0 {
                    v.z = 0.0;
                }
                st.velocities[i] = v;
                contact[i] = false;
            }
        }
        st.time += p.dt;
        self.frame += 1;

        for (i, x) in st.positions.iter().enumerate() {
            if !(x.iter().all(|c| c.is_finite() && c.abs() <= 1e3)) {
                return Err(FoldError::NumericalBlowup { vertex: i });
            }
        }
        Ok(())
    }

    pub fn run(&mut self, frames: usize) -> Result<()> {
        for _ in 0..frames {
            self.step()?;
        }
        Ok(())
    }

    /// Step until every free vertex moves slower than `speed` (m/s), or
    /// `max_frames` elapse. Returns the frames taken.
    pub fn settle(&mut self, speed: f64, max_frames: usize) -> Result<usize> {
        for k in 0..max_frames {
            self.step()?;
            if k >= 2 && self.max_free_speed() < speed {
                return Ok(k + 1);
            }
        }
        Ok(max_frames)
    }

    pub fn max_free_speed(&self) -> f64 {
        self.state
            .velocities
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.state.pinned.contains_key(i))
            .map(|(_, v)| v.norm())
            .fold(0.0, f64::max)
    }

    /// Largest relative edge length deviation from rest.
    pub fn max_strain(&self) -> f64 {
        self.mesh
            .edges
            .iter()
            .map(|e| ((self.state.positions[e.a] - self.state.positions[e.b]).norm() - e.rest).abs() / e.rest)
            .fold(0.0, f64::max)
    }

    /// Kinetic plus gravitational potential energy (ground at z = 0).
    pub fn energy(&self) -> f64 {
        let g = -self.params.gravity.z;
        self.state
            .positions
            .iter()
            .zip(&self.state.velocities)
            .zip(&self.mass)
            .map(|((x, v), m)| 0.5 * m * v.norm_squared() + m * g * x.z)
            .sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Index of the vertex closest to `p`; ties go to the lowest index.
    pub fn nearest_vertex(&self, p: &Point3) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, x) in self.state.positions.iter().enumerate() {
            let d = (x - p).norm_squared();
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }
}

/// Downsampled observations that keep the same vertex subset across calls,
/// so successive frames correspond index-by-index.
#[derive(Clone, Debug)]
pub struct Observer {
    n_points: usize,
    index_map: Option<Vec<usize>>,
}

impl Observer {
    pub fn new(n_points: usize) -> Self {
        Observer { n_points, index_map: None }
    }

    /// Observer reusing a known vertex subset.
    pub fn with_index_map(index_map: Vec<usize>) -> Self {
        Observer { n_points: index_map.len(), index_map: Some(index_map) }
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn index_map(&self) -> Option<&[usize]> {
        self.index_map.as_deref()
    }

    pub fn observe(&mut self, sim: &Simulator) -> Result<PointCloudFrame> {
        let positions = &sim.state.positions;
        if self.index_map.is_none() {
            let n = positions.len();
            if self.n_points == 0 || self.n_points > n {
                return Err(FoldError::BadK { k: self.n_points, n });
            }
            let map =
                if self.n_points == n { (0..n).collect() } else { farthest_point_sample(positions, self.n_points)? };
            self.index_map = Some(map);
        }
        let map = self.index_map.as_ref().expect("index map set above");
        Ok(PointCloudFrame::new(sim.frame(), map.iter().map(|&i| positions[i]).collect()))
    }
}

/// Binary little-endian PLY with float32 x/y/z.
pub fn write_ply<W: Write>(points: &[Point3], mut out: W) -> Result<()> {
    write!(
        out,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
        points.len()
    )?;
    let mut buf = Vec::with_capacity(points.len() * 12);
    for p in points {
        for c in [p.x, p.y, p.z] {
            buf.extend_from_slice(&(c as f32).to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::garment::{build_garment, Category, GarmentSpec};

    fn sim(cat: Category) -> Simulator {
        let mesh = Arc::new(build_garment(&GarmentSpec::default_for(cat)).unwrap());
        Simulator::new(mesh, SimParams::default()).unwrap()
    }

    #[test]
    fn flat_garment_settles() {
        let mut s = sim(Category::ShortSleeve);
        s.run(300).unwrap();
        assert!(s.max_strain() <= 0.02, "strain {}", s.max_strain());
        assert!(s.max_free_speed() <= 1e-3, "speed {}", s.max_free_speed());
    }

    #[test]
    fn pinned_vertex_tracks_target_exactly() {
        let mut s = sim(Category::NoSleeve);
        let v = s.mesh().keypoint("hem_mid").unwrap();
        let start = s.state.positions[v];
        s.grasp(v).unwrap();
        for k in 1..=60 {
            let target = start + Point3::new(0.0, 0.0, 0.1 * k as f64 / 60.0);
            s.move_grasp(v, target).unwrap();
            s.step().unwrap();
            assert_eq!(s.state.positions[v], target);
        }
    }

    #[test]
    fn single_step_free_fall_is_ballistic() {
        let mesh = Arc::new(build_garment(&GarmentSpec::default_for(Category::NoSleeve)).unwrap());
        let params = SimParams { ground: false, damping: 0.0, ..SimParams::default() };
        let mut s = Simulator::new(mesh, params.clone()).unwrap();
        let before = crate::geometry::centroid(&s.state.positions);
        s.step().unwrap();
        let after = crate::geometry::centroid(&s.state.positions);
        let expected = 0.5 * params.gravity.z * params.dt * params.dt;
        assert!(((after - before).z - expected).abs() < 1e-9, "{} vs {}", (after - before).z, expected);
        assert!((after - before).xy().norm() < 1e-12);
    }

    #[test]
    fn grasp_release_errors() {
        let mut s = sim(Category::NoSleeve);
        assert!(matches!(s.release(3), Err(FoldError::NotGrasped(3))));
        assert!(matches!(s.move_grasp(3, Point3::zeros()), Err(FoldError::NotGrasped(3))));
        assert!(matches!(s.grasp(1_000_000), Err(FoldError::BadVertex { .. })));
        s.grasp(3).unwrap();
        let here = s.state.positions[3];
        s.move_grasp(3, here).unwrap();
        assert_eq!(s.state.pinned[&3], here);
        s.release(3).unwrap();
        assert!(s.state.pinned.is_empty());
    }

    #[test]
    fn observer_caches_index_map() {
        let mut s = sim(Category::NoSleeve);
        let n = s.vertex_count();
        let mut full = Observer::new(n);
        let f = full.observe(&s).unwrap();
        assert_eq!(full.index_map().unwrap(), (0..n).collect::<Vec<_>>().as_slice());
        assert_eq!(f.points, s.state.positions);

        let mut obs = Observer::new(64);
        let a = obs.observe(&s).unwrap();
        let b = obs.observe(&s).unwrap();
        assert_eq!(a, b);
        let map = obs.index_map().unwrap().to_vec();
        for _ in 0..100 {
            s.step().unwrap();
            obs.observe(&s).unwrap();
            assert_eq!(obs.index_map().unwrap(), map.as_slice());
        }
        assert!(matches!(Observer::new(n + 1).observe(&s), Err(FoldError::BadK { .. })));
    }

    #[test]
    fn ply_layout() {
        let pts = vec![Point3::new(1.0, 2.0, 3.0); 5];
        let mut buf = Vec::new();
        write_ply(&pts, &mut buf).unwrap();
        let header_end = buf.windows(11).position(|w| w == b"end_header\n").unwrap() + 11;
        assert_eq!(buf.len() - header_end, 5 * 12);
        assert_eq!(&buf[header_end..header_end + 4], &1.0f32.to_le_bytes());
    }

    #[test]
    fn bad_params_rejected() {
        let mesh = Arc::new(build_garment(&GarmentSpec::default_for(Category::NoSleeve)).unwrap());
        for p in [
            SimParams { dt: 0.0, ..Default::default() },
            SimParams { substeps: 0, ..Default::default() },
            SimParams { iterations: 0, ..Default::default() },
            SimParams { friction: 1.5, ..Default::default() },
        ] {
            assert!(Simulator::new(mesh.clone(), p).is_err());
        }
    }
}
