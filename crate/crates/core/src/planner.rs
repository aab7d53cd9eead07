//! Point-cloud trajectories for a single fold stage.
//!
//! [`HingePlanner`] predicts trajectories analytically: the moving part
//! of the cloth rotates about the fold line, taken as an axis in the
//! ground plane, until it lies reflected on the fixed part one layer
//! higher. [`rollout_oracle_trajectory`] produces ground truth instead by
//! dragging the stage's grasp keypoint through the cloth simulator.

use std::f64::consts::PI;

use crate::error::{FoldError, Result};
use crate::garment::{FoldLine, FoldStage, StageId};
use crate::geometry::{to_ground, Point2, Point3, PointCloudFrame};
use crate::sim::{Observer, Simulator};

/// `M` frames of `N` corresponded points.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub stage: StageId,
    pub frames: Vec<Vec<Point3>>,
    /// Seconds between frames.
    pub frame_period: f64,
    /// Set when the observation already matched the stage goal; all
    /// frames are then identical.
    pub converged: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn n_points(&self) -> usize {
        self.frames.first().map_or(0, Vec::len)
    }

    pub fn frame(&self, i: usize) -> PointCloudFrame {
        PointCloudFrame::new(i as u64, self.frames[i].clone())
    }

    pub fn last(&self) -> &[Point3] {
        self.frames.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Samples of the carry curve for a single grasped point.
#[derive(Clone, Debug, PartialEq)]
pub struct GraspPlan {
    pub grasp: Point3,
    pub target: Point3,
    pub samples: Vec<Point3>,
    pub alpha: f64,
}

/// Cosine ease-in/ease-out on `[0, 1]`.
#[inline]
pub fn ease(u: f64) -> f64 {
    0.5 * (1.0 - (PI * u).cos())
}

/// Arc from `grasp` to `target` in the vertical plane through both: the
/// ground-plane position eases linearly, height eases between the end
/// heights plus a `alpha * |target - grasp| * sin(pi u)` bump.
pub fn plan_arc(grasp: Point3, target: Point3, m: usize, alpha: f64) -> Result<GraspPlan> {
    let span = (target - grasp).norm();
    if span < 1e-3 {
        return Err(FoldError::DegenerateSegment);
    }
    if m < 2 {
        return Err(FoldError::BadParam { field: "m", reason: "need at least 2 samples".into() });
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(FoldError::BadParam { field: "alpha", reason: format!("must be >= 0, got {alpha}") });
    }
    let samples = (0..m)
        .map(|k| {
            if k == 0 {
                return grasp;
            }
            if k == m - 1 {
                return target;
            }
            let u = k as f64 / (m - 1) as f64;
            let e = ease(u);
            let mut p = grasp + (target - grasp) * e;
            p.z += alpha * span * (PI * u).sin();
            p
        })
        .collect();
    Ok(GraspPlan { grasp, target, samples, alpha })
}

/// Coordinates of a point relative to a hinge: along the line, signed
/// in-plane distance toward the moving side, and height above the axis.
#[derive(Clone, Copy, Debug)]
struct HingeCoords {
    along: f64,
    radius: f64,
    angle: f64,
}

struct Hinge {
    line: FoldLine,
    axis_height: f64,
}

impl Hinge {
    fn coords(&self, p: &Point3) -> HingeCoords {
        let g = to_ground(p);
        let d = self.line.signed_distance(&g);
        let h = p.z - self.axis_height;
        let mut angle = h.atan2(d);
        // Branch cut straight below the axis: flat moving points sit near
        // 0, folded or fixed points near pi. Points on the line itself go
        // with the fixed side whatever the sign of their rounding error.
        if angle < -PI / 2.0 + 1e-9 {
            angle += 2.0 * PI;
        }
        HingeCoords { along: (g - self.line.origin).dot(&self.line.direction), radius: d.hypot(h), angle }
    }

    fn point(&self, c: &HingeCoords) -> Point3 {
        let d = c.radius * c.angle.cos();
        let h = c.radius * c.angle.sin();
        let g: Point2 = self.line.origin + self.line.direction * c.along + self.line.normal() * d;
        Point3::new(g.x, g.y, self.axis_height + h)
    }

    /// Same point after a half turn about the axis.
    fn folded(&self, c: &HingeCoords) -> HingeCoords {
        HingeCoords { angle: c.angle + PI, ..*c }
    }
}

/// Analytic fold predictor.
#[derive(Clone, Debug, PartialEq)]
pub struct HingePlanner {
    /// Lift of a folded layer over the one beneath it, meters.
    pub layer_thickness: f64,
    /// Points closer than this to the line (in plane and in height) do not
    /// count as material left to fold.
    pub side_tolerance: f64,
    /// Moving points within this distance of their goal count as folded.
    pub converge_tolerance: f64,
    pub frame_period: f64,
}

impl Default for HingePlanner {
    fn default() -> Self {
        HingePlanner { layer_thickness: 0.002, side_tolerance: 0.005, converge_tolerance: 0.002, frame_period: 0.1 }
    }
}

/// Per-point plan: start and goal in hinge coordinates, or `None` for a
/// point that stays put.
type PointPlan = Option<(HingeCoords, HingeCoords)>;

impl HingePlanner {
    /// Trajectory of `m` frames folding whatever of `observation` still lies
    /// on the moving side. Folded positions are recovered per point from
    /// its current radius about the hinge.
    pub fn predict(&self, observation: &PointCloudFrame, stage: &FoldStage, m: usize) -> Result<Trajectory> {
        self.predict_from(observation, None, stage, m)
    }

    /// Like [`HingePlanner::predict`], with goals taken from `reference`: the
    /// flat configuration the stage started from, corresponded with the
    /// observation. Moving-set membership comes from the reference, so
    /// crumpled or partly carried material still gets its true goal.
    pub fn predict_with_reference(
        &self,
        observation: &PointCloudFrame,
        reference: &[Point3],
        stage: &FoldStage,
        m: usize,
    ) -> Result<Trajectory> {
        self.predict_from(observation, Some(reference), stage, m)
    }

    /// Goal configuration for the stage: moving points of `reference`
    /// reflected across the fold line and lifted by one layer; fixed
    /// points unchanged.
    pub fn folded_pose(&self, reference: &[Point3], stage: &FoldStage) -> Vec<Point3> {
        let hinge = self.hinge(reference, stage);
        reference
            .iter()
            .map(|p| {
                if stage.fold_line.signed_distance(&to_ground(p)) > 0.0 {
                    hinge.point(&hinge.folded(&hinge.coords(p)))
                } else {
                    *p
                }
            })
            .collect()
    }

    fn hinge(&self, points: &[Point3], stage: &FoldStage) -> Hinge {
        let base = points.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
        Hinge { line: stage.fold_line, axis_height: base + 0.5 * self.layer_thickness }
    }

    fn predict_from(
        &self,
        observation: &PointCloudFrame,
        reference: Option<&[Point3]>,
        stage: &FoldStage,
        m: usize,
    ) -> Result<Trajectory> {
        if observation.is_empty() {
            return Err(FoldError::EmptyInput);
        }
        if m < 2 {
            return Err(FoldError::BadParam { field: "m", reason: "need at least 2 frames".into() });
        }
        let obs = &observation.points;
        let (plans, any_active, has_layer) = match reference {
            Some(r) => self.plan_with_reference(obs, r, stage)?,
            None => self.plan_free(obs, stage),
        };
        if !any_active && !has_layer {
            return Err(FoldError::NothingToFold);
        }

        let hinge = self.hinge(reference.unwrap_or(obs), stage);
        let goals: Vec<Point3> = plans
            .iter()
            .zip(obs)
            .map(|(plan, p)| plan.map_or(*p, |(_, goal)| hinge.point(&goal)))
            .collect();
        let worst =
            obs.iter().zip(&goals).map(|(p, g)| (p - g).norm()).fold(0.0, f64::max);
        if !any_active || worst <= self.converge_tolerance {
            return Ok(Trajectory {
                stage: stage.id,
                frames: vec![obs.clone(); m],
                frame_period: self.frame_period,
                converged: true,
            });
        }

        let frames = (0..m)
            .map(|k| {
                if k == 0 {
                    return obs.clone();
                }
                if k == m - 1 {
                    return goals.clone();
                }
                let e = ease(k as f64 / (m - 1) as f64);
                plans
                    .iter()
                    .zip(obs)
                    .map(|(plan, p)| match plan {
                        None => *p,
                        Some((a, b)) => hinge.point(&HingeCoords {
                            along: a.along + (b.along - a.along) * e,
                            radius: a.radius + (b.radius - a.radius) * e,
                            angle: a.angle + (b.angle - a.angle) * e,
                        }),
                    })
                    .collect()
            })
            .collect();
        Ok(Trajectory { stage: stage.id, frames, frame_period: self.frame_period, converged: false })
    }

    /// Reference-free: each point folds about the hinge at its current
    /// radius. Returns per-point plans, whether any point still has
    /// material to fold, and whether a folded layer is already present.
    fn plan_free(&self, obs: &[Point3], stage: &FoldStage) -> (Vec<PointPlan>, bool, bool) {
        let hinge = self.hinge(obs, stage);
        let half = 0.5 * self.layer_thickness;
        let mut any_active = false;
        let mut has_layer = false;
        let plans = obs
            .iter()
            .map(|p| {
                let c = hinge.coords(p);
                let d = c.radius * c.angle.cos();
                let h = c.radius * c.angle.sin();
                has_layer |= h > 0.0 && d <= self.side_tolerance;
                // Flat in-plane distance the point would have unfolded.
                let flat = (c.radius * c.radius - half * half).max(0.0).sqrt();
                let goal = HingeCoords { angle: half.atan2(-flat), ..c };
                if goal.angle - c.angle <= 1e-12 {
                    return None;
                }
                any_active |= d > self.side_tolerance || h > self.side_tolerance;
                Some((c, goal))
            })
            .collect();
        (plans, any_active, has_layer)
    }

    fn plan_with_reference(
        &self,
        obs: &[Point3],
        reference: &[Point3],
        stage: &FoldStage,
    ) -> Result<(Vec<PointPlan>, bool, bool)> {
        if reference.len() != obs.len() {
            return Err(FoldError::SizeMismatch { expected: obs.len(), actual: reference.len() });
        }
        let hinge = self.hinge(reference, stage);
        let mut any_active = false;
        let plans = obs
            .iter()
            .zip(reference)
            .map(|(p, r)| {
                let d_ref = stage.fold_line.signed_distance(&to_ground(r));
                if d_ref <= 0.0 {
                    return None;
                }
                any_active |= d_ref > self.side_tolerance;
                let goal = hinge.folded(&hinge.coords(r));
                let mut start = hinge.coords(p);
                // Keep the start within half a turn past the goal angle.
                while start.angle > goal.angle + PI / 2.0 {
                    start.angle -= 2.0 * PI;
                }
                Some((start, goal))
            })
            .collect();
        Ok((plans, any_active, false))
    }
}

/// Convenience wrapper with default planner settings.
pub fn predict_hinge_trajectory(observation: &PointCloudFrame, stage: &FoldStage, m: usize) -> Result<Trajectory> {
    HingePlanner::default().predict(observation, stage, m)
}

/// Timing of a simulated ground-truth fold.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutParams {
    /// Carry duration in seconds.
    pub duration: f64,
    pub alpha: f64,
    /// Frames simulated after release before the final observation.
    pub settle_frames: usize,
}

impl Default for RolloutParams {
    fn default() -> Self {
        RolloutParams { duration: 3.0, alpha: 0.5, settle_frames: 60 }
    }
}

/// Drags the stage's grasp keypoint along [`plan_arc`] to the target
/// keypoint (one layer up) and records `m` observations: frame 0 before
/// the carry, evenly spaced frames during it, the last after release and
/// settling.
pub fn rollout_oracle_trajectory(
    sim: &mut Simulator,
    observer: &mut Observer,
    stage: &FoldStage,
    m: usize,
    params: &RolloutParams,
) -> Result<Trajectory> {
    if m < 3 {
        return Err(FoldError::BadParam { field: "m", reason: "rollout needs at least 3 frames".into() });
    }
    let mesh = sim.mesh().clone();
    let missing = |name: &str| FoldError::BadParam { field: "keypoint", reason: format!("missing `{name}`") };
    let grasp_v = mesh.keypoint(&stage.grasp_keypoint).ok_or_else(|| missing(&stage.grasp_keypoint))?;
    let target_v = mesh.keypoint(&stage.target_keypoint).ok_or_else(|| missing(&stage.target_keypoint))?;
    let grasp = sim.state.positions[grasp_v];
    let mut target = sim.state.positions[target_v];
    if (target - grasp).norm() < 1e-3 {
        return Err(FoldError::DegenerateSegment);
    }
    target.z += sim.params().thickness;

    let carry_frames = ((params.duration / sim.params().dt).round() as usize).max(m - 2);
    let arc = plan_arc(grasp, target, carry_frames + 1, params.alpha)?;

    let mut frames = Vec::with_capacity(m);
    frames.push(observer.observe(sim)?.points);
    // Observation slots spread over the carry: frames 1..m-2.
    let slots: Vec<usize> =
        (1..m - 1).map(|k| (k as f64 * carry_frames as f64 / (m - 2) as f64).round() as usize).collect();
    sim.grasp(grasp_v)?;
    let mut next_slot = 0;
    for (step, waypoint) in arc.samples.iter().enumerate().skip(1) {
        sim.move_grasp(grasp_v, *waypoint)?;
        sim.step()?;
        while next_slot < slots.len() && slots[next_slot] == step {
            frames.push(observer.observe(sim)?.points);
            next_slot += 1;
        }
    }
    sim.release(grasp_v)?;
    sim.run(params.settle_frames)?;
    frames.push(observer.observe(sim)?.points);
    debug_assert_eq!(frames.len(), m);

    Ok(Trajectory { stage: stage.id, frames, frame_period: params.duration / (m - 2) as f64, converged: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::garment::{build_garment, Category, GarmentSpec};
    use crate::geometry::rotate_z;
    use proptest::prelude::*;

    fn p3(x: f64, y: f64, z: f64) -> Point3 {
        Point3::new(x, y, z)
    }

    fn stage_x0() -> FoldStage {
        // Line x = 0, moving side x < 0.
        FoldStage {
            id: StageId::LeftSleeve,
            fold_line: FoldLine::new(Point2::new(0.0, 0.0), Point2::new(0.0, 1.0), 1.0),
            grasp_keypoint: "g".into(),
            target_keypoint: "t".into(),
        }
    }

    fn flat_sheet(z: f64) -> Vec<Point3> {
        let mut pts = Vec::new();
        for i in 0..11 {
            for j in 0..5 {
                pts.push(p3(-0.5 + 0.1 * i as f64, 0.1 * j as f64, z));
            }
        }
        pts
    }

    #[test]
    fn arc_closed_form() {
        let plan = plan_arc(p3(0., 0., 0.), p3(1., 0., 0.), 3, 0.5).unwrap();
        assert_eq!(plan.samples[0], p3(0., 0., 0.));
        assert!((plan.samples[1] - p3(0.5, 0., 0.5)).norm() < 1e-15);
        assert_eq!(plan.samples[2], p3(1., 0., 0.));
    }

    #[test]
    fn arc_limits_and_errors() {
        let flat = plan_arc(p3(0., 0., 0.), p3(1., 0., 0.), 9, 0.0).unwrap();
        assert!(flat.samples.iter().all(|s| s.z == 0.0));
        let a = plan_arc(p3(0., 0., 0.), p3(0.3, 0.2, 0.), 17, 0.5).unwrap();
        let b = plan_arc(p3(0.3, 0.2, 0.), p3(0., 0., 0.), 17, 0.5).unwrap();
        for (x, y) in a.samples.iter().zip(b.samples.iter().rev()) {
            assert!((x - y).norm() < 1e-12);
        }
        assert!(a.samples.iter().all(|s| s.z >= 0.0));
        assert!(matches!(plan_arc(p3(0., 0., 0.), p3(0.0005, 0., 0.), 5, 0.5), Err(FoldError::DegenerateSegment)));
    }

    #[test]
    fn flat_fold_ends_in_lifted_reflection() {
        let z = 0.002;
        let obs = PointCloudFrame::new(0, flat_sheet(z));
        let traj = predict_hinge_trajectory(&obs, &stage_x0(), 30).unwrap();
        assert_eq!(traj.len(), 30);
        assert_eq!(traj.frames[0], obs.points);
        for (p, q) in obs.points.iter().zip(traj.last()) {
            if p.x < 0.0 {
                assert!((q - p3(-p.x, p.y, z + 0.002)).norm() < 1e-9, "{p} -> {q}");
            } else if p.x > 0.0 {
                assert_eq!(p, q);
            }
        }
    }

    #[test]
    fn hinge_motion_is_rigid_on_moving_set() {
        let obs = PointCloudFrame::new(0, flat_sheet(0.002));
        let traj = predict_hinge_trajectory(&obs, &stage_x0(), 12).unwrap();
        let moving: Vec<usize> = (0..obs.len()).filter(|&i| obs.points[i].x < 0.0).collect();
        for f in &traj.frames {
            for &i in &moving {
                for &j in &moving {
                    let d0 = (obs.points[i] - obs.points[j]).norm();
                    let d = (f[i] - f[j]).norm();
                    assert!((d - d0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn replanning_final_frame_is_converged() {
        let obs = PointCloudFrame::new(0, flat_sheet(0.002));
        let traj = predict_hinge_trajectory(&obs, &stage_x0(), 10).unwrap();
        let again = predict_hinge_trajectory(&PointCloudFrame::new(1, traj.last().to_vec()), &stage_x0(), 10).unwrap();
        assert!(again.converged);
        assert!(again.frames.iter().all(|f| f == traj.last()));
    }

    #[test]
    fn nothing_to_fold_when_moving_side_empty() {
        let pts: Vec<Point3> = flat_sheet(0.002).into_iter().filter(|p| p.x > 0.0).collect();
        let obs = PointCloudFrame::new(0, pts);
        assert!(matches!(predict_hinge_trajectory(&obs, &stage_x0(), 5), Err(FoldError::NothingToFold)));
    }

    #[test]
    fn mid_fold_resumes_remaining_quarter_turn() {
        let z = 0.002;
        let flat = flat_sheet(z);
        let full = predict_hinge_trajectory(&PointCloudFrame::new(0, flat.clone()), &stage_x0(), 3).unwrap();
        // Middle of a 3-frame cosine-eased plan is exactly the 90 degree pose.
        let mid = full.frames[1].clone();
        for (p, q) in flat.iter().zip(&mid) {
            if p.x < -1e-12 {
                assert!((q.z - (z + 0.001) - (-p.x)).abs() < 1e-9);
            }
        }
        let resumed = predict_hinge_trajectory(&PointCloudFrame::new(1, mid.clone()), &stage_x0(), 5).unwrap();
        assert_eq!(resumed.frames[0], mid);
        for (a, b) in resumed.last().iter().zip(full.last()) {
            assert!((a - b).norm() < 1e-9);
        }
        // Halfway through the resumed plan is the 135 degree pose.
        let axis = z + 0.001;
        for (p, q) in flat.iter().zip(&resumed.frames[2]) {
            if p.x < -0.05 {
                let r = ((p.x).powi(2) + 0.001f64.powi(2)).sqrt();
                let angle = (q.z - axis).atan2(-q.x);
                let flat_angle = (-0.001f64).atan2(-p.x);
                assert!((angle - (flat_angle + 0.75 * PI)).abs() < 1e-9);
                assert!(((q.x).hypot(q.z - axis) - r).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reference_goals_survive_crumpling() {
        let flat = flat_sheet(0.002);
        // Squash the moving half toward the line.
        let crumpled: Vec<Point3> =
            flat.iter().map(|p| if p.x < 0.0 { p3(0.6 * p.x, p.y, p.z) } else { *p }).collect();
        let planner = HingePlanner::default();
        let traj =
            planner.predict_with_reference(&PointCloudFrame::new(0, crumpled.clone()), &flat, &stage_x0(), 8).unwrap();
        let goal = planner.folded_pose(&flat, &stage_x0());
        assert_eq!(traj.frames[0], crumpled);
        for (a, b) in traj.last().iter().zip(&goal) {
            assert!((a - b).norm() < 1e-9);
        }
        let done =
            planner.predict_with_reference(&PointCloudFrame::new(1, goal.clone()), &flat, &stage_x0(), 8).unwrap();
        assert!(done.converged);
    }

    #[test]
    fn rollout_frame_zero_is_observation() {
        let mesh = std::sync::Arc::new(build_garment(&GarmentSpec::default_for(Category::ShortSleeve)).unwrap());
        let mut sim = Simulator::new(mesh.clone(), Default::default()).unwrap();
        let mut observer = Observer::new(128);
        let before = observer.observe(&sim).unwrap();
        let stage = FoldStage::for_garment(StageId::LeftSleeve, &mesh).unwrap();
        let params = RolloutParams { duration: 0.5, settle_frames: 10, ..Default::default() };
        let traj = rollout_oracle_trajectory(&mut sim, &mut observer, &stage, 6, &params).unwrap();
        assert_eq!(traj.len(), 6);
        assert_eq!(traj.frames[0], before.points);

        let mut degenerate = stage.clone();
        degenerate.target_keypoint = degenerate.grasp_keypoint.clone();
        assert!(matches!(
            rollout_oracle_trajectory(&mut sim, &mut observer, &degenerate, 6, &params),
            Err(FoldError::DegenerateSegment)
        ));
    }

    #[test]
    fn vest_bottom_up_rollout_halves_the_footprint() {
        let mesh = std::sync::Arc::new(build_garment(&GarmentSpec::default_for(Category::NoSleeve)).unwrap());
        let mut sim = Simulator::new(mesh.clone(), Default::default()).unwrap();
        sim.settle(1e-3, 240).unwrap();
        // Every vertex observed, so frames line up with the mesh triangles.
        let mut observer = Observer::new(sim.vertex_count());
        let stage = FoldStage::for_garment(StageId::BottomUp, &mesh).unwrap();
        let traj = rollout_oracle_trajectory(&mut sim, &mut observer, &stage, 30, &RolloutParams::default()).unwrap();
        let before = crate::metrics::projected_area(&traj.frames[0], &mesh.triangles).unwrap();
        let after = crate::metrics::projected_area(traj.last(), &mesh.triangles).unwrap();
        assert!(after / before <= 0.65, "area ratio {}", after / before);
    }

    proptest! {
        #[test]
        fn prediction_is_rotation_equivariant(theta in -3.1..3.1f64, m in 2usize..8) {
            let obs = PointCloudFrame::new(0, flat_sheet(0.002));
            let stage = stage_x0();
            let base = predict_hinge_trajectory(&obs, &stage, m).unwrap();

            let rot = |p: &Point3| rotate_z(p, theta);
            let rot2 = |p: &Point2| { let q = rot(&p3(p.x, p.y, 0.0)); Point2::new(q.x, q.y) };
            let turned = FoldStage {
                fold_line: FoldLine::new(rot2(&stage.fold_line.origin), rot2(&stage.fold_line.direction), 1.0),
                ..stage.clone()
            };
            let obs_r = PointCloudFrame::new(0, obs.points.iter().map(rot).collect());
            let out = predict_hinge_trajectory(&obs_r, &turned, m).unwrap();
            for (fa, fb) in base.frames.iter().zip(&out.frames) {
                for (a, b) in fa.iter().zip(fb) {
                    prop_assert!((rot(a) - b).norm() < 1e-9);
                }
            }
        }
    }
}
