//! Action prediction from a pair of corresponded frames: a single contact
//! point and the direction to move it, chosen by a seeded ensemble over the
//! high-flow region of the cloth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{FoldError, Result};
use crate::geometry::{compute_flow, FlowField, Point3, PointCloudFrame};
use crate::planner::Trajectory;

/// Flow below this (meters) counts as no motion.
const MIN_FLOW: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContactAction {
    pub p: Point3,
    /// Unit motion direction.
    pub s: Point3,
    /// Intended displacement along `s`, meters.
    pub magnitude: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnsembleConfig {
    pub seeds: usize,
    /// Grouping radius, meters.
    pub epsilon: f64,
    /// Candidates are points whose flow is at least `beta` times the max.
    pub beta: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig { seeds: 160, epsilon: 0.03, beta: 0.8 }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds == 0 {
            return Err(FoldError::BadParam { field: "seeds", reason: "need at least one seed".into() });
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(FoldError::BadParam { field: "epsilon", reason: "must be positive".into() });
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(FoldError::BadParam { field: "beta", reason: "must be in (0, 1]".into() });
        }
        Ok(())
    }
}

/// The high-flow points of a flow field, shared by all ensemble members.
struct Candidates {
    points: Vec<Point3>,
    flow: FlowField,
    indices: Vec<usize>,
}

impl Candidates {
    fn new(a: &PointCloudFrame, b: &PointCloudFrame, beta: f64) -> Result<Candidates> {
        let flow = compute_flow(a, b)?;
        let max = flow.max_norm();
        if max < MIN_FLOW {
            return Err(FoldError::NoMotion);
        }
        let indices =
            (0..flow.displacements.len()).filter(|&i| flow.displacements[i].norm() >= beta * max).collect();
        Ok(Candidates { points: a.points.clone(), flow, indices })
    }

    fn propose(&self, seed: u64) -> ContactAction {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let i = self.indices[rng.gen_range(0..self.indices.len())];
        let d = self.flow.displacements[i];
        let magnitude = d.norm();
        ContactAction { p: self.points[i], s: d / magnitude, magnitude }
    }
}

/// One ensemble member: a uniformly random point of the high-flow region
/// with its own flow as the motion.
pub fn propose(frame_a: &PointCloudFrame, frame_b: &PointCloudFrame, seed: u64) -> Result<ContactAction> {
    Ok(Candidates::new(frame_a, frame_b, EnsembleConfig::default().beta)?.propose(seed))
}

/// Like [`propose`] with an explicit candidate fraction.
pub fn propose_with(
    frame_a: &PointCloudFrame,
    frame_b: &PointCloudFrame,
    seed: u64,
    beta: f64,
) -> Result<ContactAction> {
    Ok(Candidates::new(frame_a, frame_b, beta)?.propose(seed))
}

struct Group {
    sum: Point3,
    members: Vec<ContactAction>,
}

impl Group {
    fn mean(&self) -> Point3 {
        self.sum / self.members.len() as f64
    }
}

/// Runs `config.seeds` proposals (seeds `0..seeds`), groups them in seed
/// order by distance to each group's running mean position, and returns the
/// member of the largest group closest to that group's mean. Ties between
/// groups go to the one founded first.
pub fn synthesize(frame_a: &PointCloudFrame, frame_b: &PointCloudFrame, config: &EnsembleConfig) -> Result<ContactAction> {
    config.validate()?;
    let candidates = Candidates::new(frame_a, frame_b, config.beta)?;
    let mut groups: Vec<Group> = Vec::new();
    for seed in 0..config.seeds as u64 {
        let action = candidates.propose(seed);
        match groups.iter_mut().find(|g| (g.mean() - action.p).norm() < config.epsilon) {
            Some(g) => {
                g.sum += action.p;
                g.members.push(action);
            }
            None => groups.push(Group { sum: action.p, members: vec![action] }),
        }
    }
    let mut modal = &groups[0];
    for g in &groups[1..] {
        if g.members.len() > modal.members.len() {
            modal = g;
        }
    }
    let mean = modal.mean();
    let mut best = modal.members[0];
    for m in &modal.members[1..] {
        if (m.p - mean).norm() < (best.p - mean).norm() {
            best = *m;
        }
    }
    Ok(best)
}

/// Frame index pairs `(t, t + K)` for `t = 0, K, 2K, ...`; the last pair
/// is shortened to end at the final frame.
pub fn slice_bounds(frames: usize, k: usize) -> Result<Vec<(usize, usize)>> {
    if k == 0 {
        return Err(FoldError::BadParam { field: "cadence", reason: "must be at least 1".into() });
    }
    if frames < k + 1 {
        return Err(FoldError::TooShort { frames, needed: k + 1 });
    }
    Ok((0..frames - 1).step_by(k).map(|t| (t, (t + k).min(frames - 1))).collect())
}

/// One synthesized action per trajectory slice.
pub fn slice_actions(trajectory: &Trajectory, k: usize, config: &EnsembleConfig) -> Result<Vec<ContactAction>> {
    slice_bounds(trajectory.len(), k)?
        .into_iter()
        .map(|(a, b)| synthesize(&trajectory.frame(a), &trajectory.frame(b), config))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::garment::{FoldLine, FoldStage, StageId};
    use crate::geometry::Point2;
    use crate::planner::predict_hinge_trajectory;
    use proptest::prelude::*;

    fn frame(points: Vec<Point3>) -> PointCloudFrame {
        PointCloudFrame::new(0, points)
    }

    fn sheet() -> Vec<Point3> {
        let mut pts = Vec::new();
        for i in 0..21 {
            for j in 0..11 {
                pts.push(Point3::new(-0.5 + 0.05 * i as f64, 0.05 * j as f64, 0.002));
            }
        }
        pts
    }

    /// Two blobs of equal flow, `n_a` and `n_b` points, 0.5 m apart.
    pub(crate) fn two_blobs(n_a: usize, n_b: usize) -> (PointCloudFrame, PointCloudFrame) {
        let mut a = Vec::new();
        for i in 0..n_a {
            a.push(Point3::new(0.001 * (i % 5) as f64, 0.001 * (i / 5) as f64, 0.0));
        }
        for i in 0..n_b {
            a.push(Point3::new(0.5 + 0.001 * (i % 5) as f64, 0.001 * (i / 5) as f64, 0.0));
        }
        let b = a.iter().map(|p| p + Point3::new(0.0, 0.0, 0.1)).collect();
        (frame(a), frame(b))
    }

    #[test]
    fn uniform_translation() {
        let a = sheet();
        let b: Vec<Point3> = a.iter().map(|p| p + Point3::new(0.1, 0.0, 0.0)).collect();
        let act = propose(&frame(a.clone()), &frame(b), 7).unwrap();
        assert!((act.s - Point3::x()).norm() < 1e-12);
        assert!((act.magnitude - 0.1).abs() < 1e-12);
        assert!(a.contains(&act.p));
    }

    #[test]
    fn zero_flow_is_no_motion() {
        let a = frame(sheet());
        assert!(matches!(propose(&a, &a, 0), Err(FoldError::NoMotion)));
        assert!(matches!(synthesize(&a, &a, &EnsembleConfig::default()), Err(FoldError::NoMotion)));
    }

    #[test]
    fn hinge_contact_on_moving_half_far_edge() {
        let stage = FoldStage {
            id: StageId::LeftSleeve,
            fold_line: FoldLine::new(Point2::zeros(), Point2::new(0.0, 1.0), 1.0),
            grasp_keypoint: String::new(),
            target_keypoint: String::new(),
        };
        let traj = predict_hinge_trajectory(&frame(sheet()), &stage, 31).unwrap();
        for seed in 0..20 {
            let act = propose(&traj.frame(0), &traj.frame(10), seed).unwrap();
            // Flow grows with distance from the line; beta = 0.8 keeps the
            // outer fifth.
            assert!(act.p.x <= -0.4 + 1e-9, "{}", act.p);
        }
    }

    #[test]
    fn modal_cluster_wins() {
        let (a, b) = two_blobs(120, 40);
        // Candidate mass 3:1; the ensemble must land in the larger blob.
        let act = synthesize(&a, &b, &EnsembleConfig::default()).unwrap();
        assert!(act.p.x < 0.25);
        let (a, b) = two_blobs(40, 120);
        let act = synthesize(&a, &b, &EnsembleConfig::default()).unwrap();
        assert!(act.p.x > 0.25);
    }

    #[test]
    fn single_seed_matches_propose() {
        let a = sheet();
        let b: Vec<Point3> = a.iter().map(|p| p + Point3::new(0.0, 0.02 * p.x.abs(), 0.01)).collect();
        let cfg = EnsembleConfig { seeds: 1, ..Default::default() };
        assert_eq!(synthesize(&frame(a.clone()), &frame(b.clone()), &cfg).unwrap(), propose(&frame(a), &frame(b), 0).unwrap());
    }

    #[test]
    fn identical_proposals_returned_unchanged() {
        let a = sheet();
        let mut b = a.clone();
        b[17].z += 0.05;
        let act = synthesize(&frame(a.clone()), &frame(b.clone()), &EnsembleConfig::default()).unwrap();
        assert_eq!(act, ContactAction { p: a[17], s: Point3::z(), magnitude: b[17].z - a[17].z });
    }

    #[test]
    fn slicing_counts() {
        assert_eq!(slice_bounds(31, 10).unwrap(), vec![(0, 10), (10, 20), (20, 30)]);
        assert_eq!(slice_bounds(31, 30).unwrap(), vec![(0, 30)]);
        assert_eq!(slice_bounds(32, 10).unwrap().last(), Some(&(30, 31)));
        assert!(matches!(slice_bounds(5, 10), Err(FoldError::TooShort { frames: 5, needed: 11 })));
    }

    #[test]
    fn hinge_slices_rotate_monotonically() {
        let stage = FoldStage {
            id: StageId::LeftSleeve,
            fold_line: FoldLine::new(Point2::zeros(), Point2::new(0.0, 1.0), 1.0),
            grasp_keypoint: String::new(),
            target_keypoint: String::new(),
        };
        let traj = predict_hinge_trajectory(&frame(sheet()), &stage, 31).unwrap();
        let actions = slice_actions(&traj, 10, &EnsembleConfig::default()).unwrap();
        assert_eq!(actions.len(), 3);
        // Direction angle in the x-z plane, measured toward the fold.
        let angles: Vec<f64> = actions.iter().map(|a| a.s.z.atan2(a.s.x)).collect();
        assert!(angles.windows(2).all(|w| w[1] < w[0]), "{angles:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn translation_and_scale(tx in -1.0..1.0f64, ty in -1.0..1.0f64, tz in 0.0..1.0f64, c in 0.1..5.0f64) {
            let a = sheet();
            let b: Vec<Point3> = a.iter().map(|p| p + Point3::new(0.03 * p.y, -0.01, 0.05 * (p.x + 0.5))).collect();
            let cfg = EnsembleConfig { seeds: 40, ..Default::default() };
            let base = synthesize(&frame(a.clone()), &frame(b.clone()), &cfg).unwrap();
            prop_assert!(a.contains(&base.p));
            prop_assert!((base.s.norm() - 1.0).abs() < 1e-9);

            let v = Point3::new(tx, ty, tz);
            let moved = synthesize(
                &frame(a.iter().map(|p| p + v).collect()),
                &frame(b.iter().map(|p| p + v).collect()),
                &cfg,
            ).unwrap();
            prop_assert!((moved.p - (base.p + v)).norm() < 1e-9);
            prop_assert!((moved.s - base.s).norm() < 1e-9);

            let scaled_b: Vec<Point3> = a.iter().zip(&b).map(|(p, q)| p + (q - p) * c).collect();
            let scaled = synthesize(&frame(a.clone()), &frame(scaled_b), &cfg).unwrap();
            prop_assert_eq!(scaled.p, base.p);
            prop_assert!((scaled.s - base.s).norm() < 1e-9);
            prop_assert!((scaled.magnitude - c * base.magnitude).abs() < 1e-9 * c);
        }
    }
}
