//! Serial-chain forward kinematics, geometric Jacobian, and collision-filtered
//! damped-least-squares inverse kinematics.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, Isometry3, Matrix6, Unit, UnitQuaternion, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CollisionWorld, PlacedShape, Pose, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointKind {
    Revolute,
    Prismatic,
    /// Unbounded revolute joint.
    Continuous,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Joint {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: JointKind,
    pub axis: Unit<Vector3<f64>>,
    #[serde(default)]
    pub origin: Pose,
    /// `[min, max]`; absent for continuous joints.
    #[serde(default)]
    pub limits: Option<[f64; 2]>,
}

impl Joint {
    fn motion(&self, q: f64) -> Pose {
        match self.kind {
            JointKind::Prismatic => {
                let t = self.axis.into_inner() * q;
                Pose::from_translation(t.x, t.y, t.z)
            }
            _ => Pose::from_parts(Vector3::zeros(), UnitQuaternion::from_axis_angle(&self.axis, q)),
        }
    }

    /// Range used for seeding and clamping; continuous joints wrap on `[-pi, pi]`.
    pub fn range(&self) -> (f64, f64) {
        match self.limits {
            Some([lo, hi]) => (lo, hi),
            None => (-PI, PI),
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.kind != JointKind::Continuous
    }
}

/// Which rows of the 6-D twist `[vx, vy, vz, wx, wy, wz]` the task constrains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskSpace {
    /// In-plane position only (order 2).
    PlanarPosition,
    /// In-plane position plus rotation about z (order 3).
    Planar,
    /// Spatial position only (order 3).
    Position,
    /// Full pose (order 6).
    Spatial,
}

impl TaskSpace {
    pub fn rows(self) -> &'static [usize] {
        match self {
            TaskSpace::PlanarPosition => &[0, 1],
            TaskSpace::Planar => &[0, 1, 5],
            TaskSpace::Position => &[0, 1, 2],
            TaskSpace::Spatial => &[0, 1, 2, 3, 4, 5],
        }
    }

    pub fn order(self) -> usize {
        self.rows().len()
    }
}

/// Shape rigidly attached to a joint's moving frame, or to the chain root when
/// `joint` is absent.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkShape {
    #[serde(default)]
    pub joint: Option<usize>,
    pub shape: Shape,
}

/// Mobile base carrying the arm: its body shapes, where the arm is mounted,
/// and an optional vertical spine lifting the mount.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MobileBase {
    #[serde(default)]
    pub shapes: Vec<Shape>,
    #[serde(default)]
    pub mount: Pose,
    /// `[min, max]` spine height in meters.
    #[serde(default)]
    pub spine: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KinematicChain {
    pub name: String,
    pub task_space: TaskSpace,
    pub joints: Vec<Joint>,
    #[serde(default)]
    pub link_shapes: Vec<LinkShape>,
    #[serde(default)]
    pub ee_offset: Pose,
    #[serde(default)]
    pub base: MobileBase,
}

/// Joint values in radians or meters, one per joint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointVector(pub Vec<f64>);

impl JointVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for JointVector {
    fn from(v: Vec<f64>) -> Self {
        JointVector(v)
    }
}

/// Where the arm sits in the world: the mobile base frame and the chain root.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmPlacement {
    pub base: Pose,
    pub root: Pose,
}

impl ArmPlacement {
    /// Chain root placed directly, with base and root coinciding.
    pub fn fixed(root: Pose) -> Self {
        ArmPlacement { base: root, root }
    }
}

impl KinematicChain {
    pub fn from_json(text: &str) -> Result<Self> {
        let chain: KinematicChain = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: "<chain>".into(),
            source: e,
        })?;
        chain.validate()?;
        Ok(chain)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let chain: KinematicChain = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            source: e,
        })?;
        chain.validate()?;
        Ok(chain)
    }

    pub fn validate(&self) -> Result<()> {
        if self.joints.is_empty() {
            return Err(Error::Invalid(format!("chain `{}` has no joints", self.name)));
        }
        for j in &self.joints {
            if (j.axis.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::Invalid(format!("joint `{}` axis is not unit length", j.name)));
            }
            match (j.kind, j.limits) {
                (JointKind::Continuous, Some(_)) => {
                    return Err(Error::Invalid(format!("continuous joint `{}` has limits", j.name)))
                }
                (JointKind::Continuous, None) => {}
                (_, None) => {
                    return Err(Error::Invalid(format!("joint `{}` needs limits", j.name)))
                }
                (_, Some([lo, hi])) if !(lo < hi) => {
                    return Err(Error::Invalid(format!("joint `{}` has q_min >= q_max", j.name)))
                }
                _ => {}
            }
        }
        for ls in &self.link_shapes {
            if let Some(i) = ls.joint {
                if i >= self.joints.len() {
                    return Err(Error::Invalid(format!("link shape refers to joint {i}")));
                }
            }
            ls.shape.validate()?;
        }
        for s in &self.base.shapes {
            s.validate()?;
        }
        if let Some([lo, hi]) = self.base.spine {
            if !(lo <= hi) {
                return Err(Error::Invalid("spine range is inverted".into()));
            }
        }
        Ok(())
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn order(&self) -> usize {
        self.task_space.order()
    }

    /// World placement of the arm for a mobile-base pose and spine height.
    pub fn placement(&self, base: Pose, spine: f64) -> ArmPlacement {
        let lift = Pose::from_translation(0.0, 0.0, spine);
        ArmPlacement {
            base,
            root: base.compose(&lift).compose(&self.base.mount),
        }
    }

    fn check_dim(&self, q: &JointVector) -> Result<()> {
        if q.len() != self.dof() {
            return Err(Error::Dimension {
                expected: self.dof(),
                actual: q.len(),
            });
        }
        Ok(())
    }

    /// Fills `frames` with each joint's anchor (before motion) followed by each
    /// joint's frame after motion; returns the end-effector pose.
    fn joint_frames(&self, root: &Pose, q: &[f64], frames: &mut Vec<Pose>) -> Pose {
        let n = self.dof();
        frames.clear();
        frames.resize(2 * n, Pose::identity());
        let mut t = *root;
        for (i, (j, &qi)) in self.joints.iter().zip(q).enumerate() {
            let anchor = t.compose(&j.origin);
            frames[i] = anchor;
            t = anchor.compose(&j.motion(qi));
            frames[n + i] = t;
        }
        t.compose(&self.ee_offset)
    }

    /// End-effector pose in the chain root frame.
    pub fn forward_kinematics(&self, q: &JointVector) -> Result<Pose> {
        self.check_dim(q)?;
        Ok(self.fk_from(&Pose::identity(), q.as_slice()))
    }

    fn fk_from(&self, root: &Pose, q: &[f64]) -> Pose {
        let mut t = *root;
        for (j, &qi) in self.joints.iter().zip(q) {
            t = t.compose(&j.origin).compose(&j.motion(qi));
        }
        t.compose(&self.ee_offset)
    }

    /// Full 6 x n geometric Jacobian at the end effector, expressed in the
    /// frame of `root`'s parent, plus the end-effector pose.
    fn full_jacobian(&self, root: &Pose, q: &[f64], frames: &mut Vec<Pose>) -> (DMatrix<f64>, Pose) {
        let ee = self.joint_frames(root, q, frames);
        let n = self.dof();
        let pe = ee.position();
        let mut jac = DMatrix::zeros(6, n);
        for (i, j) in self.joints.iter().enumerate() {
            let anchor = &frames[i];
            let z = anchor.transform_vector(&j.axis);
            let col: Vector6<f64> = match j.kind {
                JointKind::Prismatic => Vector6::new(z.x, z.y, z.z, 0.0, 0.0, 0.0),
                _ => {
                    let v = z.cross(&(pe - anchor.position()));
                    Vector6::new(v.x, v.y, v.z, z.x, z.y, z.z)
                }
            };
            jac.set_column(i, &col);
        }
        (jac, ee)
    }

    /// Geometric Jacobian in the chain root frame, restricted to the task rows.
    pub fn jacobian(&self, q: &JointVector) -> Result<DMatrix<f64>> {
        self.check_dim(q)?;
        let mut frames = Vec::new();
        let (full, _) = self.full_jacobian(&Pose::identity(), q.as_slice(), &mut frames);
        Ok(select_rows(&full, self.task_space.rows()))
    }

    /// Upper bound on the distance from the first joint's anchor to the end
    /// effector over the whole joint space.
    pub fn reach(&self) -> f64 {
        let mut r = self.ee_offset.position().norm();
        for (i, j) in self.joints.iter().enumerate() {
            if i > 0 {
                r += j.origin.position().norm();
            }
            if j.kind == JointKind::Prismatic {
                let (lo, hi) = j.range();
                r += lo.abs().max(hi.abs());
            }
        }
        r
    }

    /// World position of the first joint's anchor.
    pub fn shoulder(&self, root: &Pose) -> Vector3<f64> {
        root.compose(&self.joints[0].origin).position()
    }

    /// Link shapes placed for joint values `q`.
    pub fn placed_links(&self, placement: &ArmPlacement, q: &[f64]) -> Vec<(Option<usize>, PlacedShape)> {
        let mut frames = Vec::new();
        self.joint_frames(&placement.root, q, &mut frames);
        let n = self.dof();
        self.link_shapes
            .iter()
            .map(|ls| {
                let parent = match ls.joint {
                    Some(i) => frames[n + i],
                    None => placement.root,
                };
                (ls.joint, ls.shape.place(&parent))
            })
            .collect()
    }

    pub fn placed_base(&self, placement: &ArmPlacement) -> Vec<PlacedShape> {
        self.base.shapes.iter().map(|s| s.place(&placement.base)).collect()
    }

    /// True if the arm at `q` touches itself, its base, or the world. Link
    /// pairs on adjacent joints are skipped; the base counts as index -1.
    pub fn arm_collides(&self, placement: &ArmPlacement, q: &[f64], world: &CollisionWorld) -> bool {
        let links = self.placed_links(placement, q);
        if links.iter().any(|(_, s)| world.collides(s)) {
            return true;
        }
        let index = |j: Option<usize>| j.map_or(-1, |i| i as i64);
        for (a, (ja, sa)) in links.iter().enumerate() {
            for (jb, sb) in links.iter().skip(a + 1) {
                if (index(*ja) - index(*jb)).abs() >= 2 && sa.collides(sb) {
                    return true;
                }
            }
        }
        let base = self.placed_base(placement);
        for (j, s) in &links {
            if index(*j) + 1 >= 2 && base.iter().any(|b| b.collides(s)) {
                return true;
            }
        }
        false
    }

    fn clamp_into_range(&self, q: &mut [f64]) {
        for (qi, j) in q.iter_mut().zip(&self.joints) {
            if j.is_bounded() {
                let (lo, hi) = j.range();
                *qi = qi.clamp(lo, hi);
            } else {
                *qi = wrap_angle(*qi);
            }
        }
    }

    /// Joint-space L-infinity distance; continuous joints use the wrapped difference.
    pub fn joint_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .zip(&self.joints)
            .map(|((x, y), j)| {
                if j.is_bounded() {
                    (x - y).abs()
                } else {
                    wrap_angle(x - y).abs()
                }
            })
            .fold(0.0, f64::max)
    }
}

pub(crate) fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |r, c| m[(rows[r], c)])
}

fn wrap_angle(a: f64) -> f64 {
    let mut w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IkParams {
    pub damping: f64,
    pub max_iterations: usize,
    pub restarts: usize,
    /// L-infinity joint distance below which two solutions are the same.
    pub dedup: f64,
    pub position_tolerance: f64,
    pub orientation_tolerance: f64,
    /// Largest joint change per iteration.
    pub max_step: f64,
    pub seed: u64,
}

impl Default for IkParams {
    fn default() -> Self {
        IkParams {
            damping: 0.05,
            max_iterations: 200,
            restarts: 20,
            dedup: 0.05,
            position_tolerance: 1e-4,
            orientation_tolerance: 1e-3,
            max_step: 0.5,
            seed: 0,
        }
    }
}

/// Collision-free IK solutions for one goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IkSolutionSet {
    pub goal: Pose,
    pub solutions: Vec<JointVector>,
    /// Converged solutions discarded because they collided.
    pub rejected: usize,
}

impl IkSolutionSet {
    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }

    pub fn len(&self) -> usize {
        self.solutions.len()
    }
}

/// Runs seeded DLS restarts for one goal. Restart 0 starts from the joint-range
/// midpoint, later restarts from uniform draws of a fixed seeded stream, so the
/// k-th restart is identical whether or not earlier ones are skipped.
pub struct IkRunner<'a> {
    chain: &'a KinematicChain,
    root: Pose,
    goal: Pose,
    params: IkParams,
    rng: ChaCha8Rng,
    next: usize,
    hopeless: bool,
    mask: Vector6<f64>,
    anchors: Vec<(Vector3<f64>, Vector3<f64>)>,
    cols: Vec<Vector6<f64>>,
    dq: Vec<f64>,
}

impl<'a> IkRunner<'a> {
    pub fn new(chain: &'a KinematicChain, root: Pose, goal: Pose, params: IkParams) -> Self {
        let hopeless = {
            let rel = goal.position() - chain.shoulder(&root);
            let rows = chain.task_space.rows();
            let dist2: f64 = (0..3).filter(|i| rows.contains(i)).map(|i| rel[i] * rel[i]).sum();
            dist2.sqrt() > chain.reach() + params.position_tolerance
        };
        IkRunner {
            chain,
            root,
            goal,
            params,
            rng: ChaCha8Rng::seed_from_u64(params.seed),
            next: 0,
            hopeless,
            mask: Vector6::from_fn(|r, _| if chain.task_space.rows().contains(&r) { 1.0 } else { 0.0 }),
            anchors: vec![(Vector3::zeros(), Vector3::zeros()); chain.dof()],
            cols: vec![Vector6::zeros(); chain.dof()],
            dq: vec![0.0; chain.dof()],
        }
    }

    fn seed_vector(&mut self) -> Vec<f64> {
        let first = self.next == 0;
        self.chain
            .joints
            .iter()
            .map(|j| {
                let (lo, hi) = j.range();
                if first {
                    if j.is_bounded() {
                        0.5 * (lo + hi)
                    } else {
                        0.0
                    }
                } else {
                    self.rng.gen_range(lo..=hi)
                }
            })
            .collect()
    }

    /// Error twist from `ee` to the goal with non-task rows zeroed, plus the
    /// task-row position and orientation error norms.
    fn error(&self, ee: &Isometry3<f64>) -> (Vector6<f64>, f64, f64) {
        let dp = self.goal.0.translation.vector - ee.translation.vector;
        let dw = (self.goal.0.rotation * ee.rotation.inverse()).scaled_axis();
        let e = Vector6::new(dp.x, dp.y, dp.z, dw.x, dw.y, dw.z).component_mul(&self.mask);
        let pos = e.fixed_rows::<3>(0).norm();
        let ori = e.fixed_rows::<3>(3).norm();
        (e, pos, ori)
    }

    /// Run the next restart; `None` once all restarts are used, `Some(None)`
    /// if this restart failed to converge.
    pub fn next_restart(&mut self) -> Option<Option<Vec<f64>>> {
        if self.next >= self.params.restarts {
            return None;
        }
        let mut q = self.seed_vector();
        self.next += 1;
        if self.hopeless {
            return Some(None);
        }
        Some(self.descend(&mut q).then_some(q))
    }

    /// Masked Jacobian columns at `q`; returns the end-effector pose.
    fn columns(&mut self, q: &[f64]) -> Isometry3<f64> {
        let chain = self.chain;
        let mut t = self.root.0;
        for (i, (j, &qi)) in chain.joints.iter().zip(q).enumerate() {
            t *= j.origin.0;
            self.anchors[i] = (t.rotation * j.axis.into_inner(), t.translation.vector);
            t *= j.motion(qi).0;
        }
        let ee = t * chain.ee_offset.0;
        let pe = ee.translation.vector;
        for (i, j) in chain.joints.iter().enumerate() {
            let (z, p) = self.anchors[i];
            let col = match j.kind {
                JointKind::Prismatic => Vector6::new(z.x, z.y, z.z, 0.0, 0.0, 0.0),
                _ => {
                    let v = z.cross(&(pe - p));
                    Vector6::new(v.x, v.y, v.z, z.x, z.y, z.z)
                }
            };
            self.cols[i] = col.component_mul(&self.mask);
        }
        ee
    }

    fn descend(&mut self, q: &mut Vec<f64>) -> bool {
        let p = self.params;
        let lambda2 = p.damping * p.damping;
        let n = self.chain.dof();
        let mut best = f64::INFINITY;
        let mut best_at = 0;
        for iter in 0..p.max_iterations {
            let ee = self.columns(q);
            let (e, pos_err, ori_err) = self.error(&ee);
            if pos_err < p.position_tolerance && ori_err < p.orientation_tolerance {
                return true;
            }
            let err = pos_err + 0.3 * ori_err;
            if err < 0.99 * best {
                best = err;
                best_at = iter;
            } else if iter - best_at > 12 {
                return false;
            }
            // Rows outside the task space get unit diagonal and zero error, so
            // their component of the solve is zero.
            let mut a = Matrix6::from_diagonal(&self.mask.map(|m| if m > 0.0 { lambda2 } else { 1.0 }));
            for c in &self.cols[..n] {
                a.syger(1.0, c, c, 1.0);
            }
            let Some(chol) = a.cholesky() else {
                return false;
            };
            let y = chol.solve(&e);
            let mut largest: f64 = 0.0;
            for (i, d) in self.dq[..n].iter_mut().enumerate() {
                *d = self.cols[i].dot(&y);
                largest = largest.max(d.abs());
            }
            let scale = if largest > p.max_step { p.max_step / largest } else { 1.0 };
            for (qi, d) in q.iter_mut().zip(&self.dq[..n]) {
                *qi += d * scale;
            }
            self.chain.clamp_into_range(q);
        }
        let ee = self.columns(q);
        let (_, pos_err, ori_err) = self.error(&ee);
        pos_err < p.position_tolerance && ori_err < p.orientation_tolerance
    }
}

/// Converged joint vectors for every restart that reached the goal, in restart order.
pub fn converged_solutions(
    chain: &KinematicChain,
    root: &Pose,
    goal: &Pose,
    params: &IkParams,
) -> Vec<Vec<f64>> {
    let mut runner = IkRunner::new(chain, *root, *goal, *params);
    let mut out = Vec::new();
    while let Some(result) = runner.next_restart() {
        if let Some(q) = result {
            out.push(q);
        }
    }
    out
}

/// Drop colliding solutions, then merge near-duplicates (keeping the first).
pub fn filter_solutions(
    chain: &KinematicChain,
    placement: &ArmPlacement,
    goal: &Pose,
    raw: &[Vec<f64>],
    world: &CollisionWorld,
    params: &IkParams,
) -> IkSolutionSet {
    let mut solutions: Vec<JointVector> = Vec::new();
    let mut rejected = 0;
    for q in raw {
        if chain.arm_collides(placement, q, world) {
            rejected += 1;
            continue;
        }
        if solutions
            .iter()
            .all(|s| chain.joint_distance(&s.0, q) > params.dedup)
        {
            solutions.push(JointVector(q.clone()));
        }
    }
    IkSolutionSet {
        goal: *goal,
        solutions,
        rejected,
    }
}

/// Collision-free, deduplicated IK solutions for `goal` from `placement`.
pub fn solve_ik(
    chain: &KinematicChain,
    placement: &ArmPlacement,
    goal: &Pose,
    world: &CollisionWorld,
    params: &IkParams,
) -> IkSolutionSet {
    let raw = converged_solutions(chain, &placement.root, goal, params);
    filter_solutions(chain, placement, goal, &raw, world, params)
}

/// Whether any restart yields a collision-free solution; stops at the first.
/// Agrees exactly with `!solve_ik(..).is_empty()`.
pub fn ik_feasible(
    chain: &KinematicChain,
    placement: &ArmPlacement,
    goal: &Pose,
    world: &CollisionWorld,
    params: &IkParams,
) -> bool {
    let mut runner = IkRunner::new(chain, placement.root, *goal, *params);
    while let Some(result) = runner.next_restart() {
        if let Some(q) = result {
            if !chain.arm_collides(placement, &q, world) {
                return true;
            }
        }
    }
    false
}
