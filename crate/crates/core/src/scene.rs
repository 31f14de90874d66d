//! Declarative task, environment, and user models.
//!
//! A scene is a tree of named frames hanging off `world`. Each frame has a
//! fixed origin relative to its parent and an optional list of motions, each
//! driven by one scene parameter:
//!
//! * controllable DoFs (e.g. bed height), chosen per robot configuration;
//! * uncontrollable parameters `h` (e.g. where the person lies on the bed);
//! * free parameters `b` of the user (e.g. neck rotation), which the scorer
//!   maximizes over.
//!
//! User frames driven by controllable DoFs encode the environment-driven
//! posture rules (the torso follows the backrest); the user's root frame driven
//! by `h` encodes the pose on the support surface.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::{Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CollisionWorld, Pose, Shape};
use crate::kinematics::{ArmPlacement, KinematicChain};

pub const WORLD_FRAME: &str = "world";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionKind {
    Translate,
    Rotate,
}

/// Frame motion of `scale * value(param) + offset` along or about `axis`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Motion {
    pub param: String,
    pub kind: MotionKind,
    pub axis: Unit<Vector3<f64>>,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub offset: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameDecl {
    pub name: String,
    #[serde(default = "world_name")]
    pub parent: String,
    #[serde(default)]
    pub origin: Pose,
    #[serde(default)]
    pub motions: Vec<Motion>,
}

fn world_name() -> String {
    WORLD_FRAME.to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectDecl {
    pub name: String,
    #[serde(default = "world_name")]
    pub frame: String,
    pub shapes: Vec<Shape>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DofDecl {
    pub name: String,
    pub min: f64,
    pub max: f64,
    #[serde(default)]
    pub default: Option<f64>,
}

impl DofDecl {
    pub fn default_value(&self) -> f64 {
        self.default.unwrap_or(0.5 * (self.min + self.max))
    }
}

/// Object whose DoFs the robot may command as part of its configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllableObject {
    pub name: String,
    pub dofs: Vec<DofDecl>,
    /// Shapes, each listed with the frame it is attached to.
    #[serde(default)]
    pub parts: Vec<ObjectDecl>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncontrollableParam {
    pub name: String,
    pub min: f64,
    pub max: f64,
    #[serde(default)]
    pub nominal: Option<f64>,
    /// Points per dimension when sampling `h` on a uniform grid.
    #[serde(default = "three")]
    pub grid: usize,
}

fn three() -> usize {
    3
}

impl UncontrollableParam {
    pub fn nominal_value(&self) -> f64 {
        self.nominal.unwrap_or(0.5 * (self.min + self.max))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreeParam {
    pub name: String,
    pub min: f64,
    pub max: f64,
    /// Number of evenly spaced values searched, endpoints included.
    pub steps: usize,
}

impl FreeParam {
    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![0.5 * (self.min + self.max)];
        }
        (0..self.steps)
            .map(|i| self.min + (self.max - self.min) * i as f64 / (self.steps - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserModel {
    /// Articulated body frames; the first is the root that pose error and
    /// `h` act on.
    pub frames: Vec<FrameDecl>,
    /// Frame whose vertical axis is the pivot for rotational pose error.
    pub pivot_frame: String,
    pub segments: Vec<ObjectDecl>,
    #[serde(default)]
    pub free_params: Vec<FreeParam>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseBounds {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub theta: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneModel {
    pub name: String,
    /// Safety inflation applied to environment and user shapes when planning.
    #[serde(default = "default_margin")]
    pub margin: f64,
    pub base_bounds: BaseBounds,
    /// Base poses `[x, y, theta]` used to initialize searches.
    pub initial_bases: Vec<[f64; 3]>,
    #[serde(default)]
    pub frames: Vec<FrameDecl>,
    #[serde(default)]
    pub fixed_objects: Vec<ObjectDecl>,
    #[serde(default)]
    pub controllable_objects: Vec<ControllableObject>,
    #[serde(default)]
    pub uncontrollable_params: Vec<UncontrollableParam>,
    /// Objects whose pose depends only on `h`.
    #[serde(default)]
    pub uncontrollable_objects: Vec<ObjectDecl>,
    #[serde(default)]
    pub user: Option<UserModel>,
    #[serde(skip)]
    index: SceneIndex,
}

fn default_margin() -> f64 {
    0.03
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ParamRef {
    Aux(usize),
    H(usize),
    B(usize),
}

#[derive(Debug, Clone)]
struct CompiledMotion {
    param: ParamRef,
    kind: MotionKind,
    axis: Unit<Vector3<f64>>,
    scale: f64,
    offset: f64,
}

#[derive(Debug, Clone)]
struct CompiledFrame {
    parent: Option<usize>,
    origin: Pose,
    motions: Vec<CompiledMotion>,
    is_user: bool,
}

#[derive(Debug, Clone, Default)]
struct SceneIndex {
    frames: Vec<CompiledFrame>,
    names: HashMap<String, usize>,
    /// (object name, frame index or world, shape, is user) for every shape.
    shapes: Vec<(String, Option<usize>, Shape)>,
    user_root: Option<usize>,
    pivot: Option<usize>,
}

/// Perturbation of the user's pose: translation in the world xy plane plus a
/// rotation about the vertical axis through the pivot frame.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UserOffset {
    pub dx: f64,
    pub dy: f64,
    pub dtheta: f64,
}

/// Values for every scene parameter.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SceneState {
    /// Controllable DoFs, in declaration order across controllable objects.
    pub controls: Vec<f64>,
    pub h: Vec<f64>,
    pub b: Vec<f64>,
    pub user_offset: UserOffset,
}

/// Resolved world poses of every frame for one scene state.
#[derive(Debug, Clone)]
pub struct FramePoses {
    poses: Vec<Pose>,
}

impl SceneModel {
    pub fn from_json(text: &str) -> Result<Self> {
        Self::parse(text, Path::new("<scene>"))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text, path)
    }

    fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut scene: SceneModel = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            source: e,
        })?;
        scene.prepare()?;
        Ok(scene)
    }

    /// Validate invariants and build the frame index. Loaders call this; it
    /// must be called again after editing a scene in code.
    pub fn prepare(&mut self) -> Result<()> {
        if !(self.margin >= 0.0) {
            return Err(Error::Invalid("scene margin must be non-negative".into()));
        }
        let bb = &self.base_bounds;
        for (name, [lo, hi]) in [("x", bb.x), ("y", bb.y), ("theta", bb.theta)] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Invalid(format!("base bound `{name}` must be finite with min < max")));
            }
        }
        if self.initial_bases.is_empty() {
            return Err(Error::Invalid("scene needs at least one initial base pose".into()));
        }

        let mut params: HashMap<String, ParamRef> = HashMap::new();
        let mut declare = |name: &str, r: ParamRef, lo: f64, hi: f64| -> Result<()> {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::Invalid(format!("parameter `{name}` needs finite bounds")));
            }
            if params.insert(name.to_string(), r).is_some() {
                return Err(Error::Invalid(format!("parameter `{name}` declared twice")));
            }
            Ok(())
        };
        let mut k = 0;
        for obj in &self.controllable_objects {
            for d in &obj.dofs {
                declare(&d.name, ParamRef::Aux(k), d.min, d.max)?;
                let v = d.default_value();
                if v < d.min || v > d.max {
                    return Err(Error::Invalid(format!("default of `{}` is out of range", d.name)));
                }
                k += 1;
            }
        }
        for (i, p) in self.uncontrollable_params.iter().enumerate() {
            declare(&p.name, ParamRef::H(i), p.min, p.max)?;
            if p.grid == 0 {
                return Err(Error::Invalid(format!("`{}` grid must be at least 1", p.name)));
            }
        }
        if let Some(user) = &self.user {
            for (i, p) in user.free_params.iter().enumerate() {
                declare(&p.name, ParamRef::B(i), p.min, p.max)?;
                if p.steps == 0 {
                    return Err(Error::Invalid(format!("free parameter `{}` needs a discretization", p.name)));
                }
            }
        }

        let mut index = SceneIndex::default();
        let user_frames = self.user.as_ref().map(|u| u.frames.as_slice()).unwrap_or(&[]);
        let all = self
            .frames
            .iter()
            .map(|f| (f, false))
            .chain(user_frames.iter().map(|f| (f, true)));
        for (f, is_user) in all {
            if f.name == WORLD_FRAME || index.names.contains_key(&f.name) {
                return Err(Error::Invalid(format!("frame `{}` declared twice", f.name)));
            }
            let parent = if f.parent == WORLD_FRAME {
                None
            } else {
                Some(*index.names.get(&f.parent).ok_or_else(|| {
                    Error::Invalid(format!("frame `{}` has undeclared parent `{}`", f.name, f.parent))
                })?)
            };
            let motions = f
                .motions
                .iter()
                .map(|m| {
                    let param = *params.get(&m.param).ok_or_else(|| {
                        Error::Invalid(format!("frame `{}` uses unknown parameter `{}`", f.name, m.param))
                    })?;
                    Ok(CompiledMotion {
                        param,
                        kind: m.kind,
                        axis: m.axis,
                        scale: m.scale,
                        offset: m.offset,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            index.names.insert(f.name.clone(), index.frames.len());
            index.frames.push(CompiledFrame {
                parent,
                origin: f.origin,
                motions,
                is_user,
            });
        }

        let frame_of = |index: &SceneIndex, name: &str| -> Result<Option<usize>> {
            if name == WORLD_FRAME {
                Ok(None)
            } else {
                index
                    .names
                    .get(name)
                    .map(|&i| Some(i))
                    .ok_or_else(|| Error::UnknownFrame(name.to_string()))
            }
        };
        let mut shapes = Vec::new();
        let env = self
            .fixed_objects
            .iter()
            .chain(self.controllable_objects.iter().flat_map(|o| o.parts.iter()))
            .chain(self.uncontrollable_objects.iter());
        for obj in env {
            let f = frame_of(&index, &obj.frame)?;
            for s in &obj.shapes {
                s.validate()?;
                shapes.push((obj.name.clone(), f, *s));
            }
        }
        if let Some(user) = &self.user {
            if user.frames.is_empty() {
                return Err(Error::Invalid("user model needs at least a root frame".into()));
            }
            for seg in &user.segments {
                let f = frame_of(&index, &seg.frame)?;
                for s in &seg.shapes {
                    s.validate()?;
                    shapes.push((seg.name.clone(), f, *s));
                }
            }
            index.user_root = Some(index.names[&user.frames[0].name]);
            index.pivot = frame_of(&index, &user.pivot_frame)?;
        }
        index.shapes = shapes;
        self.index = index;
        Ok(())
    }

    pub fn controllable_dofs(&self) -> impl Iterator<Item = &DofDecl> {
        self.controllable_objects.iter().flat_map(|o| o.dofs.iter())
    }

    pub fn free_params(&self) -> &[FreeParam] {
        self.user.as_ref().map(|u| u.free_params.as_slice()).unwrap_or(&[])
    }

    pub fn has_frame(&self, name: &str) -> bool {
        name == WORLD_FRAME || self.index.names.contains_key(name)
    }

    pub fn nominal_h(&self) -> Vec<f64> {
        self.uncontrollable_params.iter().map(|p| p.nominal_value()).collect()
    }

    /// Cartesian product of every free parameter's discretization; a single
    /// empty assignment when there are none.
    pub fn free_param_grid(&self) -> Vec<Vec<f64>> {
        let mut grid = vec![Vec::new()];
        for p in self.free_params() {
            let vals = p.values();
            grid = grid
                .into_iter()
                .flat_map(|prefix| {
                    vals.iter().map(move |&v| {
                        let mut next = prefix.clone();
                        next.push(v);
                        next
                    })
                })
                .collect();
        }
        grid
    }

    /// Uniform grid over the declared `h` ranges using each parameter's `grid` count.
    pub fn h_grid(&self) -> Vec<Vec<f64>> {
        let mut grid = vec![Vec::new()];
        for p in &self.uncontrollable_params {
            let vals: Vec<f64> = if p.grid == 1 {
                vec![p.nominal_value()]
            } else {
                (0..p.grid)
                    .map(|i| p.min + (p.max - p.min) * i as f64 / (p.grid - 1) as f64)
                    .collect()
            };
            grid = grid
                .into_iter()
                .flat_map(|prefix| {
                    vals.iter().map(move |&v| {
                        let mut next = prefix.clone();
                        next.push(v);
                        next
                    })
                })
                .collect();
        }
        grid
    }

    pub fn check_h(&self, h: &[f64]) -> Result<()> {
        if h.len() != self.uncontrollable_params.len() {
            return Err(Error::Dimension {
                expected: self.uncontrollable_params.len(),
                actual: h.len(),
            });
        }
        for (p, &v) in self.uncontrollable_params.iter().zip(h) {
            check_range(&p.name, v, p.min, p.max)?;
        }
        Ok(())
    }

    fn check_state(&self, state: &SceneState) -> Result<()> {
        let dofs: Vec<&DofDecl> = self.controllable_dofs().collect();
        if state.controls.len() != dofs.len() {
            return Err(Error::Dimension {
                expected: dofs.len(),
                actual: state.controls.len(),
            });
        }
        for (d, &v) in dofs.iter().zip(&state.controls) {
            check_range(&d.name, v, d.min, d.max)?;
        }
        let free = self.free_params();
        if state.b.len() != free.len() {
            return Err(Error::Dimension {
                expected: free.len(),
                actual: state.b.len(),
            });
        }
        for (p, &v) in free.iter().zip(&state.b) {
            check_range(&p.name, v, p.min, p.max)?;
        }
        if state.h.len() != self.uncontrollable_params.len() {
            return Err(Error::Dimension {
                expected: self.uncontrollable_params.len(),
                actual: state.h.len(),
            });
        }
        Ok(())
    }

    /// World pose of every frame. `h` is not range-checked here: pose error
    /// may legitimately push it past the declared sampling range.
    pub fn frame_poses(&self, state: &SceneState) -> Result<FramePoses> {
        self.check_state(state)?;
        let value = |r: ParamRef| match r {
            ParamRef::Aux(i) => state.controls[i],
            ParamRef::H(i) => state.h[i],
            ParamRef::B(i) => state.b[i],
        };
        let frames = &self.index.frames;
        let mut poses: Vec<Pose> = Vec::with_capacity(frames.len());
        for f in frames {
            let parent = f.parent.map_or(Pose::identity(), |p| poses[p]);
            let mut pose = parent.compose(&f.origin);
            for m in &f.motions {
                let v = m.scale * value(m.param) + m.offset;
                let motion = match m.kind {
                    MotionKind::Translate => {
                        let t = m.axis.into_inner() * v;
                        Pose::from_translation(t.x, t.y, t.z)
                    }
                    MotionKind::Rotate => {
                        Pose::from_parts(Vector3::zeros(), UnitQuaternion::from_axis_angle(&m.axis, v))
                    }
                };
                pose = pose.compose(&motion);
            }
            poses.push(pose);
        }

        let off = state.user_offset;
        if off != UserOffset::default() {
            if let Some(root) = self.index.user_root {
                let pivot = self.index.pivot.map_or(Vector3::zeros(), |p| poses[p].position());
                let perturb = Pose::from_translation(off.dx + pivot.x, off.dy + pivot.y, 0.0)
                    .compose(&Pose::rot_z(off.dtheta))
                    .compose(&Pose::from_translation(-pivot.x, -pivot.y, 0.0));
                // User frames are declared after environment frames, and user
                // children only hang off user frames, so premultiplying every
                // frame in the user subtree moves it rigidly.
                for (i, f) in frames.iter().enumerate() {
                    if f.is_user && (i == root || self.in_subtree(i, root)) {
                        poses[i] = perturb.compose(&poses[i]);
                    }
                }
            }
        }
        Ok(FramePoses { poses })
    }

    fn in_subtree(&self, mut i: usize, root: usize) -> bool {
        while let Some(p) = self.index.frames[i].parent {
            if p == root {
                return true;
            }
            i = p;
        }
        false
    }

    pub fn frame_pose(&self, poses: &FramePoses, name: &str) -> Result<Pose> {
        if name == WORLD_FRAME {
            return Ok(Pose::identity());
        }
        let i = self
            .index
            .names
            .get(name)
            .ok_or_else(|| Error::UnknownFrame(name.to_string()))?;
        Ok(poses.poses[*i])
    }

    /// Every environment and user shape placed for `state`, inflated by `margin`.
    pub fn instantiate_world(&self, state: &SceneState, margin: f64) -> Result<CollisionWorld> {
        let poses = self.frame_poses(state)?;
        Ok(self.world_from_poses(&poses, margin))
    }

    pub fn world_from_poses(&self, poses: &FramePoses, margin: f64) -> CollisionWorld {
        let mut world = CollisionWorld::new();
        for (owner, frame, shape) in &self.index.shapes {
            let parent = frame.map_or(Pose::identity(), |f| poses.poses[f]);
            world.push(owner.clone(), shape.with_margin(shape.margin + margin).place(&parent));
        }
        world
    }

    /// Diagonal of the base-bounds rectangle, used to normalize distances.
    pub fn extent(&self) -> f64 {
        let b = &self.base_bounds;
        ((b.x[1] - b.x[0]).powi(2) + (b.y[1] - b.y[0]).powi(2)).sqrt()
    }
}

fn check_range(name: &str, v: f64, lo: f64, hi: f64) -> Result<()> {
    if !(v >= lo && v <= hi) {
        return Err(Error::OutOfRange {
            name: name.to_string(),
            value: v,
            min: lo,
            max: hi,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalDecl {
    pub frame: String,
    pub pose: Pose,
}

/// Named set of end-effector goal poses, each relative to a scene frame.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskModel {
    pub name: String,
    pub goals: Vec<GoalDecl>,
}

impl TaskModel {
    pub fn from_json(text: &str) -> Result<Self> {
        Self::parse(text, Path::new("<task>"))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text, path)
    }

    fn parse(text: &str, path: &Path) -> Result<Self> {
        let task: TaskModel = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            source: e,
        })?;
        if task.goals.is_empty() {
            return Err(Error::Invalid(format!("task `{}` has no goals", task.name)));
        }
        Ok(task)
    }

    pub fn len(&self) -> usize {
        self.goals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.goals.is_empty()
    }

    /// Every goal frame must exist in `scene`.
    pub fn check_frames(&self, scene: &SceneModel) -> Result<()> {
        for g in &self.goals {
            if !scene.has_frame(&g.frame) {
                return Err(Error::UnknownFrame(g.frame.clone()));
            }
        }
        Ok(())
    }
}

/// World-frame goal poses for `task` in `state`.
pub fn resolve_goals(task: &TaskModel, scene: &SceneModel, state: &SceneState) -> Result<Vec<Pose>> {
    let poses = scene.frame_poses(state)?;
    resolve_goals_with(task, scene, &poses)
}

pub fn resolve_goals_with(task: &TaskModel, scene: &SceneModel, poses: &FramePoses) -> Result<Vec<Pose>> {
    task.goals
        .iter()
        .map(|g| Ok(scene.frame_pose(poses, &g.frame)?.compose(&g.pose)))
        .collect()
}

/// One placement of the robot: planar base pose plus auxiliary DoFs
/// (robot spine height first when present, then the scene's controllable DoFs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotConfiguration {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    #[serde(default)]
    pub aux: Vec<f64>,
}

impl RobotConfiguration {
    pub fn base_pose(&self) -> Pose {
        Pose::planar(self.x, self.y, self.theta)
    }
}

/// Configurations used one after another; a goal counts if any member reaches it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigurationSet {
    pub configs: Vec<RobotConfiguration>,
}

impl ConfigurationSet {
    pub fn new(configs: Vec<RobotConfiguration>) -> Self {
        ConfigurationSet { configs }
    }

    pub fn single(config: RobotConfiguration) -> Self {
        ConfigurationSet { configs: vec![config] }
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn union(&self, other: &ConfigurationSet) -> ConfigurationSet {
        let mut configs = self.configs.clone();
        configs.extend(other.configs.iter().cloned());
        ConfigurationSet { configs }
    }
}

/// Maps flat search vectors to configurations and back, with bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigLayout {
    pub base: BaseBounds,
    pub spine: Option<[f64; 2]>,
    pub controls: Vec<DofDecl>,
}

impl ConfigLayout {
    pub fn new(scene: &SceneModel, chain: &KinematicChain) -> Self {
        ConfigLayout {
            base: scene.base_bounds,
            spine: chain.base.spine,
            controls: scene.controllable_dofs().cloned().collect(),
        }
    }

    pub fn aux_len(&self) -> usize {
        self.spine.is_some() as usize + self.controls.len()
    }

    pub fn dim(&self) -> usize {
        3 + self.aux_len()
    }

    pub fn aux_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        if self.spine.is_some() {
            names.push("spine".to_string());
        }
        names.extend(self.controls.iter().map(|d| d.name.clone()));
        names
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        let mut b = vec![
            (self.base.x[0], self.base.x[1]),
            (self.base.y[0], self.base.y[1]),
            (self.base.theta[0], self.base.theta[1]),
        ];
        if let Some([lo, hi]) = self.spine {
            b.push((lo, hi));
        }
        b.extend(self.controls.iter().map(|d| (d.min, d.max)));
        b
    }

    /// Default auxiliary values: spine at mid-range, controls at their defaults.
    pub fn default_aux(&self) -> Vec<f64> {
        let mut aux = Vec::new();
        if let Some([lo, hi]) = self.spine {
            aux.push(0.5 * (lo + hi));
        }
        aux.extend(self.controls.iter().map(|d| d.default_value()));
        aux
    }

    pub fn decode(&self, v: &[f64]) -> RobotConfiguration {
        RobotConfiguration {
            x: v[0],
            y: v[1],
            theta: v[2],
            aux: v[3..self.dim()].to_vec(),
        }
    }

    pub fn encode(&self, c: &RobotConfiguration) -> Vec<f64> {
        let mut v = vec![c.x, c.y, c.theta];
        v.extend_from_slice(&c.aux);
        v
    }

    pub fn decode_set(&self, v: &[f64]) -> ConfigurationSet {
        ConfigurationSet::new(v.chunks(self.dim()).map(|c| self.decode(c)).collect())
    }

    pub fn validate(&self, c: &RobotConfiguration) -> Result<()> {
        if c.aux.len() != self.aux_len() {
            return Err(Error::Dimension {
                expected: self.aux_len(),
                actual: c.aux.len(),
            });
        }
        let names = ["x", "y", "theta"]
            .iter()
            .map(|s| s.to_string())
            .chain(self.aux_names());
        for ((name, (lo, hi)), v) in names.zip(self.bounds()).zip(self.encode(c)) {
            check_range(&name, v, lo, hi)?;
        }
        Ok(())
    }

    pub fn spine(&self, c: &RobotConfiguration) -> f64 {
        if self.spine.is_some() {
            c.aux[0]
        } else {
            0.0
        }
    }

    /// The scene-controlled part of the auxiliary vector.
    pub fn controls<'c>(&self, c: &'c RobotConfiguration) -> &'c [f64] {
        &c.aux[self.spine.is_some() as usize..]
    }

    pub fn placement(&self, chain: &KinematicChain, c: &RobotConfiguration) -> ArmPlacement {
        chain.placement(c.base_pose(), self.spine(c))
    }
}
