//! Chains, scenes, and tasks shipped with the library.

use crate::error::Result;
use crate::kinematics::KinematicChain;
use crate::scene::{SceneModel, TaskModel};

pub const CHAINS: &[(&str, &str)] = &[
    ("planar2", include_str!("../data/chains/planar2.chain")),
    ("planar3", include_str!("../data/chains/planar3.chain")),
    ("arm7", include_str!("../data/chains/arm7.chain")),
];

pub const SCENES: &[(&str, &str)] = &[
    ("bed_room", include_str!("../data/scenes/bed_room.scene")),
    ("chair_room", include_str!("../data/scenes/chair_room.scene")),
    ("wall_split", include_str!("../data/scenes/wall_split.scene")),
];

pub const TASKS: &[(&str, &str)] = &[
    ("clean_arms", include_str!("../data/tasks/clean_arms.task")),
    ("scratch_left_upper_arm", include_str!("../data/tasks/scratch_left_upper_arm.task")),
    ("scratch_right_upper_arm", include_str!("../data/tasks/scratch_right_upper_arm.task")),
    ("clean_legs", include_str!("../data/tasks/clean_legs.task")),
    ("wipe_mouth", include_str!("../data/tasks/wipe_mouth.task")),
    ("shaving", include_str!("../data/tasks/shaving.task")),
    ("scratch_left_knee", include_str!("../data/tasks/scratch_left_knee.task")),
    ("scratch_right_knee", include_str!("../data/tasks/scratch_right_knee.task")),
    ("feeding", include_str!("../data/tasks/feeding.task")),
    ("split_goals", include_str!("../data/tasks/split_goals.task")),
];

/// The nine assistive tasks authored for the bed and chair scenes.
pub const CARE_TASKS: &[&str] = &[
    "clean_arms",
    "scratch_left_upper_arm",
    "scratch_right_upper_arm",
    "clean_legs",
    "wipe_mouth",
    "shaving",
    "scratch_left_knee",
    "scratch_right_knee",
    "feeding",
];

fn find<'a>(table: &'a [(&str, &str)], name: &str) -> Option<&'a str> {
    table.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

pub fn chain(name: &str) -> Option<Result<KinematicChain>> {
    find(CHAINS, name).map(KinematicChain::from_json)
}

pub fn scene(name: &str) -> Option<Result<SceneModel>> {
    find(SCENES, name).map(SceneModel::from_json)
}

pub fn task(name: &str) -> Option<Result<TaskModel>> {
    find(TASKS, name).map(TaskModel::from_json)
}
