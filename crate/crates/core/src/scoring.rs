//! Task-centric reachability, manipulability, and the placement objective.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dexterity::{jlwki_at, DexterityParams};
use crate::error::{Error, Result};
use crate::geometry::{CollisionWorld, Pose};
use crate::kinematics::{
    converged_solutions, filter_solutions, ik_feasible, ArmPlacement, IkParams, IkSolutionSet, JointVector,
    KinematicChain,
};
use crate::scene::{
    resolve_goals_with, ConfigLayout, ConfigurationSet, SceneModel, SceneState, TaskModel, UserOffset,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScoringParams {
    pub ik: IkParams,
    pub dexterity: DexterityParams,
    /// Weight of reachability in the objective.
    pub alpha: f64,
    /// Manipulability weight for a single configuration.
    pub beta: f64,
    /// Factor applied to the manipulability weight per extra configuration.
    pub beta_decay: f64,
}

impl Default for ScoringParams {
    fn default() -> Self {
        ScoringParams {
            ik: IkParams::default(),
            dexterity: DexterityParams::default(),
            alpha: 1.0,
            beta: 0.1,
            beta_decay: 0.95,
        }
    }
}

impl ScoringParams {
    /// Manipulability weight for a set of `n` configurations.
    pub fn beta_for(&self, n: usize) -> f64 {
        self.beta * self.beta_decay.powi(n.max(1) as i32 - 1)
    }
}

/// Best outcome for one goal across configurations and free parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalScore {
    pub reached: bool,
    /// Largest JLWKI over reaching solutions; 0 when unreached.
    pub dexterity: f64,
    pub config: Option<usize>,
    pub free_params: Option<Vec<f64>>,
    pub solution: Option<JointVector>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub cardinality: usize,
    pub reachability: f64,
    pub manipulability: f64,
    pub objective: f64,
    /// Whether the objective is the infeasibility heuristic.
    pub heuristic: bool,
    pub goals: Vec<GoalScore>,
}

/// What a score evaluation computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreMode {
    /// Reachability and manipulability.
    Full,
    /// Reachability only, via first-found collision-free IK.
    ReachOnly,
}

/// Conditions the goals are scored under.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conditions<'h> {
    pub h: &'h [f64],
    pub user_offset: UserOffset,
    /// Inflation of environment and user shapes.
    pub margin: f64,
}

/// Scores configuration sets for one chain, scene, and task.
#[derive(Debug, Clone)]
pub struct Scorer<'a> {
    pub chain: &'a KinematicChain,
    pub scene: &'a SceneModel,
    pub task: &'a TaskModel,
    pub layout: ConfigLayout,
    pub params: ScoringParams,
}

struct Instance {
    world: CollisionWorld,
    goals: Vec<Pose>,
    placement: ArmPlacement,
    base_blocked: bool,
}

impl<'a> Scorer<'a> {
    pub fn new(
        chain: &'a KinematicChain,
        scene: &'a SceneModel,
        task: &'a TaskModel,
        params: ScoringParams,
    ) -> Result<Self> {
        task.check_frames(scene)?;
        params.dexterity.validate()?;
        Ok(Scorer {
            chain,
            scene,
            task,
            layout: ConfigLayout::new(scene, chain),
            params,
        })
    }

    /// Planning conditions: the scene margin and no pose error.
    pub fn planning<'h>(&self, h: &'h [f64]) -> Conditions<'h> {
        Conditions {
            h,
            user_offset: UserOffset::default(),
            margin: self.scene.margin,
        }
    }

    fn check_set(&self, set: &ConfigurationSet) -> Result<()> {
        if set.is_empty() {
            return Err(Error::Invalid("configuration set is empty".into()));
        }
        for c in &set.configs {
            if c.aux.len() != self.layout.aux_len() {
                return Err(Error::Dimension {
                    expected: self.layout.aux_len(),
                    actual: c.aux.len(),
                });
            }
        }
        Ok(())
    }

    fn instances(&self, set: &ConfigurationSet, cond: &Conditions) -> Result<Vec<(usize, Vec<f64>, Instance)>> {
        let mut out = Vec::new();
        for (i, config) in set.configs.iter().enumerate() {
            let placement = self.layout.placement(self.chain, config);
            for b in self.scene.free_param_grid() {
                let state = SceneState {
                    controls: self.layout.controls(config).to_vec(),
                    h: cond.h.to_vec(),
                    b: b.clone(),
                    user_offset: cond.user_offset,
                };
                let poses = self.scene.frame_poses(&state)?;
                let world = self.scene.world_from_poses(&poses, cond.margin);
                let goals = resolve_goals_with(self.task, self.scene, &poses)?;
                let base_blocked = self.chain.placed_base(&placement).iter().any(|s| world.collides(s));
                out.push((
                    i,
                    b,
                    Instance {
                        world,
                        goals,
                        placement,
                        base_blocked,
                    },
                ));
            }
        }
        Ok(out)
    }

    /// Full score of `set` under `cond`.
    pub fn score(&self, set: &ConfigurationSet, cond: &Conditions, mode: ScoreMode) -> Result<ScoreReport> {
        self.check_set(set)?;
        let instances = self.instances(set, cond)?;
        let n_goals = self.task.len();
        let mut goals = vec![
            GoalScore {
                reached: false,
                dexterity: 0.0,
                config: None,
                free_params: None,
                solution: None,
            };
            n_goals
        ];
        // Converged IK depends only on the chain root and the goal, so it is
        // shared by every free-parameter value that leaves the goal in place.
        let mut cache: HashMap<(usize, [u64; 7]), Vec<Vec<f64>>> = HashMap::new();
        for (config, b, inst) in &instances {
            if inst.base_blocked {
                continue;
            }
            for (k, goal) in inst.goals.iter().enumerate() {
                match mode {
                    ScoreMode::ReachOnly => {
                        if goals[k].reached {
                            continue;
                        }
                        if ik_feasible(self.chain, &inst.placement, goal, &inst.world, &self.params.ik) {
                            goals[k].reached = true;
                            goals[k].config = Some(*config);
                            goals[k].free_params = Some(b.clone());
                        }
                    }
                    ScoreMode::Full => {
                        let raw = cache
                            .entry((*config, goal.key()))
                            .or_insert_with(|| {
                                converged_solutions(self.chain, &inst.placement.root, goal, &self.params.ik)
                            });
                        let set = filter_solutions(self.chain, &inst.placement, goal, raw, &inst.world, &self.params.ik);
                        for q in &set.solutions {
                            let f = jlwki_at(self.chain, q, &self.params.dexterity)?;
                            let g = &mut goals[k];
                            if !g.reached || f > g.dexterity {
                                *g = GoalScore {
                                    reached: true,
                                    dexterity: f,
                                    config: Some(*config),
                                    free_params: Some(b.clone()),
                                    solution: Some(q.clone()),
                                };
                            }
                        }
                    }
                }
            }
        }

        let reachability = goals.iter().filter(|g| g.reached).count() as f64 / n_goals as f64;
        let manipulability = goals.iter().map(|g| g.dexterity).sum::<f64>() / n_goals as f64;
        let (objective, heuristic) = if reachability == 0.0 && manipulability == 0.0 {
            (self.heuristic(&instances), true)
        } else {
            let beta = match mode {
                ScoreMode::Full => self.params.beta_for(set.len()),
                ScoreMode::ReachOnly => 0.0,
            };
            (self.params.alpha * reachability + beta * manipulability, false)
        };
        Ok(ScoreReport {
            cardinality: set.len(),
            reachability,
            manipulability,
            objective,
            heuristic,
            goals,
        })
    }

    /// Strictly negative guidance for sets that reach nothing: smaller when the
    /// arm is nearer the goals and the base is clear of obstacles.
    fn heuristic(&self, instances: &[(usize, Vec<f64>, Instance)]) -> f64 {
        let extent = self.scene.extent();
        let n_goals = self.task.len();
        let mut nearest = vec![f64::INFINITY; n_goals];
        let mut blocked = 0;
        for (_, _, inst) in instances {
            blocked += inst.base_blocked as usize;
            let shoulder = self.chain.shoulder(&inst.placement.root);
            for (k, g) in inst.goals.iter().enumerate() {
                nearest[k] = nearest[k].min((g.position() - shoulder).norm());
            }
        }
        let reach = self.chain.reach();
        let beyond = nearest
            .iter()
            .map(|d| (d - reach).clamp(0.0, extent) / extent)
            .sum::<f64>()
            / n_goals as f64;
        // Small pull toward the goals even when all are nominally within reach.
        let distance = nearest.iter().map(|d| (d / extent).min(1.0)).sum::<f64>() / n_goals as f64;
        let blocked = blocked as f64 / instances.len().max(1) as f64;
        -0.01 - beyond - 0.1 * distance - 0.5 * blocked
    }

    /// Per-goal reachability from any configuration under `cond`.
    pub fn goals_reached(&self, set: &ConfigurationSet, cond: &Conditions) -> Result<Vec<bool>> {
        self.check_set(set)?;
        let instances = self.instances(set, cond)?;
        Ok((0..self.task.len())
            .map(|k| {
                instances.iter().any(|(_, _, inst)| {
                    !inst.base_blocked
                        && ik_feasible(self.chain, &inst.placement, &inst.goals[k], &inst.world, &self.params.ik)
                })
            })
            .collect())
    }

    /// Per-goal reachability from each configuration separately, indexed
    /// `[config][goal]`.
    pub fn goals_reached_by_config(&self, set: &ConfigurationSet, cond: &Conditions) -> Result<Vec<Vec<bool>>> {
        set.configs
            .iter()
            .map(|c| self.goals_reached(&ConfigurationSet::single(c.clone()), cond))
            .collect()
    }

    /// Whether every goal is reached under `cond`; stops at the first miss.
    pub fn all_reached(&self, set: &ConfigurationSet, cond: &Conditions) -> Result<bool> {
        self.check_set(set)?;
        let instances = self.instances(set, cond)?;
        for k in 0..self.task.len() {
            let hit = instances.iter().any(|(_, _, inst)| {
                !inst.base_blocked
                    && ik_feasible(self.chain, &inst.placement, &inst.goals[k], &inst.world, &self.params.ik)
            });
            if !hit {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn reachability(&self, set: &ConfigurationSet, h: &[f64]) -> Result<f64> {
        Ok(self.score(set, &self.planning(h), ScoreMode::ReachOnly)?.reachability)
    }

    pub fn manipulability(&self, set: &ConfigurationSet, h: &[f64]) -> Result<f64> {
        Ok(self.score(set, &self.planning(h), ScoreMode::Full)?.manipulability)
    }

    pub fn objective(&self, set: &ConfigurationSet, h: &[f64]) -> Result<f64> {
        Ok(self.score(set, &self.planning(h), ScoreMode::Full)?.objective)
    }
}

/// Largest JLWKI over a goal's solutions; 0 for an empty set.
pub fn goal_dexterity(chain: &KinematicChain, set: &IkSolutionSet, params: &DexterityParams) -> Result<f64> {
    let mut best = 0.0f64;
    for q in &set.solutions {
        best = best.max(jlwki_at(chain, q, params)?);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::solve_ik;
    use crate::scene::RobotConfiguration;

    fn planar_scene() -> SceneModel {
        SceneModel::from_json(
            r#"{
            "name": "flat",
            "margin": 0.0,
            "base_bounds": {"x": [-3, 3], "y": [-3, 3], "theta": [-3.2, 3.2]},
            "initial_bases": [[0, 0, 0]],
            "fixed_objects": [{"name": "post", "shapes": [{"type": "sphere", "radius": 0.1, "pose": {"position": [5, 5, 0]}}]}]
        }"#,
        )
        .unwrap()
    }

    fn two_link() -> KinematicChain {
        KinematicChain::from_json(include_str!("../data/chains/planar2.chain")).unwrap()
    }

    fn task(points: &[(f64, f64)]) -> TaskModel {
        TaskModel {
            name: "pts".into(),
            goals: points
                .iter()
                .map(|&(x, y)| crate::scene::GoalDecl {
                    frame: "world".into(),
                    pose: Pose::from_translation(x, y, 0.0),
                })
                .collect(),
        }
    }

    fn at(x: f64, y: f64) -> ConfigurationSet {
        ConfigurationSet::single(RobotConfiguration {
            x,
            y,
            theta: 0.0,
            aux: vec![],
        })
    }

    #[test]
    fn beta_schedule() {
        let p = ScoringParams::default();
        assert_eq!(p.beta_for(1), 0.1);
        assert!((p.beta_for(2) - 0.095).abs() < 1e-15);
        assert!((p.beta_for(3) - 0.09025).abs() < 1e-15);
    }

    #[test]
    fn reachability_counts_goals() {
        let chain = two_link();
        let scene = planar_scene();
        let t = task(&[(1.0, 1.0), (3.0, 0.0), (0.5, 0.5), (-2.5, 0.0)]);
        let s = Scorer::new(&chain, &scene, &t, ScoringParams::default()).unwrap();
        let rep = s.score(&at(0.0, 0.0), &s.planning(&[]), ScoreMode::Full).unwrap();
        assert_eq!(rep.reachability, 0.5);
        assert!(!rep.heuristic);
        assert_eq!(s.reachability(&at(0.0, 0.0), &[]).unwrap(), 0.5);
        // Union of two placements reaches the far goals too.
        let both = at(0.0, 0.0).union(&at(1.5, 0.0)).union(&at(-1.5, 0.0));
        assert_eq!(s.reachability(&both, &[]).unwrap(), 1.0);
    }

    #[test]
    fn manipulability_is_mean_of_best() {
        let chain = two_link();
        let scene = planar_scene();
        let t = task(&[(1.0, 1.0), (3.0, 0.0)]);
        let s = Scorer::new(&chain, &scene, &t, ScoringParams::default()).unwrap();
        let rep = s.score(&at(0.0, 0.0), &s.planning(&[]), ScoreMode::Full).unwrap();
        let world = scene.instantiate_world(&SceneState::default(), 0.0).unwrap();
        let placement = chain.placement(Pose::identity(), 0.0);
        let sols = solve_ik(&chain, &placement, &Pose::from_translation(1.0, 1.0, 0.0), &world, &s.params.ik);
        let f = goal_dexterity(&chain, &sols, &s.params.dexterity).unwrap();
        assert!(f > 0.0);
        assert!((rep.manipulability - f / 2.0).abs() < 1e-12);
        assert!((rep.objective - (0.5 + 0.1 * f / 2.0)).abs() < 1e-12);
    }

    #[test]
    fn heuristic_is_negative_and_guides() {
        let chain = two_link();
        let scene = planar_scene();
        let t = task(&[(2.9, 0.0)]);
        let s = Scorer::new(&chain, &scene, &t, ScoringParams::default()).unwrap();
        let far = s.score(&at(-2.0, 0.0), &s.planning(&[]), ScoreMode::Full).unwrap();
        let near = s.score(&at(0.0, 0.0), &s.planning(&[]), ScoreMode::Full).unwrap();
        assert!(far.heuristic && near.heuristic);
        assert!(far.objective < near.objective && near.objective < 0.0);
        let hit = s.score(&at(1.0, 0.0), &s.planning(&[]), ScoreMode::Full).unwrap();
        assert!(hit.objective > 0.0);
    }

    #[test]
    fn all_reached_matches_score() {
        let chain = two_link();
        let scene = planar_scene();
        let t = task(&[(1.0, 1.0), (0.5, -0.2)]);
        let s = Scorer::new(&chain, &scene, &t, ScoringParams::default()).unwrap();
        for (x, y) in [(0.0, 0.0), (1.0, 0.0), (2.0, 2.0), (0.3, 0.4)] {
            let set = at(x, y);
            let full = s.score(&set, &s.planning(&[]), ScoreMode::Full).unwrap();
            let reach = s.score(&set, &s.planning(&[]), ScoreMode::ReachOnly).unwrap();
            assert_eq!(full.reachability, reach.reachability);
            assert_eq!(s.all_reached(&set, &s.planning(&[])).unwrap(), full.reachability == 1.0);
        }
    }
}
