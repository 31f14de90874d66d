//! Comparison methods: IK-feasibility search and capability-map search.

use std::f64::consts::PI;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CollisionWorld, Pose};
use crate::kinematics::{ik_feasible, IkParams, KinematicChain, TaskSpace};
use crate::optimizer::{cma_es_maximize, run_seed, search_spec, CmaParams, OptimizationResult};
use crate::scene::{resolve_goals_with, ConfigurationSet, SceneState};
use crate::scoring::{ScoreMode, Scorer};

const MAGIC: &str = "baseplace-capmap 1";

/// Voxelized reachability of a chain around its root: each cell stores the
/// fraction of sampled orientations with a self-collision-free IK solution.
#[derive(Debug, Clone, PartialEq)]
pub struct CapabilityMap {
    pub chain: String,
    pub resolution: f64,
    pub orientations: usize,
    /// Center of cell `(0, 0, 0)` in the chain root frame.
    pub origin: Vector3<f64>,
    pub dims: [usize; 3],
    pub scores: Vec<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CapmapParams {
    pub resolution: f64,
    /// Orientation samples per cell (yaw samples for planar chains).
    pub orientations: usize,
    pub ik: IkParams,
}

impl Default for CapmapParams {
    fn default() -> Self {
        CapmapParams {
            resolution: 0.05,
            orientations: 60,
            ik: IkParams::default(),
        }
    }
}

fn halton(mut i: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Low-discrepancy orientations: Halton points mapped to unit quaternions.
pub fn orientation_samples(count: usize) -> Vec<UnitQuaternion<f64>> {
    (1..=count)
        .map(|i| {
            let (u1, u2, u3) = (halton(i, 2), halton(i, 3), halton(i, 5));
            let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
            UnitQuaternion::from_quaternion(Quaternion::new(
                b * (2.0 * PI * u3).cos(),
                a * (2.0 * PI * u2).sin(),
                a * (2.0 * PI * u2).cos(),
                b * (2.0 * PI * u3).sin(),
            ))
        })
        .collect()
}

impl CapabilityMap {
    /// Sample the chain's workspace on a cube of half-width `reach` (a square
    /// in the task plane for planar chains).
    pub fn build(chain: &KinematicChain, params: &CapmapParams) -> Result<Self> {
        if !(params.resolution > 0.0) || params.orientations == 0 {
            return Err(Error::Invalid("capability map needs a positive resolution and orientation count".into()));
        }
        let reach = chain.reach();
        let half = (reach / params.resolution).ceil() as usize;
        let n = 2 * half + 1;
        let planar = matches!(chain.task_space, TaskSpace::Planar | TaskSpace::PlanarPosition);
        let dims = if planar { [n, n, 1] } else { [n, n, n] };
        let lo = -(half as f64) * params.resolution;
        let origin = Vector3::new(lo, lo, if planar { 0.0 } else { lo });
        let orientations: Vec<UnitQuaternion<f64>> = match chain.task_space {
            TaskSpace::Spatial => orientation_samples(params.orientations),
            TaskSpace::Planar => (0..params.orientations)
                .map(|i| UnitQuaternion::from_euler_angles(0.0, 0.0, -PI + 2.0 * PI * i as f64 / params.orientations as f64))
                .collect(),
            TaskSpace::Position | TaskSpace::PlanarPosition => vec![UnitQuaternion::identity()],
        };
        // Arm root at the origin, base body where it sits below the lowest spine setting.
        let spine = chain.base.spine.map_or(0.0, |s| s[0]);
        let lift = Pose::from_translation(0.0, 0.0, spine).compose(&chain.base.mount);
        let placement = chain.placement(lift.inverse(), spine);
        let root = placement.root;
        let empty = CollisionWorld::new();
        let shoulder = chain.shoulder(&root);
        let mut scores = Vec::with_capacity(dims.iter().product());
        for ix in 0..dims[0] {
            for iy in 0..dims[1] {
                for iz in 0..dims[2] {
                    let p = origin + Vector3::new(ix as f64, iy as f64, iz as f64) * params.resolution;
                    if (p - shoulder).norm() > reach + params.resolution {
                        scores.push(0.0);
                        continue;
                    }
                    let hits = orientations
                        .iter()
                        .filter(|q| {
                            ik_feasible(chain, &placement, &Pose::from_parts(p, **q), &empty, &params.ik)
                        })
                        .count();
                    scores.push((hits as f64 / orientations.len() as f64) as f32);
                }
            }
        }
        Ok(CapabilityMap {
            chain: chain.name.clone(),
            resolution: params.resolution,
            orientations: orientations.len(),
            origin,
            dims,
            scores,
        })
    }

    /// Score of the cell nearest `p` (chain root frame); 0 outside the grid.
    pub fn lookup(&self, p: &Vector3<f64>) -> f64 {
        let mut idx = [0usize; 3];
        for a in 0..3 {
            let f = ((p[a] - self.origin[a]) / self.resolution).round();
            if f < 0.0 || f >= self.dims[a] as f64 {
                return 0.0;
            }
            idx[a] = f as usize;
        }
        self.scores[(idx[0] * self.dims[1] + idx[1]) * self.dims[2] + idx[2]] as f64
    }

    pub fn check_chain(&self, chain: &KinematicChain) -> Result<()> {
        if self.chain != chain.name {
            return Err(Error::MapFormat(format!(
                "map was built for chain `{}`, not `{}`",
                self.chain, chain.name
            )));
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{MAGIC}")?;
        writeln!(w, "chain {}", self.chain)?;
        writeln!(w, "resolution {}", self.resolution)?;
        writeln!(w, "orientations {}", self.orientations)?;
        writeln!(w, "origin {} {} {}", self.origin.x, self.origin.y, self.origin.z)?;
        writeln!(w, "dims {} {} {}", self.dims[0], self.dims[1], self.dims[2])?;
        writeln!(w, "end")?;
        for s in &self.scores {
            w.write_all(&s.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut line = String::new();
        let mut next = |r: &mut BufReader<R>| -> Result<String> {
            line.clear();
            r.read_line(&mut line)
                .map_err(|e| Error::MapFormat(format!("unreadable header: {e}")))?;
            if line.is_empty() {
                return Err(Error::MapFormat("truncated header".into()));
            }
            Ok(line.trim_end().to_string())
        };
        if next(&mut r)? != MAGIC {
            return Err(Error::MapFormat("not a capability map".into()));
        }
        let field = |text: String, key: &str| -> Result<Vec<String>> {
            let mut parts = text.split_whitespace().map(str::to_string);
            if parts.next().as_deref() != Some(key) {
                return Err(Error::MapFormat(format!("expected `{key}` in header")));
            }
            Ok(parts.collect())
        };
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::MapFormat(format!("bad number `{s}`")))
        };
        let chain = field(next(&mut r)?, "chain")?.join(" ");
        let resolution = num(&field(next(&mut r)?, "resolution")?.concat())?;
        let orientations = num(&field(next(&mut r)?, "orientations")?.concat())? as usize;
        let o = field(next(&mut r)?, "origin")?;
        let d = field(next(&mut r)?, "dims")?;
        if o.len() != 3 || d.len() != 3 {
            return Err(Error::MapFormat("origin and dims need three values".into()));
        }
        let origin = Vector3::new(num(&o[0])?, num(&o[1])?, num(&o[2])?);
        let dims = [num(&d[0])? as usize, num(&d[1])? as usize, num(&d[2])? as usize];
        if next(&mut r)? != "end" {
            return Err(Error::MapFormat("missing header terminator".into()));
        }
        if !(resolution > 0.0) {
            return Err(Error::MapFormat("resolution must be positive".into()));
        }
        let count: usize = dims.iter().product();
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)
            .map_err(|e| Error::MapFormat(format!("unreadable scores: {e}")))?;
        if bytes.len() != 4 * count {
            return Err(Error::MapFormat(format!(
                "expected {count} scores, found {} bytes",
                bytes.len()
            )));
        }
        let scores = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(CapabilityMap {
            chain,
            resolution,
            orientations,
            origin,
            dims,
            scores,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let io = |e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        };
        let file = std::fs::File::create(path).map_err(io)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w).map_err(io)?;
        w.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::read_from(file)
    }
}

/// Capability-map score of one configuration set: mean over goals of the best
/// cell score across configurations and free parameters. With
/// `collision_check`, a goal only counts from a placement whose base is clear
/// and that has a collision-free IK solution in the planning world.
pub fn capability_score(
    scorer: &Scorer,
    map: &CapabilityMap,
    set: &ConfigurationSet,
    h: &[f64],
    collision_check: bool,
) -> Result<f64> {
    let scene = scorer.scene;
    let chain = scorer.chain;
    let n_goals = scorer.task.len();
    let mut best = vec![0.0f64; n_goals];
    for config in &set.configs {
        let placement = scorer.layout.placement(chain, config);
        let to_root = placement.root.inverse();
        for b in scene.free_param_grid() {
            let state = SceneState {
                controls: scorer.layout.controls(config).to_vec(),
                h: h.to_vec(),
                b,
                user_offset: Default::default(),
            };
            let poses = scene.frame_poses(&state)?;
            let goals = resolve_goals_with(scorer.task, scene, &poses)?;
            let world = if collision_check {
                let world = scene.world_from_poses(&poses, scene.margin);
                if chain.placed_base(&placement).iter().any(|s| world.collides(s)) {
                    continue;
                }
                Some(world)
            } else {
                None
            };
            for (k, g) in goals.iter().enumerate() {
                let s = map.lookup(&to_root.transform_point(&g.position()));
                if s <= best[k] {
                    continue;
                }
                if let Some(world) = &world {
                    if !ik_feasible(chain, &placement, g, world, &scorer.params.ik) {
                        continue;
                    }
                }
                best[k] = s;
            }
        }
    }
    Ok(best.iter().sum::<f64>() / n_goals as f64)
}

/// Which comparison method to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    Ik,
    Capmap,
    CapmapCollision,
}

/// Search a single configuration from each initial base with the seeds the
/// task-centric method uses, keeping the best. `value` maps a set to the
/// baseline's own objective.
fn single_config_search<F>(scorer: &Scorer, h: &[f64], cma: CmaParams, mut value: F) -> Result<OptimizationResult>
where
    F: FnMut(&ConfigurationSet) -> Result<f64>,
{
    let mut best: Option<(f64, ConfigurationSet)> = None;
    let mut trace = Vec::new();
    let mut evaluations = 0;
    for first in 0..scorer.scene.initial_bases.len() {
        let run = CmaParams {
            seed: run_seed(cma.seed, 1, first),
            ..cma
        };
        let spec = search_spec(scorer, 1, first, run);
        let mut failure = None;
        let result = cma_es_maximize(
            |v| match value(&scorer.layout.decode_set(v)) {
                Ok(x) => x,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NEG_INFINITY
                }
            },
            &spec,
        )?;
        if let Some(e) = failure {
            return Err(e);
        }
        evaluations += result.evaluations;
        let label = format!("n1-init{first}");
        trace.extend(result.trace.into_iter().map(|r| crate::optimizer::TraceRecord {
            run: label.clone(),
            ..r
        }));
        let set = scorer.layout.decode_set(&result.best_x);
        if best.as_ref().map_or(true, |(v, _)| result.best_value > *v) {
            best = Some((result.best_value, set));
        }
        if cma.target.is_some_and(|t| result.best_value >= t) {
            break;
        }
    }
    let (_, set) = best.expect("at least one initial base");
    let report = scorer.score(&set, &scorer.planning(h), ScoreMode::Full)?;
    Ok(OptimizationResult {
        set,
        report,
        evaluations,
        trace,
    })
}

/// Single configuration maximizing the fraction of goals with collision-free
/// IK, stopping once every goal is reachable.
pub fn baseline_ik(scorer: &Scorer, h: &[f64], cma: CmaParams) -> Result<OptimizationResult> {
    let cond = scorer.planning(h);
    let cma = CmaParams {
        target: Some(scorer.params.alpha),
        ..cma
    };
    single_config_search(scorer, h, cma, |set| {
        Ok(scorer.score(set, &cond, ScoreMode::ReachOnly)?.objective)
    })
}

/// Single configuration maximizing the capability-map score.
pub fn baseline_capability(
    scorer: &Scorer,
    map: &CapabilityMap,
    h: &[f64],
    collision_check: bool,
    cma: CmaParams,
) -> Result<OptimizationResult> {
    map.check_chain(scorer.chain)?;
    single_config_search(scorer, h, cma, |set| {
        let s = capability_score(scorer, map, set, h, collision_check)?;
        if s > 0.0 {
            Ok(s)
        } else {
            Ok(distance_guidance(scorer, set, h)?)
        }
    })
}

/// Negative pull toward the goals, used where a capability score is zero.
fn distance_guidance(scorer: &Scorer, set: &ConfigurationSet, h: &[f64]) -> Result<f64> {
    let scene = scorer.scene;
    let extent = scene.extent();
    let reach = scorer.chain.reach();
    let mut nearest = vec![f64::INFINITY; scorer.task.len()];
    for config in &set.configs {
        let placement = scorer.layout.placement(scorer.chain, config);
        let shoulder = scorer.chain.shoulder(&placement.root);
        let state = SceneState {
            controls: scorer.layout.controls(config).to_vec(),
            h: h.to_vec(),
            b: scene.free_param_grid().swap_remove(0),
            user_offset: Default::default(),
        };
        let poses = scene.frame_poses(&state)?;
        for (k, g) in resolve_goals_with(scorer.task, scene, &poses)?.iter().enumerate() {
            nearest[k] = nearest[k].min((g.position() - shoulder).norm());
        }
    }
    let n = nearest.len() as f64;
    let beyond = nearest.iter().map(|d| (d - reach).clamp(0.0, extent) / extent).sum::<f64>() / n;
    let distance = nearest.iter().map(|d| (d / extent).min(1.0)).sum::<f64>() / n;
    Ok(-0.01 - beyond - 0.1 * distance)
}

/// Run `method` with matched seeds.
pub fn run_baseline(
    method: Baseline,
    scorer: &Scorer,
    map: Option<&CapabilityMap>,
    h: &[f64],
    cma: CmaParams,
) -> Result<OptimizationResult> {
    match method {
        Baseline::Ik => baseline_ik(scorer, h, cma),
        Baseline::Capmap | Baseline::CapmapCollision => {
            let map = map.ok_or_else(|| Error::Invalid("capability-map baselines need a map".into()))?;
            baseline_capability(scorer, map, h, method == Baseline::CapmapCollision, cma)
        }
    }
}
