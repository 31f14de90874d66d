//! Monte-Carlo robustness trials, robustness heatmaps, score/accuracy
//! correlation, and rank statistics.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::scene::{ConfigurationSet, RobotConfiguration, UserOffset};
use crate::scoring::{Conditions, ScoreMode, Scorer};

/// Zero-mean Gaussian pose error, as standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorModel {
    pub human_x: f64,
    pub human_y: f64,
    /// Rotation of the person about the vertical axis through the pivot frame.
    pub human_theta: f64,
    pub robot_x: f64,
    pub robot_y: f64,
    pub robot_theta: f64,
}

impl ErrorModel {
    pub fn zero() -> Self {
        ErrorModel {
            human_x: 0.0,
            human_y: 0.0,
            human_theta: 0.0,
            robot_x: 0.0,
            robot_y: 0.0,
            robot_theta: 0.0,
        }
    }

    /// Person lying in bed: translation only.
    pub fn bed() -> Self {
        ErrorModel {
            human_x: 0.025,
            human_y: 0.05,
            human_theta: 0.0,
            robot_x: 0.01,
            robot_y: 0.01,
            robot_theta: 5f64.to_radians(),
        }
    }

    /// Seated person: bed translation plus head rotation.
    pub fn chair() -> Self {
        ErrorModel {
            human_theta: 5f64.to_radians(),
            ..Self::bed()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "bed" => Some(Self::bed()),
            "chair" => Some(Self::chair()),
            "zero" => Some(Self::zero()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.human_x,
            self.human_y,
            self.human_theta,
            self.robot_x,
            self.robot_y,
            self.robot_theta,
        ];
        if all.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::Invalid("error model standard deviations must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// One draw of pose error: the person's offset and a base offset
/// `[dx, dy, dtheta]` per configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub human: UserOffset,
    pub robot: Vec<[f64; 3]>,
}

/// Draw the perturbation for `trial`. Each trial has its own stream, the
/// person's error is drawn first, and configuration `i` always consumes the
/// same draws, so methods compared under one seed share their person error
/// and first-configuration error.
pub fn sample_perturbation(model: &ErrorModel, configs: usize, seed: u64, trial: u64) -> Perturbation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    let mut draw = |sd: f64| -> f64 {
        let z: f64 = StandardNormal.sample(&mut rng);
        z * sd
    };
    let human = UserOffset {
        dx: draw(model.human_x),
        dy: draw(model.human_y),
        dtheta: draw(model.human_theta),
    };
    let robot = (0..configs)
        .map(|_| [draw(model.robot_x), draw(model.robot_y), draw(model.robot_theta)])
        .collect();
    Perturbation { human, robot }
}

fn perturbed(set: &ConfigurationSet, robot: &[[f64; 3]]) -> ConfigurationSet {
    ConfigurationSet::new(
        set.configs
            .iter()
            .zip(robot)
            .map(|(c, d)| RobotConfiguration {
                x: c.x + d[0],
                y: c.y + d[1],
                theta: c.theta + d[2],
                aux: c.aux.clone(),
            })
            .collect(),
    )
}

/// Test-time conditions: margin-free models with the person offset.
fn test_conditions(h: &[f64], human: UserOffset) -> Conditions<'_> {
    Conditions {
        h,
        user_offset: human,
        margin: 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub perturbation: Perturbation,
    pub reached: Vec<bool>,
    pub accuracy: f64,
    pub success: bool,
}

/// Evaluate one perturbed trial.
pub fn evaluate_trial(
    scorer: &Scorer,
    set: &ConfigurationSet,
    h: &[f64],
    trial: u64,
    perturbation: &Perturbation,
) -> Result<TrialRecord> {
    if perturbation.robot.len() != set.len() {
        return Err(Error::Dimension {
            expected: set.len(),
            actual: perturbation.robot.len(),
        });
    }
    let moved = perturbed(set, &perturbation.robot);
    let reached = scorer.goals_reached(&moved, &test_conditions(h, perturbation.human))?;
    let hits = reached.iter().filter(|r| **r).count();
    Ok(TrialRecord {
        trial,
        perturbation: perturbation.clone(),
        accuracy: hits as f64 / reached.len() as f64,
        success: hits == reached.len(),
        reached,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub trials: usize,
    pub success_rate: f64,
    pub mean_accuracy: f64,
    pub accuracy_variance: f64,
    pub records: Vec<TrialRecord>,
}

impl MonteCarloSummary {
    fn from_records(records: Vec<TrialRecord>) -> Self {
        let n = records.len() as f64;
        let successes = records.iter().filter(|r| r.success).count();
        let mean = records.iter().map(|r| r.accuracy).sum::<f64>() / n;
        let var = records.iter().map(|r| (r.accuracy - mean).powi(2)).sum::<f64>() / n;
        MonteCarloSummary {
            trials: records.len(),
            success_rate: successes as f64 / n,
            mean_accuracy: mean,
            accuracy_variance: var,
            records,
        }
    }

    /// Per-trial success as 0/1, in trial order.
    pub fn outcomes(&self) -> Vec<f64> {
        self.records.iter().map(|r| if r.success { 1.0 } else { 0.0 }).collect()
    }
}

pub fn run_monte_carlo(
    scorer: &Scorer,
    set: &ConfigurationSet,
    h: &[f64],
    model: &ErrorModel,
    trials: usize,
    seed: u64,
) -> Result<MonteCarloSummary> {
    if trials == 0 {
        return Err(Error::Invalid("Monte-Carlo needs at least one trial".into()));
    }
    model.validate()?;
    let records = (0..trials as u64)
        .map(|t| {
            let p = sample_perturbation(model, set.len(), seed, t);
            evaluate_trial(scorer, set, h, t, &p)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MonteCarloSummary::from_records(records))
}

/// Accuracy over a grid of person offsets, for the whole set and for each
/// configuration alone. Cells are indexed `[iy][ix]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub combined: Vec<Vec<f64>>,
    pub per_config: Vec<Vec<Vec<f64>>>,
}

/// `min, min + step, ...` up to `max` inclusive (within rounding).
pub fn grid_axis(range: [f64; 2], step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(range[0] <= range[1]) {
        return Err(Error::Invalid("heatmap needs step > 0 and min <= max".into()));
    }
    let n = ((range[1] - range[0]) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| range[0] + i as f64 * step).collect())
}

pub fn robustness_heatmap(
    scorer: &Scorer,
    set: &ConfigurationSet,
    h: &[f64],
    x_range: [f64; 2],
    y_range: [f64; 2],
    step: f64,
) -> Result<Heatmap> {
    let xs = grid_axis(x_range, step)?;
    let ys = grid_axis(y_range, step)?;
    let mut combined = vec![vec![0.0; xs.len()]; ys.len()];
    let mut per_config = vec![vec![vec![0.0; xs.len()]; ys.len()]; set.len()];
    for (iy, &dy) in ys.iter().enumerate() {
        for (ix, &dx) in xs.iter().enumerate() {
            let human = UserOffset { dx, dy, dtheta: 0.0 };
            let by_config = scorer.goals_reached_by_config(set, &test_conditions(h, human))?;
            let n_goals = scorer.task.len() as f64;
            for (c, reached) in by_config.iter().enumerate() {
                per_config[c][iy][ix] = reached.iter().filter(|r| **r).count() as f64 / n_goals;
            }
            let any = (0..scorer.task.len())
                .filter(|&k| by_config.iter().any(|r| r[k]))
                .count();
            combined[iy][ix] = any as f64 / n_goals;
        }
    }
    Ok(Heatmap {
        xs,
        ys,
        combined,
        per_config,
    })
}

impl Heatmap {
    /// Long-format CSV: `dx,dy,combined,config_0,...`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "dx,dy,combined")?;
        for c in 0..self.per_config.len() {
            write!(w, ",config_{c}")?;
        }
        writeln!(w)?;
        for (iy, y) in self.ys.iter().enumerate() {
            for (ix, x) in self.xs.iter().enumerate() {
                write!(w, "{x:.4},{y:.4},{:.6}", self.combined[iy][ix])?;
                for layer in &self.per_config {
                    write!(w, ",{:.6}", layer[iy][ix])?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }

    /// Binary PGM of one layer, brighter for higher accuracy, `dy` increasing upward.
    pub fn write_pgm<W: Write>(&self, layer: &[Vec<f64>], mut w: W) -> std::io::Result<()> {
        writeln!(w, "P5\n{} {}\n255", self.xs.len(), self.ys.len())?;
        for row in layer.iter().rev() {
            let bytes: Vec<u8> = row.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
            w.write_all(&bytes)?;
        }
        Ok(())
    }
}

/// Average ranks (1-based), ties sharing their mean rank.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation; `None` when either input has no variation.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some(cov / (va * vb).sqrt())
}

/// Two-sided Wilcoxon rank-sum p-value by normal approximation with tie
/// correction. Returns 1 when every value is tied.
pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Invalid("rank-sum test needs two non-empty samples".into()));
    }
    let all: Vec<f64> = a.iter().chain(b).copied().collect();
    let r = ranks(&all);
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let n = n1 + n2;
    let w: f64 = r[..a.len()].iter().sum();
    let mean = n1 * (n + 1.0) / 2.0;
    let mut sorted = all.clone();
    sorted.sort_by(f64::total_cmp);
    let mut ties = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        ties += t * t * t - t;
        i = j + 1;
    }
    let var = n1 * n2 / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    if !(var > 0.0) {
        return Ok(1.0);
    }
    let z = (w - mean) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok((2.0 * (1.0 - normal.cdf(z.abs()))).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub set: ConfigurationSet,
    pub score: f64,
    pub mean_accuracy: f64,
    pub accuracy_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub rows: Vec<CorrelationRow>,
    /// Spearman correlation of score with mean accuracy; `None` if undefined.
    pub accuracy_correlation: Option<f64>,
    pub variance_correlation: Option<f64>,
    pub attempts: usize,
}

impl CorrelationReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "score,mean_accuracy,accuracy_variance")?;
        for r in &self.rows {
            writeln!(w, "{:.6},{:.6},{:.6}", r.score, r.mean_accuracy, r.accuracy_variance)?;
        }
        Ok(())
    }
}

/// Settings for [`score_accuracy_correlation`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationSpec {
    pub samples: usize,
    /// Candidate draws allowed before giving up.
    pub max_attempts: usize,
    pub trials: usize,
    pub error: ErrorModel,
    pub seed: u64,
}

/// Draw candidate sets from `sampler` until `samples` of them reach every goal
/// under planning conditions, then score and Monte-Carlo each one.
pub fn score_accuracy_correlation<S>(
    scorer: &Scorer,
    h: &[f64],
    mut sampler: S,
    spec: &CorrelationSpec,
) -> Result<CorrelationReport>
where
    S: FnMut(&mut ChaCha8Rng) -> ConfigurationSet,
{
    if spec.samples < 2 {
        return Err(Error::Invalid("correlation needs at least two samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let cond = scorer.planning(h);
    let mut rows = Vec::new();
    let mut attempts = 0;
    while rows.len() < spec.samples {
        if attempts == spec.max_attempts {
            return Err(Error::TooFewFeasible {
                found: rows.len(),
                needed: spec.samples,
                attempts,
            });
        }
        attempts += 1;
        let set = sampler(&mut rng);
        if !scorer.all_reached(&set, &cond)? {
            continue;
        }
        let report = scorer.score(&set, &cond, ScoreMode::Full)?;
        let mc = run_monte_carlo(scorer, &set, h, &spec.error, spec.trials, spec.seed)?;
        rows.push(CorrelationRow {
            set,
            score: report.objective,
            mean_accuracy: mc.mean_accuracy,
            accuracy_variance: mc.accuracy_variance,
        });
    }
    let scores: Vec<f64> = rows.iter().map(|r| r.score).collect();
    let acc: Vec<f64> = rows.iter().map(|r| r.mean_accuracy).collect();
    let var: Vec<f64> = rows.iter().map(|r| r.accuracy_variance).collect();
    Ok(CorrelationReport {
        accuracy_correlation: spearman(&scores, &acc),
        variance_correlation: spearman(&scores, &var),
        rows,
        attempts,
    })
}
