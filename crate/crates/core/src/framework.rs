//! Offline optimization over sampled uncontrollable parameters and online
//! nearest-neighbor selection.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::{optimize_configurations, CmaParams};
use crate::scene::ConfigurationSet;
use crate::scoring::{ScoreReport, Scorer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingPair {
    pub h: Vec<f64>,
    pub set: ConfigurationSet,
    pub report: ScoreReport,
}

/// 1-NN selector from observed uncontrollable parameters to a configuration set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectorModel {
    pub task: String,
    pub scene: String,
    pub params: Vec<String>,
    /// Per-dimension divisor applied before measuring distance.
    pub scales: Vec<f64>,
    pub pairs: Vec<TrainingPair>,
}

/// Optimize a configuration set for every sample of `h`.
pub fn train_offline(
    scorer: &Scorer,
    h_samples: &[Vec<f64>],
    cardinalities: &[usize],
    cma: CmaParams,
) -> Result<SelectorModel> {
    if h_samples.is_empty() {
        return Err(Error::Invalid("training needs at least one h sample".into()));
    }
    let scene = scorer.scene;
    for h in h_samples {
        scene.check_h(h)?;
    }
    let pairs = h_samples
        .iter()
        .map(|h| {
            let r = optimize_configurations(scorer, h, cardinalities, cma)?;
            Ok(TrainingPair {
                h: h.clone(),
                set: r.set,
                report: r.report,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SelectorModel {
        task: scorer.task.name.clone(),
        scene: scene.name.clone(),
        params: scene.uncontrollable_params.iter().map(|p| p.name.clone()).collect(),
        scales: scene
            .uncontrollable_params
            .iter()
            .map(|p| if p.max > p.min { p.max - p.min } else { 1.0 })
            .collect(),
        pairs,
    })
}

impl SelectorModel {
    pub fn validate(&self) -> Result<()> {
        if self.pairs.is_empty() {
            return Err(Error::EmptyModel);
        }
        let d = self.scales.len();
        if self.params.len() != d || self.scales.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Invalid("selector scales must be positive, one per parameter".into()));
        }
        for p in &self.pairs {
            if p.h.len() != d {
                return Err(Error::Dimension {
                    expected: d,
                    actual: p.h.len(),
                });
            }
        }
        Ok(())
    }

    /// Index of the training pair nearest `h_hat`; ties go to the lower index.
    pub fn nearest(&self, h_hat: &[f64]) -> Result<usize> {
        if self.pairs.is_empty() {
            return Err(Error::EmptyModel);
        }
        if h_hat.len() != self.scales.len() {
            return Err(Error::Dimension {
                expected: self.scales.len(),
                actual: h_hat.len(),
            });
        }
        let mut best = (0, f64::INFINITY);
        for (i, p) in self.pairs.iter().enumerate() {
            let d: f64 = p
                .h
                .iter()
                .zip(h_hat)
                .zip(&self.scales)
                .map(|((a, b), s)| ((a - b) / s).powi(2))
                .sum();
            if d < best.1 {
                best = (i, d);
            }
        }
        Ok(best.0)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("model serializes");
        std::fs::write(path, text).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let model: SelectorModel = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            source: e,
        })?;
        model.validate()?;
        Ok(model)
    }
}

/// Configuration set trained for the `h` nearest `h_hat`.
pub fn select_online<'m>(model: &'m SelectorModel, h_hat: &[f64]) -> Result<&'m ConfigurationSet> {
    Ok(&model.pairs[model.nearest(h_hat)?].set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::RobotConfiguration;
    use proptest::prelude::*;

    fn pair(h: Vec<f64>, x: f64) -> TrainingPair {
        TrainingPair {
            h,
            set: ConfigurationSet::single(RobotConfiguration {
                x,
                y: 0.0,
                theta: 0.0,
                aux: vec![],
            }),
            report: ScoreReport {
                cardinality: 1,
                reachability: 1.0,
                manipulability: 0.0,
                objective: 1.0,
                heuristic: false,
                goals: vec![],
            },
        }
    }

    fn model(hs: &[[f64; 2]], scales: [f64; 2]) -> SelectorModel {
        SelectorModel {
            task: "t".into(),
            scene: "s".into(),
            params: vec!["a".into(), "b".into()],
            scales: scales.to_vec(),
            pairs: hs.iter().enumerate().map(|(i, h)| pair(h.to_vec(), i as f64)).collect(),
        }
    }

    #[test]
    fn selection_examples() {
        let m = model(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [1.0, 1.0]);
        assert_eq!(select_online(&m, &[1.0, 0.0]).unwrap().configs[0].x, 1.0);
        assert_eq!(m.nearest(&[0.4, 0.0]).unwrap(), 0);
        assert_eq!(m.nearest(&[0.6, 0.1]).unwrap(), 1);
        // Equidistant from pairs 1 and 2.
        assert_eq!(m.nearest(&[0.5, 0.5]).unwrap(), 0);
        assert_eq!(m.nearest(&[1.0, 1.0]).unwrap(), 1);
    }

    #[test]
    fn errors() {
        let mut m = model(&[[0.0, 0.0]], [1.0, 1.0]);
        assert!(matches!(m.nearest(&[0.0]), Err(Error::Dimension { .. })));
        m.pairs.clear();
        assert!(matches!(select_online(&m, &[0.0, 0.0]), Err(Error::EmptyModel)));
    }

    proptest! {
        #[test]
        fn scale_invariance(
            hs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..12),
            q in (-1.5f64..1.5, -1.5f64..1.5),
            k in 0.01f64..100.0,
        ) {
            let pts: Vec<[f64; 2]> = hs.iter().map(|&(a, b)| [a, b]).collect();
            let base = model(&pts, [0.05, 0.2]);
            let scaled_pts: Vec<[f64; 2]> = pts.iter().map(|p| [p[0] * k, p[1]]).collect();
            let scaled = model(&scaled_pts, [0.05 * k, 0.2]);
            let i = base.nearest(&[q.0, q.1]).unwrap();
            let j = scaled.nearest(&[q.0 * k, q.1]).unwrap();
            // Rescaling may perturb exact ties by rounding; compare distances instead.
            let dist = |m: &SelectorModel, idx: usize, qq: [f64; 2]| -> f64 {
                m.pairs[idx].h.iter().zip(qq).zip(&m.scales).map(|((a, b), s)| ((a - b) / s).powi(2)).sum()
            };
            prop_assert!((dist(&base, i, [q.0, q.1]) - dist(&base, j, [q.0, q.1])).abs() < 1e-9);
        }
    }
}
