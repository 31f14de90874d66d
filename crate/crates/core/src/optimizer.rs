//! CMA-ES search over one or more robot configurations.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::ConfigurationSet;
use crate::scoring::{ScoreMode, ScoreReport, Scorer};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CmaParams {
    pub population: usize,
    pub max_iterations: usize,
    /// Extra runs with doubled population after a run fails to converge.
    pub restarts: usize,
    /// Initial step size as a fraction of each bound's width.
    pub sigma0: f64,
    /// Converged once the best value improves by less than this...
    pub tol_fun: f64,
    /// ...over this many iterations.
    pub stall_iterations: usize,
    /// Converged once the step size in normalized coordinates drops below this.
    pub tol_x: f64,
    /// Stop as soon as a value at least this large is found.
    pub target: Option<f64>,
    pub seed: u64,
}

impl Default for CmaParams {
    fn default() -> Self {
        CmaParams {
            population: 40,
            max_iterations: 1000,
            restarts: 2,
            sigma0: 0.25,
            tol_fun: 1e-6,
            stall_iterations: 30,
            tol_x: 1e-7,
            target: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpec {
    pub bounds: Vec<(f64, f64)>,
    pub mean: Vec<f64>,
    pub cma: CmaParams,
}

impl SearchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.bounds.is_empty() || self.mean.len() != self.bounds.len() {
            return Err(Error::Dimension {
                expected: self.bounds.len(),
                actual: self.mean.len(),
            });
        }
        for &(lo, hi) in &self.bounds {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Invalid("search bounds must be finite with min < max".into()));
            }
        }
        if self.cma.population < 4 {
            return Err(Error::Invalid("population must be at least 4".into()));
        }
        if !(self.cma.sigma0 > 0.0) {
            return Err(Error::Invalid("initial step size must be positive".into()));
        }
        Ok(())
    }
}

/// One line of the optimization trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub run: String,
    pub restart: usize,
    pub iteration: usize,
    pub evaluations: usize,
    /// Best value found so far in this search, across restarts.
    pub best: f64,
    /// Mean value of the current population.
    pub mean: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmaResult {
    pub best_x: Vec<f64>,
    pub best_value: f64,
    pub evaluations: usize,
    pub converged: bool,
    pub trace: Vec<TraceRecord>,
}

/// Maximize `f` over the box in `spec` with restart-doubling CMA-ES.
/// The search runs in coordinates normalized to `[0, 1]` per dimension.
pub fn cma_es_maximize<F: FnMut(&[f64]) -> f64>(mut f: F, spec: &SearchSpec) -> Result<CmaResult> {
    spec.validate()?;
    let d = spec.bounds.len();
    let p = spec.cma;
    let to_x = |u: &DVector<f64>| -> Vec<f64> {
        spec.bounds
            .iter()
            .zip(u.iter())
            .map(|(&(lo, hi), &v)| lo + (hi - lo) * v)
            .collect()
    };
    let start = DVector::from_iterator(
        d,
        spec.bounds
            .iter()
            .zip(&spec.mean)
            .map(|(&(lo, hi), &m)| ((m - lo) / (hi - lo)).clamp(0.0, 1.0)),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut best_u = start.clone();
    let mut best_value = f64::NEG_INFINITY;
    let mut evaluations = 0;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut lambda = p.population;

    'runs: for restart in 0..=p.restarts {
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu)
            .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - (i as f64).ln())
            .collect();
        let sum: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|v| v / sum).collect();
        let mu_eff = 1.0 / w.iter().map(|v| v * v).sum::<f64>();
        let df = d as f64;
        let c_sigma = (mu_eff + 2.0) / (df + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (df + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / df) / (df + 4.0 + 2.0 * mu_eff / df);
        let c_1 = 2.0 / ((df + 1.3).powi(2) + mu_eff);
        let c_mu = (1.0 - c_1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((df + 2.0).powi(2) + mu_eff));
        let chi_n = df.sqrt() * (1.0 - 1.0 / (4.0 * df) + 1.0 / (21.0 * df * df));

        let mut mean = start.clone();
        let mut sigma = p.sigma0;
        let mut cov = DMatrix::<f64>::identity(d, d);
        let mut p_sigma = DVector::<f64>::zeros(d);
        let mut p_c = DVector::<f64>::zeros(d);
        let mut history: Vec<f64> = Vec::new();

        for iteration in 0..p.max_iterations {
            let eig = cov.clone().symmetric_eigen();
            let b = eig.eigenvectors;
            let sqrt_d = eig.eigenvalues.map(|v| v.max(1e-30).sqrt());
            let bd = &b * DMatrix::from_diagonal(&sqrt_d);
            let inv_sqrt_c = &b * DMatrix::from_diagonal(&sqrt_d.map(|v| 1.0 / v)) * b.transpose();

            let mut pop: Vec<(f64, DVector<f64>)> = Vec::with_capacity(lambda);
            for _ in 0..lambda {
                let mut u = DVector::zeros(d);
                for attempt in 0..10 {
                    let z = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
                    u = &mean + &bd * z * sigma;
                    if u.iter().all(|v| (0.0..=1.0).contains(v)) || attempt == 9 {
                        break;
                    }
                }
                u.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
                let value = f(&to_x(&u));
                evaluations += 1;
                let value = if value.is_nan() { f64::NEG_INFINITY } else { value };
                if value > best_value {
                    best_value = value;
                    best_u = u.clone();
                }
                pop.push((value, u));
            }
            pop.sort_by(|a, b| b.0.total_cmp(&a.0));
            let pop_mean = pop.iter().map(|(v, _)| v).sum::<f64>() / lambda as f64;
            history.push(best_value);
            trace.push(TraceRecord {
                run: String::new(),
                restart,
                iteration,
                evaluations,
                best: best_value,
                mean: pop_mean,
                sigma,
            });
            if p.target.is_some_and(|t| best_value >= t) {
                converged = true;
                break 'runs;
            }

            let old_mean = mean.clone();
            mean = DVector::zeros(d);
            for (wi, (_, u)) in w.iter().zip(&pop) {
                mean += u * *wi;
            }
            let y_w = (&mean - &old_mean) / sigma;
            p_sigma = &p_sigma * (1.0 - c_sigma) + &inv_sqrt_c * &y_w * (c_sigma * (2.0 - c_sigma) * mu_eff).sqrt();
            let gen = (iteration + 1) as f64;
            let h_sigma = p_sigma.norm() / (1.0 - (1.0 - c_sigma).powf(2.0 * gen)).sqrt()
                < (1.4 + 2.0 / (df + 1.0)) * chi_n;
            let h = if h_sigma { 1.0 } else { 0.0 };
            p_c = &p_c * (1.0 - c_c) + &y_w * (h * (c_c * (2.0 - c_c) * mu_eff).sqrt());
            let mut rank_mu = DMatrix::<f64>::zeros(d, d);
            for (wi, (_, u)) in w.iter().zip(&pop) {
                let y = (u - &old_mean) / sigma;
                rank_mu += &y * y.transpose() * *wi;
            }
            cov = &cov * (1.0 - c_1 - c_mu)
                + (&p_c * p_c.transpose() + &cov * ((1.0 - h) * c_c * (2.0 - c_c))) * c_1
                + rank_mu * c_mu;
            cov = (&cov + cov.transpose()) * 0.5;
            sigma *= ((c_sigma / d_sigma) * (p_sigma.norm() / chi_n - 1.0)).exp();
            sigma = sigma.min(1.0);

            let stalled = history.len() > p.stall_iterations
                && history[history.len() - 1] - history[history.len() - 1 - p.stall_iterations] < p.tol_fun;
            let max_sd = sigma * cov.diagonal().iter().fold(0.0f64, |a, &v| a.max(v.sqrt()));
            if stalled || max_sd < p.tol_x {
                converged = true;
                break 'runs;
            }
        }
        lambda *= 2;
    }

    Ok(CmaResult {
        best_x: to_x(&best_u),
        best_value,
        evaluations,
        converged,
        trace,
    })
}

/// Seed for the search with `cardinality` configurations started from
/// initialization `init`. Methods that share it draw identical sample streams.
pub fn run_seed(seed: u64, cardinality: usize, init: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((cardinality as u64) << 16 | init as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub set: ConfigurationSet,
    pub report: ScoreReport,
    pub evaluations: usize,
    #[serde(skip)]
    pub trace: Vec<TraceRecord>,
}

/// Initial search vector for `cardinality` configurations starting from the
/// scene's initial bases beginning at `first`.
pub fn initial_mean(scorer: &Scorer, cardinality: usize, first: usize) -> Vec<f64> {
    let bases = &scorer.scene.initial_bases;
    let mut mean = Vec::new();
    for i in 0..cardinality {
        mean.extend_from_slice(&bases[(first + i) % bases.len()]);
        mean.extend(scorer.layout.default_aux());
    }
    mean
}

/// Search space for `cardinality` configurations.
pub fn search_spec(scorer: &Scorer, cardinality: usize, first: usize, cma: CmaParams) -> SearchSpec {
    let bounds = (0..cardinality).flat_map(|_| scorer.layout.bounds()).collect();
    SearchSpec {
        bounds,
        mean: initial_mean(scorer, cardinality, first),
        cma,
    }
}

/// Run one search with `mode` scoring; returns the best set and its report.
pub fn optimize_cardinality(
    scorer: &Scorer,
    h: &[f64],
    cardinality: usize,
    first: usize,
    mode: ScoreMode,
    cma: CmaParams,
) -> Result<OptimizationResult> {
    let spec = search_spec(scorer, cardinality, first, cma);
    let cond = scorer.planning(h);
    let mut failure = None;
    let result = cma_es_maximize(
        |v| match scorer.score(&scorer.layout.decode_set(v), &cond, mode) {
            Ok(r) => r.objective,
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
    let set = scorer.layout.decode_set(&result.best_x);
    let report = scorer.score(&set, &cond, mode)?;
    let label = format!("n{cardinality}-init{first}");
    let trace = result
        .trace
        .into_iter()
        .map(|r| TraceRecord { run: label.clone(), ..r })
        .collect();
    Ok(OptimizationResult {
        set,
        report,
        evaluations: result.evaluations,
        trace,
    })
}

/// Optimize sets of every requested cardinality and return the one with the
/// highest objective, preferring fewer configurations on ties. Single
/// configurations are searched from each initial base; larger sets start from
/// consecutive initial bases jointly.
pub fn optimize_configurations(
    scorer: &Scorer,
    h: &[f64],
    cardinalities: &[usize],
    cma: CmaParams,
) -> Result<OptimizationResult> {
    if cardinalities.is_empty() || cardinalities.contains(&0) {
        return Err(Error::Invalid("cardinalities must be non-empty and positive".into()));
    }
    let mut sorted = cardinalities.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut best: Option<OptimizationResult> = None;
    let mut trace = Vec::new();
    let mut evaluations = 0;
    for &n in &sorted {
        let inits = if n == 1 { scorer.scene.initial_bases.len() } else { 1 };
        for first in 0..inits {
            let run = CmaParams {
                seed: run_seed(cma.seed, n, first),
                ..cma
            };
            let mut r = optimize_cardinality(scorer, h, n, first, ScoreMode::Full, run)?;
            evaluations += r.evaluations;
            trace.append(&mut r.trace);
            if best.as_ref().map_or(true, |b| r.report.objective > b.report.objective) {
                best = Some(r);
            }
        }
    }
    let mut best = best.expect("at least one run");
    best.trace = trace;
    best.evaluations = evaluations;
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(bounds: Vec<(f64, f64)>, mean: Vec<f64>, seed: u64) -> SearchSpec {
        SearchSpec {
            bounds,
            mean,
            cma: CmaParams {
                seed,
                ..Default::default()
            },
        }
    }

    #[test]
    fn bowl_reaches_optimum() {
        let s = spec(vec![(-5.0, 5.0); 2], vec![3.0, -4.0], 1);
        let r = cma_es_maximize(|x| -(x[0] * x[0] + x[1] * x[1]), &s).unwrap();
        assert!(r.best_value.abs() < 1e-8, "{}", r.best_value);
        assert!(r.converged);
    }

    #[test]
    fn rosenbrock_in_four_dims() {
        let s = spec(vec![(-2.0, 2.0); 4], vec![0.0; 4], 7);
        let r = cma_es_maximize(
            |x| {
                -(0..3)
                    .map(|i| 100.0 * (x[i + 1] - x[i] * x[i]).powi(2) + (1.0 - x[i]).powi(2))
                    .sum::<f64>()
            },
            &s,
        )
        .unwrap();
        assert!(r.best_value > -1e-4, "{}", r.best_value);
    }

    #[test]
    fn optimum_on_boundary() {
        let s = spec(vec![(0.0, 1.0), (0.0, 1.0)], vec![0.5, 0.5], 3);
        let r = cma_es_maximize(|x| x[0] + 2.0 * x[1], &s).unwrap();
        assert!((r.best_value - 3.0).abs() < 1e-6);
        assert!(r.best_x.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn deterministic_and_monotone_trace() {
        let f = |x: &[f64]| (3.0 * x[0]).sin() * (2.0 * x[1]).cos() - 0.1 * x[0] * x[0];
        let s = spec(vec![(-3.0, 3.0); 2], vec![0.0, 0.0], 11);
        let a = cma_es_maximize(f, &s).unwrap();
        let b = cma_es_maximize(f, &s).unwrap();
        assert_eq!(a, b);
        for w in a.trace.windows(2) {
            assert!(w[1].best >= w[0].best);
        }
    }

    #[test]
    fn restarts_double_population() {
        let mut s = spec(vec![(-1.0, 1.0)], vec![0.0], 5);
        s.cma.max_iterations = 3;
        s.cma.restarts = 2;
        s.cma.population = 8;
        s.cma.stall_iterations = 100;
        let r = cma_es_maximize(|x| x[0], &s).unwrap();
        assert!(!r.converged);
        assert_eq!(r.evaluations, 3 * 8 + 3 * 16 + 3 * 32);
        assert_eq!(r.trace.last().unwrap().restart, 2);
    }

    #[test]
    fn target_stops_early() {
        let mut s = spec(vec![(-1.0, 1.0); 2], vec![0.0, 0.0], 5);
        s.cma.target = Some(-0.5);
        let r = cma_es_maximize(|x| -(x[0] * x[0] + x[1] * x[1]), &s).unwrap();
        assert_eq!(r.evaluations, s.cma.population);
    }

    #[test]
    fn rejects_bad_spec() {
        assert!(cma_es_maximize(|_| 0.0, &spec(vec![(1.0, 0.0)], vec![0.0], 0)).is_err());
        let mut s = spec(vec![(0.0, 1.0)], vec![0.0], 0);
        s.cma.population = 3;
        assert!(cma_es_maximize(|_| 0.0, &s).is_err());
    }
}
