//! Replicated runs that estimate `Pr(‖x_k − x*‖² ≤ ε)` and `E‖x_k − x*‖²`
//! and compare them with the theoretical guarantees.
//!
//! Replication `r` uses seed `base_seed + r`. Replications may run on the
//! rayon pool, but aggregation is a fold in replication order, so results
//! do not depend on scheduling.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::engine::{self, EngineError, RunConfig, Trajectory};
use crate::objective::QuadraticObjective;

/// Fewest replications accepted by [`estimate`].
pub const MIN_REPLICATIONS: usize = 30;
/// Cap on recorded per-iteration checkpoints.
pub const MAX_CHECKPOINTS: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MonteCarloError {
    #[error("too few replications: {0} (need at least {MIN_REPLICATIONS})")]
    TooFewReplications(usize),
    #[error("iteration cutoff {cutoff} exceeds configured iterations {iterations}")]
    CutoffExceedsIterations { cutoff: usize, iterations: usize },
    #[error("invalid accuracy/confidence: epsilon = {epsilon}, rho = {rho}")]
    InvalidTarget { epsilon: f64, rho: f64 },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Parallel,
    Serial,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloSummary {
    pub replications: usize,
    pub epsilon: f64,
    pub rho: f64,
    pub iterations_used: usize,
    /// Empirical `E‖x_k − x*‖²`; infinite if any replication aborted.
    pub mean_residual_sq: f64,
    /// Fraction of replications with `‖x_k − x*‖² ≤ ε`; aborted runs fail.
    pub success_fraction: f64,
    pub std_error_mean: f64,
    pub aborted_runs: usize,
    /// Iteration indices at which the means below were taken.
    pub checkpoints: Vec<usize>,
    pub per_iteration_mean_residuals: Vec<f64>,
}

/// One-sided comparison of a summary with the convergence guarantee.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoremCheck {
    pub markov_threshold: f64,
    /// `ερ + 3·SE`.
    pub mean_limit: f64,
    pub mean_ok: bool,
    /// `1 − ρ − 3·√(ρ(1−ρ)/R)`.
    pub success_limit: f64,
    pub success_ok: bool,
}

impl TheoremCheck {
    pub fn passed(&self) -> bool {
        self.mean_ok && self.success_ok
    }
}

impl MonteCarloSummary {
    pub fn theorem_check(&self) -> TheoremCheck {
        let threshold = self.epsilon * self.rho;
        let mean_limit = threshold + 3.0 * self.std_error_mean;
        let r = self.replications as f64;
        let success_limit = 1.0 - self.rho - 3.0 * (self.rho * (1.0 - self.rho) / r).sqrt();
        TheoremCheck {
            markov_threshold: threshold,
            mean_limit,
            mean_ok: self.mean_residual_sq <= mean_limit,
            success_limit,
            success_ok: self.success_fraction >= success_limit,
        }
    }
}

/// Evenly spaced iteration indices in `1..=k`, at most [`MAX_CHECKPOINTS`].
pub fn checkpoint_schedule(k: usize) -> Vec<usize> {
    if k <= MAX_CHECKPOINTS {
        (1..=k).collect()
    } else {
        (1..=MAX_CHECKPOINTS).map(|i| i * k / MAX_CHECKPOINTS).collect()
    }
}

fn residual_or_inf(tr: &Trajectory, k: usize) -> f64 {
    tr.residual_at(k).unwrap_or(f64::INFINITY)
}

fn replicate<T, F>(
    obj: &QuadraticObjective,
    base: &RunConfig,
    replications: usize,
    execution: Execution,
    extract: F,
) -> Result<Vec<T>, EngineError>
where
    T: Send,
    F: Fn(&Trajectory) -> T + Sync,
{
    let one = |r: usize| -> Result<T, EngineError> {
        let cfg = RunConfig { seed: base.seed.wrapping_add(r as u64), ..base.clone() };
        engine::run(obj, &cfg).map(|tr| extract(&tr))
    };
    match execution {
        Execution::Parallel => (0..replications).into_par_iter().map(one).collect(),
        Execution::Serial => (0..replications).map(one).collect(),
    }
}

fn mean_and_std_error(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.iter().any(|v| !v.is_finite()) {
        return (f64::INFINITY, f64::INFINITY);
    }
    // shifted by the first value so identical samples give that value exactly
    let shift = values[0];
    let mean = shift + values.iter().map(|v| v - shift).sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs `replications` seeded copies of `base` for `k` iterations and
/// summarises the residual at iteration `k`.
pub fn estimate(
    obj: &QuadraticObjective,
    base: &RunConfig,
    replications: usize,
    epsilon: f64,
    rho: f64,
    k: usize,
) -> Result<MonteCarloSummary, MonteCarloError> {
    estimate_with(obj, base, replications, epsilon, rho, k, Execution::Parallel)
}

pub fn estimate_with(
    obj: &QuadraticObjective,
    base: &RunConfig,
    replications: usize,
    epsilon: f64,
    rho: f64,
    k: usize,
    execution: Execution,
) -> Result<MonteCarloSummary, MonteCarloError> {
    if replications < MIN_REPLICATIONS {
        return Err(MonteCarloError::TooFewReplications(replications));
    }
    if k > base.iterations {
        return Err(MonteCarloError::CutoffExceedsIterations { cutoff: k, iterations: base.iterations });
    }
    if !(epsilon > 0.0 && rho > 0.0 && rho < 1.0) {
        return Err(MonteCarloError::InvalidTarget { epsilon, rho });
    }

    let checkpoints = checkpoint_schedule(k);
    let (finals, curves, aborted): (Vec<f64>, Vec<Vec<f64>>, usize) = if k == 0 {
        base.validate(obj.dim())?;
        let r0 = obj.distance_sq(&base.x0);
        (vec![r0; replications], Vec::new(), 0)
    } else {
        let cfg = RunConfig { iterations: k, ..base.clone() };
        let per_run = replicate(obj, &cfg, replications, execution, |tr| {
            let curve: Vec<f64> = checkpoints.iter().map(|&c| residual_or_inf(tr, c)).collect();
            (residual_or_inf(tr, k), curve, tr.termination.is_aborted())
        })?;
        let aborted = per_run.iter().filter(|(_, _, a)| *a).count();
        let (finals, curves) = per_run.into_iter().map(|(f, c, _)| (f, c)).unzip();
        (finals, curves, aborted)
    };

    let (mean_residual_sq, std_error_mean) = mean_and_std_error(&finals);
    let successes = finals.iter().filter(|&&r| r <= epsilon).count();
    let per_iteration_mean_residuals = (0..checkpoints.len())
        .map(|c| curves.iter().map(|curve| curve[c]).sum::<f64>() / replications as f64)
        .collect();

    Ok(MonteCarloSummary {
        replications,
        epsilon,
        rho,
        iterations_used: k,
        mean_residual_sq,
        success_fraction: successes as f64 / replications as f64,
        std_error_mean,
        aborted_runs: aborted,
        checkpoints,
        per_iteration_mean_residuals,
    })
}

/// Ratio of successive across-replication mean residuals at one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContractionPoint {
    /// `j`; the ratio compares iteration `j + 1` with `j`.
    pub iteration: usize,
    pub mean_before: f64,
    pub mean_after: f64,
    pub ratio: f64,
    /// Delta-method standard error of the ratio of means.
    pub ratio_std_error: f64,
}

/// Measures `mean(r_{j+1}) / mean(r_j)` at `checkpoints` evenly spaced
/// iterations `j ∈ [0, T)`, across `replications` seeded runs of `base`.
pub fn contraction_profile(
    obj: &QuadraticObjective,
    base: &RunConfig,
    replications: usize,
    checkpoints: usize,
) -> Result<Vec<ContractionPoint>, MonteCarloError> {
    if replications < MIN_REPLICATIONS {
        return Err(MonteCarloError::TooFewReplications(replications));
    }
    let total = base.iterations;
    let picks: Vec<usize> = (0..checkpoints.min(total)).map(|i| i * total / checkpoints.min(total)).collect();
    let pairs = replicate(obj, base, replications, Execution::Parallel, |tr| {
        picks
            .iter()
            .map(|&j| (residual_or_inf(tr, j), residual_or_inf(tr, j + 1)))
            .collect::<Vec<_>>()
    })?;

    let r = replications as f64;
    Ok(picks
        .iter()
        .enumerate()
        .map(|(c, &j)| {
            let before: Vec<f64> = pairs.iter().map(|p| p[c].0).collect();
            let after: Vec<f64> = pairs.iter().map(|p| p[c].1).collect();
            let mean_before = before.iter().sum::<f64>() / r;
            let mean_after = after.iter().sum::<f64>() / r;
            let ratio = mean_after / mean_before;
            let var = before
                .iter()
                .zip(&after)
                .map(|(b, a)| (a - ratio * b).powi(2))
                .sum::<f64>()
                / (r - 1.0);
            ContractionPoint {
                iteration: j,
                mean_before,
                mean_after,
                ratio,
                ratio_std_error: (var / r).sqrt() / mean_before,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{self, TheoryInputs};
    use crate::data::synthesize;
    use crate::Vector;

    fn instance() -> QuadraticObjective {
        let p = synthesize(60, 4, 2.0, 21).unwrap();
        QuadraticObjective::build_least_squares(p.design, p.targets).unwrap()
    }

    fn base_cfg(obj: &QuadraticObjective, delta: f64, iterations: usize) -> RunConfig {
        let (t, _) = bounds::optimal_step(obj.lipschitz(), obj.strong_convexity(), obj.dim());
        RunConfig {
            step: t,
            delta,
            iterations,
            seed: 1000,
            x0: Vector::from_element(obj.dim(), 1.0),
            probe: None,
        }
    }

    #[test]
    fn quantization_free_meets_markov_target_at_k_free() {
        let obj = instance();
        let r0 = obj.distance_sq(&Vector::from_element(obj.dim(), 1.0));
        let report = bounds::iteration_bound(&TheoryInputs {
            lipschitz: obj.lipschitz(),
            strong_convexity: obj.strong_convexity(),
            dim: obj.dim(),
            epsilon: 0.01,
            rho: 0.1,
            initial_residual_sq: r0,
        })
        .unwrap();
        let k = report.k_free as usize;
        let summary = estimate(&obj, &base_cfg(&obj, 0.0, k), 200, 0.01, 0.1, k).unwrap();
        assert!(summary.mean_residual_sq <= 0.01 * 0.1, "{summary:?}");
        assert!(summary.theorem_check().passed());
        assert_eq!(summary.checkpoints.len(), k);
    }

    #[test]
    fn deterministic_and_schedule_independent() {
        let obj = instance();
        let cfg = base_cfg(&obj, 0.0, 80);
        let a = estimate(&obj, &cfg, 40, 0.01, 0.1, 80).unwrap();
        let b = estimate(&obj, &cfg, 40, 0.01, 0.1, 80).unwrap();
        let c = estimate_with(&obj, &cfg, 40, 0.01, 0.1, 80, Execution::Serial).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn zero_cutoff_reports_initial_residual() {
        let obj = instance();
        let cfg = base_cfg(&obj, 0.0, 10);
        let r0 = obj.distance_sq(&cfg.x0);
        let s = estimate(&obj, &cfg, 30, 0.01, 0.1, 0).unwrap();
        assert_eq!(s.mean_residual_sq, r0);
        assert_eq!(s.success_fraction, if r0 <= 0.01 { 1.0 } else { 0.0 });
        let s = estimate(&obj, &cfg, 30, r0 * 2.0, 0.1, 0).unwrap();
        assert_eq!(s.success_fraction, 1.0);
    }

    #[test]
    fn precondition_errors() {
        let obj = instance();
        let cfg = base_cfg(&obj, 0.0, 10);
        assert_eq!(
            estimate(&obj, &cfg, 10, 0.01, 0.1, 5),
            Err(MonteCarloError::TooFewReplications(10))
        );
        assert!(matches!(
            estimate(&obj, &cfg, 30, 0.01, 0.1, 11),
            Err(MonteCarloError::CutoffExceedsIterations { .. })
        ));
    }

    #[test]
    fn diverged_runs_count_as_failures() {
        let obj = instance();
        let mut cfg = base_cfg(&obj, 0.0, 2000);
        cfg.step *= 1e3;
        let s = estimate(&obj, &cfg, 30, 0.01, 0.1, 2000).unwrap();
        assert_eq!(s.aborted_runs, 30);
        assert_eq!(s.success_fraction, 0.0);
        assert!(s.mean_residual_sq.is_infinite());
        assert!(!s.theorem_check().passed());
    }

    #[test]
    fn smoothed_means_do_not_increase() {
        let obj = instance();
        let cfg = base_cfg(&obj, 0.0, 300);
        let s = estimate(&obj, &cfg, 300, 0.01, 0.1, 300).unwrap();
        let windows: Vec<f64> = s
            .per_iteration_mean_residuals
            .chunks(10)
            .map(|w| w.iter().sum::<f64>() / w.len() as f64)
            .collect();
        for pair in windows.windows(2) {
            assert!(pair[1] <= pair[0], "{windows:?}");
        }
    }

    #[test]
    fn checkpoints_capped() {
        assert_eq!(checkpoint_schedule(3), vec![1, 2, 3]);
        let long = checkpoint_schedule(50_000);
        assert_eq!(long.len(), MAX_CHECKPOINTS);
        assert_eq!(*long.last().unwrap(), 50_000);
    }

    #[test]
    fn contraction_ratios_below_c_min() {
        let obj = instance();
        let cfg = base_cfg(&obj, 0.0, 150);
        let (_, c_min) = bounds::optimal_step(obj.lipschitz(), obj.strong_convexity(), obj.dim());
        let profile = contraction_profile(&obj, &cfg, 200, 50).unwrap();
        assert_eq!(profile.len(), 50);
        for p in profile {
            assert!(p.ratio <= c_min + 3.0 * p.ratio_std_error, "{p:?}");
        }
    }
}
