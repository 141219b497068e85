//! Closed-form convergence quantities for quantized randomized coordinate
//! descent on an `L`-smooth, `m`-strongly convex objective with `d`
//! coordinates. Logarithms are natural throughout.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("InvalidConfidence: rho must lie in (0, 1), got {0}")]
    InvalidConfidence(f64),
    #[error("InvalidInput: {0}")]
    InvalidInput(String),
    #[error("DegenerateContraction: C_min = 0 (g = {condition}, d = {dim}); the quantization bound is unbounded")]
    DegenerateContraction { condition: f64, dim: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoryInputs {
    pub lipschitz: f64,
    pub strong_convexity: f64,
    pub dim: usize,
    pub epsilon: f64,
    pub rho: f64,
    /// `‖x₀ − x*‖²`.
    pub initial_residual_sq: f64,
}

impl TheoryInputs {
    pub fn validate(&self) -> Result<(), BoundsError> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(BoundsError::InvalidInput(format!("{name} must be finite and > 0, got {v}")))
            }
        };
        positive("L", self.lipschitz)?;
        positive("m", self.strong_convexity)?;
        positive("epsilon", self.epsilon)?;
        positive("initial_residual_sq", self.initial_residual_sq)?;
        if self.dim == 0 {
            return Err(BoundsError::InvalidInput("d must be >= 1".into()));
        }
        if self.lipschitz < self.strong_convexity {
            return Err(BoundsError::InvalidInput(format!(
                "L ({}) must be >= m ({})",
                self.lipschitz, self.strong_convexity
            )));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(BoundsError::InvalidConfidence(self.rho));
        }
        Ok(())
    }

    pub fn condition(&self) -> f64 {
        self.lipschitz / self.strong_convexity
    }

    /// Markov threshold `ερ`.
    pub fn markov_threshold(&self) -> f64 {
        self.epsilon * self.rho
    }
}

/// Every quantity of the convergence theorem for one set of inputs.
///
/// `*_raw` fields hold the real-valued expressions before ceiling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoryReport {
    pub t_opt: f64,
    pub c_min: f64,
    pub delta_max: f64,
    pub k1: u64,
    pub k2: u64,
    pub k_q: u64,
    pub k_free: u64,
    pub k1_raw: f64,
    pub k2_raw: f64,
    pub k_free_raw: f64,
    pub markov_threshold: f64,
}

/// `C = t²L²d − 2tm + 1`, the per-iteration contraction of `E‖x − x*‖²`.
pub fn contraction_constant(step: f64, lipschitz: f64, strong_convexity: f64, dim: usize) -> f64 {
    step * step * lipschitz * lipschitz * dim as f64 - 2.0 * step * strong_convexity + 1.0
}

/// Step size minimising `C` and the minimum itself:
/// `t_opt = 1/(gLd)`, `C_min = 1 − 1/(g²d)`.
pub fn optimal_step(lipschitz: f64, strong_convexity: f64, dim: usize) -> (f64, f64) {
    let g = lipschitz / strong_convexity;
    let d = dim as f64;
    (1.0 / (g * lipschitz * d), 1.0 - 1.0 / (g * g * d))
}

/// Largest quantization resolution for which convergence is guaranteed:
/// `Δ_max = (ερL²/2m)(1/C_min − 1)`.
pub fn delta_bound(inputs: &TheoryInputs) -> Result<f64, BoundsError> {
    inputs.validate()?;
    let (_, c_min) = optimal_step(inputs.lipschitz, inputs.strong_convexity, inputs.dim);
    if c_min <= 0.0 {
        return Err(BoundsError::DegenerateContraction {
            condition: inputs.condition(),
            dim: inputs.dim,
        });
    }
    let l = inputs.lipschitz;
    Ok(inputs.markov_threshold() * l * l / (2.0 * inputs.strong_convexity) * (1.0 / c_min - 1.0))
}

/// Rounds an iteration count up, treating anything within 1e-9 of an
/// integer as that integer and clamping negative counts to zero.
fn ceil_count(raw: f64) -> u64 {
    if raw.is_nan() || raw <= 0.0 {
        0
    } else {
        (raw - 1e-9).ceil().max(0.0) as u64
    }
}

/// Full theorem report: step size, contraction, `Δ_max` and the iteration
/// bounds `k₁`, `k₂`, `k^q = k₁ + k₂` and the quantization-free `k`.
///
/// `k₂` only covers the phase that brings `‖x − x*‖` below one, so it is
/// zero whenever `‖x₀ − x*‖² ≤ 1`.
pub fn iteration_bound(inputs: &TheoryInputs) -> Result<TheoryReport, BoundsError> {
    let delta_max = delta_bound(inputs)?;
    let (t_opt, c_min) = optimal_step(inputs.lipschitz, inputs.strong_convexity, inputs.dim);
    let er = inputs.markov_threshold();
    let r0 = inputs.initial_residual_sq;
    let log_inv_c = -(c_min.ln());

    let k1_raw = (2.0 * r0 / er).ln() / log_inv_c;
    let shrunk = c_min + er / 2.0 * (1.0 - c_min);
    let k2_raw = (2.0 * r0).ln() / -(shrunk.ln());
    let k_free_raw = (r0 / er).ln() / log_inv_c;

    let k1 = ceil_count(k1_raw);
    let k2 = if r0 <= 1.0 { 0 } else { ceil_count(k2_raw) };
    Ok(TheoryReport {
        t_opt,
        c_min,
        delta_max,
        k1,
        k2,
        k_q: k1 + k2,
        k_free: ceil_count(k_free_raw),
        k1_raw,
        k2_raw,
        k_free_raw,
        markov_threshold: er,
    })
}

/// Markov reduction: a mean squared residual of at most `ερ` certifies
/// `Pr(‖x − x*‖² ≤ ε) ≥ 1 − ρ`.
pub fn markov_check(epsilon: f64, rho: f64, mean_residual_sq: f64) -> bool {
    mean_residual_sq <= epsilon * rho
}

/// Both side conditions the resolution bound is meant to imply, evaluated at
/// `t = t_opt`, `C = C_min`, `Δ = Δ_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SufficiencyCheck {
    pub delta_max: f64,
    /// `(C/(1−C))·tdΔ(1 + tdΔ/4)`, required `≤ ερ/2`.
    pub noise_floor: f64,
    pub noise_floor_limit: f64,
    pub noise_floor_holds: bool,
    /// `C·t²d²Δ²/(4(1−C))`, required `≤ 1/2`.
    pub far_phase_floor: f64,
    pub far_phase_holds: bool,
}

impl SufficiencyCheck {
    pub fn holds(&self) -> bool {
        self.noise_floor_holds && self.far_phase_holds
    }
}

pub fn sufficiency_check(inputs: &TheoryInputs) -> Result<SufficiencyCheck, BoundsError> {
    let delta = delta_bound(inputs)?;
    let (t, c) = optimal_step(inputs.lipschitz, inputs.strong_convexity, inputs.dim);
    let tdd = t * inputs.dim as f64 * delta;
    let noise_floor = c / (1.0 - c) * tdd * (1.0 + tdd / 4.0);
    let noise_floor_limit = inputs.markov_threshold() / 2.0;
    let far_phase_floor = c * tdd * tdd / (4.0 * (1.0 - c));
    Ok(SufficiencyCheck {
        delta_max: delta,
        noise_floor,
        noise_floor_limit,
        noise_floor_holds: noise_floor <= noise_floor_limit,
        far_phase_floor,
        far_phase_holds: far_phase_floor <= 0.5,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_inputs() -> TheoryInputs {
        TheoryInputs {
            lipschitz: 2.0,
            strong_convexity: 1.0,
            dim: 5,
            epsilon: 0.01,
            rho: 0.1,
            initial_residual_sq: 4.0,
        }
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn contraction_examples() {
        assert_eq!(contraction_constant(1.0, 1.0, 1.0, 1), 0.0);
        assert!(rel(contraction_constant(0.05, 2.0, 1.0, 5), 0.95) < 1e-12);
        assert_eq!(contraction_constant(0.0, 3.0, 1.0, 4), 1.0);
    }

    #[test]
    fn optimal_step_examples() {
        assert_eq!(optimal_step(1.0, 1.0, 1), (1.0, 0.0));
        let (t, c) = optimal_step(2.0, 1.0, 5);
        assert!(rel(t, 0.05) < 1e-12 && rel(c, 0.95) < 1e-12);
        let (t, c) = optimal_step(4.0, 1.0, 2);
        assert_eq!(t, 0.03125);
        assert_eq!(c, 0.96875);
    }

    #[test]
    fn optimal_step_is_argmin() {
        for &(l, m, d) in &[(2.0, 1.0, 5), (4.0, 1.0, 2), (10.0, 0.5, 3), (1.0, 1.0, 7)] {
            let (t, c) = optimal_step(l, m, d);
            assert!(rel(contraction_constant(t, l, m, d), c) < 1e-12 || c == 0.0);
            assert!(contraction_constant(t + 1e-6, l, m, d) > c);
            assert!(contraction_constant(t - 1e-6, l, m, d) > c);
        }
    }

    #[test]
    fn c_min_increases_with_condition_and_dim() {
        for d in 1..10 {
            let mut prev = optimal_step(1.0, 1.0, d).1;
            for g in [1.5, 2.0, 4.0, 10.0] {
                let c = optimal_step(g, 1.0, d).1;
                assert!(c > prev);
                prev = c;
            }
            assert!(optimal_step(3.0, 1.0, d + 1).1 > optimal_step(3.0, 1.0, d).1);
        }
    }

    #[test]
    fn delta_bound_example_and_linearity() {
        let inputs = reference_inputs();
        let delta = delta_bound(&inputs).unwrap();
        assert!(rel(delta, 1.052_631_578_947_368_4e-4) < 1e-12);

        let doubled = TheoryInputs { rho: 0.2, ..inputs };
        assert!(rel(delta_bound(&doubled).unwrap(), 2.0 * delta) < 1e-12);
        let tiny = TheoryInputs { epsilon: 1e-12, ..inputs };
        assert!(delta_bound(&tiny).unwrap() < 1e-13);
    }

    #[test]
    fn degenerate_contraction() {
        let inputs = TheoryInputs { lipschitz: 1.0, strong_convexity: 1.0, dim: 1, ..reference_inputs() };
        assert!(matches!(delta_bound(&inputs), Err(BoundsError::DegenerateContraction { .. })));
        assert!(matches!(iteration_bound(&inputs), Err(BoundsError::DegenerateContraction { .. })));
    }

    #[test]
    fn invalid_confidence() {
        for rho in [0.0, 1.0, 1.5, -0.1, f64::NAN] {
            let inputs = TheoryInputs { rho, ..reference_inputs() };
            assert!(matches!(iteration_bound(&inputs), Err(BoundsError::InvalidConfidence(_))));
        }
    }

    #[test]
    fn iteration_bound_example() {
        // frozen from a 40-digit evaluation of the closed forms
        let report = iteration_bound(&reference_inputs()).unwrap();
        assert!(rel(report.k1_raw, 175.211_924_442_959_31) < 1e-9);
        assert!(rel(report.k2_raw, 40.561_031_379_239_674) < 1e-9);
        assert!(rel(report.k_free_raw, 161.698_517_108_994_43) < 1e-9);
        assert_eq!((report.k1, report.k2, report.k_q, report.k_free), (176, 41, 217, 162));
        assert!(rel(report.markov_threshold, 1e-3) < 1e-12);
    }

    #[test]
    fn start_inside_target_needs_no_first_phase() {
        let inputs = TheoryInputs { initial_residual_sq: 0.0005, ..reference_inputs() };
        let report = iteration_bound(&inputs).unwrap();
        assert_eq!(report.k1, 0);
        assert_eq!(report.k2, 0);
        assert_eq!(report.k_free, 0);
    }

    #[test]
    fn k_free_never_exceeds_k_q() {
        for l in [1.0, 1.5, 3.0, 20.0] {
            for d in [1, 2, 5, 17] {
                for r0 in [1e-4, 0.5, 1.0, 4.0, 1e3] {
                    for (eps, rho) in [(0.01, 0.1), (1.0, 0.5), (1e-5, 0.9)] {
                        let inputs = TheoryInputs {
                            lipschitz: l,
                            strong_convexity: 1.0,
                            dim: d,
                            epsilon: eps,
                            rho,
                            initial_residual_sq: r0,
                        };
                        match iteration_bound(&inputs) {
                            Ok(r) => {
                                assert!(r.k_free <= r.k_q, "{inputs:?}");
                                assert!(r.delta_max.is_finite() && r.delta_max >= 0.0);
                                assert!((0.0..1.0).contains(&r.c_min));
                            }
                            Err(BoundsError::DegenerateContraction { .. }) => assert_eq!((l, d), (1.0, 1)),
                            Err(e) => panic!("{e}"),
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn markov_examples() {
        assert!(markov_check(0.01, 0.1, 0.0009));
        assert!(!markov_check(0.01, 0.1, 0.0011));
        assert!(markov_check(0.01, 0.1, 0.01 * 0.1));
    }

    #[test]
    fn sufficiency_reports_both_conditions() {
        let check = sufficiency_check(&reference_inputs()).unwrap();
        assert!(check.far_phase_holds);
        // the first condition overshoots by exactly the factor (1 + tdΔ/4)
        let (t, _) = optimal_step(2.0, 1.0, 5);
        let tdd = t * 5.0 * check.delta_max;
        assert!(rel(check.noise_floor, check.noise_floor_limit * (1.0 + tdd / 4.0)) < 1e-12);
        assert!(!check.noise_floor_holds);
    }
}
