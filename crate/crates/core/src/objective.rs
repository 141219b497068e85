//! Least-squares objective `f(x) = ½‖Ax − y‖²` with exact smoothness and
//! strong-convexity constants taken from the spectrum of `AᵀA`.

use thiserror::Error;

use crate::linalg::{self, LinalgError};
use crate::{Matrix, Vector};

pub use crate::linalg::symmetric_extreme_eigenvalues;

/// Below this ratio `m / L` the instance is treated as not strongly convex.
pub const SINGULARITY_RATIO: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("invalid shape: design is {rows}x{cols}, targets have length {targets} (need n >= d >= 1)")]
    InvalidShape { rows: usize, cols: usize, targets: usize },
    #[error("non-finite entry in {what} at index {index}")]
    NonFiniteInput { what: &'static str, index: usize },
    #[error("problem is not strongly convex: smallest eigenvalue {min:e} <= 1e-12 * largest {max:e}")]
    SingularProblem { min: f64, max: f64 },
    #[error("normal equations residual {residual:e} exceeds tolerance {tolerance:e}")]
    InaccurateMinimizer { residual: f64, tolerance: f64 },
    #[error("coordinate {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("vector has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// A least-squares instance together with its exact constants.
///
/// Immutable after construction, so it can be shared freely between threads.
#[derive(Debug, Clone)]
pub struct QuadraticObjective {
    design: Matrix,
    targets: Vector,
    lipschitz: f64,
    strong_convexity: f64,
    minimizer: Vector,
}

impl QuadraticObjective {
    /// Builds the instance, computing `L`, `m` as the extreme eigenvalues of
    /// `AᵀA` and `x*` from the normal equations.
    pub fn build_least_squares(design: Matrix, targets: Vector) -> Result<Self, ObjectiveError> {
        let (n, d) = design.shape();
        if d == 0 || n < d || targets.len() != n {
            return Err(ObjectiveError::InvalidShape { rows: n, cols: d, targets: targets.len() });
        }
        if let Some(index) = design.iter().position(|v| !v.is_finite()) {
            return Err(ObjectiveError::NonFiniteInput { what: "design matrix", index });
        }
        if let Some(index) = targets.iter().position(|v| !v.is_finite()) {
            return Err(ObjectiveError::NonFiniteInput { what: "targets", index });
        }

        let gram = design.tr_mul(&design);
        let rhs = design.tr_mul(&targets);
        let (min, max) = symmetric_extreme_eigenvalues(&gram)?;
        if !(max > 0.0) || min <= SINGULARITY_RATIO * max {
            return Err(ObjectiveError::SingularProblem { min, max });
        }

        let mut minimizer = linalg::solve(&gram, &rhs)?;
        // one round of iterative refinement
        let correction = linalg::solve(&gram, &(&rhs - &gram * &minimizer))?;
        minimizer += correction;

        let obj = Self { design, targets, lipschitz: max, strong_convexity: min, minimizer };
        let residual = obj.gradient(&obj.minimizer).norm();
        let tolerance = 1e-8 * (1.0 + rhs.norm());
        if residual > tolerance {
            return Err(ObjectiveError::InaccurateMinimizer { residual, tolerance });
        }
        Ok(obj)
    }

    pub fn design(&self) -> &Matrix {
        &self.design
    }

    pub fn targets(&self) -> &Vector {
        &self.targets
    }

    /// Number of coordinates `d`.
    pub fn dim(&self) -> usize {
        self.design.ncols()
    }

    /// Number of observations `n`.
    pub fn observations(&self) -> usize {
        self.design.nrows()
    }

    /// Smoothness constant `L = λ_max(AᵀA)`.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Strong convexity constant `m = λ_min(AᵀA)`.
    pub fn strong_convexity(&self) -> f64 {
        self.strong_convexity
    }

    /// Condition number `g = L / m`.
    pub fn condition(&self) -> f64 {
        self.lipschitz / self.strong_convexity
    }

    pub fn minimizer(&self) -> &Vector {
        &self.minimizer
    }

    pub fn value(&self, x: &Vector) -> f64 {
        0.5 * self.residual(x).norm_squared()
    }

    /// `Ax − y`.
    pub fn residual(&self, x: &Vector) -> Vector {
        &self.design * x - &self.targets
    }

    /// Full gradient `Aᵀ(Ax − y)`.
    pub fn gradient(&self, x: &Vector) -> Vector {
        let r = self.residual(x);
        Vector::from_iterator(self.dim(), (0..self.dim()).map(|i| self.design.column(i).dot(&r)))
    }

    /// Partial derivative along coordinate `i` (0-based): the column of `A`
    /// owned by node `i` dotted with the current residual.
    pub fn partial_derivative(&self, x: &Vector, i: usize) -> Result<f64, ObjectiveError> {
        if i >= self.dim() {
            return Err(ObjectiveError::IndexOutOfRange { index: i, dim: self.dim() });
        }
        if x.len() != self.dim() {
            return Err(ObjectiveError::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        let r = self.residual(x);
        Ok(self.design.column(i).dot(&r))
    }

    /// `‖x − x*‖²`.
    pub fn distance_sq(&self, x: &Vector) -> f64 {
        (x - &self.minimizer).norm_squared()
    }
}
