//! Regression datasets: CSV ingestion, z-score normalization, intercept
//! augmentation, and seeded synthetic instances with a prescribed condition
//! number.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use nalgebra::linalg::{Cholesky, QR};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::Serialize;
use thiserror::Error;

use crate::{Matrix, Vector};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("ParseError: row {row}, column '{column}': cannot parse {value:?} as a finite number")]
    ParseError { row: usize, column: String, value: String },
    #[error("MissingColumn: no column named '{0}' in header")]
    MissingColumn(String),
    #[error("EmptyFile: {0}")]
    EmptyFile(String),
    #[error("TooFewRows: {rows} rows for {features} features (need at least features + 1)")]
    TooFewRows { rows: usize, features: usize },
    #[error("ConstantColumn: column '{0}' has zero variance")]
    ConstantColumn(String),
    #[error("InvalidShape: {0}")]
    InvalidShape(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Mean and sample standard deviation of one column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ColumnStats {
    pub mean: f64,
    pub std: f64,
}

impl ColumnStats {
    pub fn denormalize(&self, v: f64) -> f64 {
        v * self.std + self.mean
    }
}

/// Statistics needed to map normalized values back to original units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalizationStats {
    /// Divisor used for the standard deviation; always `"n-1"`.
    pub std_divisor: &'static str,
    pub features: Vec<ColumnStats>,
    pub target: ColumnStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub target_name: String,
    /// `n × p`, without the intercept column.
    pub features: Matrix,
    pub targets: Vector,
    pub normalization: Option<NormalizationStats>,
}

impl Dataset {
    pub fn new(
        feature_names: Vec<String>,
        target_name: String,
        features: Matrix,
        targets: Vector,
    ) -> Result<Self, DataError> {
        let (n, p) = features.shape();
        if feature_names.len() != p || targets.len() != n {
            return Err(DataError::InvalidShape(format!(
                "{} names for {p} columns, {} targets for {n} rows",
                feature_names.len(),
                targets.len()
            )));
        }
        if n < p + 1 {
            return Err(DataError::TooFewRows { rows: n, features: p });
        }
        Ok(Self { feature_names, target_name, features, targets, normalization: None })
    }

    pub fn rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn num_features(&self) -> usize {
        self.features.ncols()
    }

    /// Reads a headed CSV file, splitting out `target_column`.
    pub fn load_csv(path: impl AsRef<Path>, target_column: &str) -> Result<Self, DataError> {
        Self::from_reader(File::open(path)?, target_column)
    }

    pub fn from_reader<R: Read>(reader: R, target_column: &str) -> Result<Self, DataError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
            return Err(DataError::EmptyFile("no header row".into()));
        }
        let target_idx = headers
            .iter()
            .position(|h| h == target_column)
            .ok_or_else(|| DataError::MissingColumn(target_column.to_string()))?;

        let mut feature_rows: Vec<f64> = Vec::new();
        let mut targets = Vec::new();
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            for (col, cell) in record.iter().enumerate() {
                let value = cell.trim();
                let parsed = value.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                    DataError::ParseError {
                        row: row + 1,
                        column: headers.get(col).cloned().unwrap_or_else(|| col.to_string()),
                        value: value.to_string(),
                    }
                })?;
                if col == target_idx {
                    targets.push(parsed);
                } else {
                    feature_rows.push(parsed);
                }
            }
        }
        if targets.is_empty() {
            return Err(DataError::EmptyFile("header present but no data rows".into()));
        }

        let feature_names: Vec<String> = headers
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != target_idx)
            .map(|(_, h)| h.clone())
            .collect();
        let n = targets.len();
        let features = Matrix::from_row_slice(n, feature_names.len(), &feature_rows);
        Self::new(feature_names, target_column.to_string(), features, Vector::from_vec(targets))
    }

    /// Z-scores every feature column and the target using the sample
    /// standard deviation. Statistics compose with any earlier normalization
    /// so de-normalization always returns to the original units.
    pub fn normalize(&self) -> Result<Self, DataError> {
        let n = self.rows();
        if n < 2 {
            return Err(DataError::TooFewRows { rows: n, features: self.num_features() });
        }
        let stats = |values: &[f64], name: &str| -> Result<ColumnStats, DataError> {
            let mean = values.iter().sum::<f64>() / n as f64;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let std = var.sqrt();
            if !(std > 1e-12) {
                return Err(DataError::ConstantColumn(name.to_string()));
            }
            Ok(ColumnStats { mean, std })
        };

        let mut features = self.features.clone();
        let mut feature_stats = Vec::with_capacity(self.num_features());
        for (j, name) in self.feature_names.iter().enumerate() {
            let mut col = features.column_mut(j);
            let s = stats(col.as_slice(), name)?;
            col.apply(|v| *v = (*v - s.mean) / s.std);
            feature_stats.push(s);
        }
        let target_stats = stats(self.targets.as_slice(), &self.target_name)?;
        let targets = self.targets.map(|v| (v - target_stats.mean) / target_stats.std);

        let compose = |prev: Option<ColumnStats>, new: ColumnStats| match prev {
            Some(p) => ColumnStats { mean: p.mean + p.std * new.mean, std: p.std * new.std },
            None => new,
        };
        let prev = self.normalization.as_ref();
        let normalization = NormalizationStats {
            std_divisor: "n-1",
            features: feature_stats
                .iter()
                .enumerate()
                .map(|(j, &s)| compose(prev.map(|p| p.features[j]), s))
                .collect(),
            target: compose(prev.map(|p| p.target), target_stats),
        };

        Ok(Self {
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
            features,
            targets,
            normalization: Some(normalization),
        })
    }

    /// Design matrix with a leading column of ones: `n × (p + 1)`.
    pub fn with_intercept(&self) -> Matrix {
        let n = self.rows();
        let p = self.num_features();
        Matrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { self.features[(i, j - 1)] })
    }

    /// Writes the dataset back out in the format [`Dataset::load_csv`] reads,
    /// with 17 significant digits per value.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = self.feature_names.clone();
        header.push(self.target_name.clone());
        w.write_record(&header)?;
        for i in 0..self.rows() {
            let mut row: Vec<String> =
                (0..self.num_features()).map(|j| format_f64(self.features[(i, j)])).collect();
            row.push(format_f64(self.targets[i]));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Fixed 17-significant-digit formatting used by every numeric output.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Seeded synthetic least-squares instance.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticProblem {
    /// `n × d`, first column all ones.
    pub design: Matrix,
    pub targets: Vector,
    pub true_coefficients: Vector,
}

impl SyntheticProblem {
    /// The instance as a dataset whose intercept augmentation reproduces
    /// `design`. Features are named `f1..f(d−1)`, the target `y`.
    pub fn to_dataset(&self) -> Result<Dataset, DataError> {
        let d = self.design.ncols();
        let names = (1..d).map(|j| format!("f{j}")).collect();
        let features = self.design.columns(1, d - 1).into_owned();
        Dataset::new(names, "y".into(), features, self.targets.clone())
    }
}

/// Standard deviation of the additive target noise.
pub const SYNTH_NOISE_STD: f64 = 0.1;

/// Builds `A = U·R` with `U` an `n × d` orthonormal frame whose first column
/// is `1/√n`, and `R` the Cholesky factor of `V·Λ·Vᵀ`. The eigenvalues `Λ`
/// are geometrically spaced with ratio `condition_target` and scaled so the
/// `(1,1)` entry of `AᵀA` equals `n`; hence the first column of `A` is all
/// ones and `λ_max(AᵀA)/λ_min(AᵀA) = condition_target`.
///
/// Targets are `A·x_true + N(0, 0.1²)` with `x_true ~ N(0, I)`.
pub fn synthesize(
    n: usize,
    d: usize,
    condition_target: f64,
    seed: u64,
) -> Result<SyntheticProblem, DataError> {
    if d < 2 || n < d {
        return Err(DataError::InvalidShape(format!("need n >= d >= 2, got n = {n}, d = {d}")));
    }
    if !(condition_target.is_finite() && condition_target >= 1.0) {
        return Err(DataError::InvalidShape(format!(
            "condition target must be finite and >= 1, got {condition_target}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gaussian = |rows: usize, cols: usize| {
        Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    };

    // Orthonormal frame with the constant direction first.
    let mut seed_frame = gaussian(n, d);
    seed_frame.column_mut(0).fill(1.0);
    let mut frame = QR::new(seed_frame).q();
    if frame[(0, 0)] < 0.0 {
        frame.column_mut(0).neg_mut();
    }

    // Eigenbasis whose first row is a random unit vector w: Householder
    // reflector taking e₁ to w, then a random rotation of the other rows.
    let mut w: Vector = gaussian(d, 1).column(0).into_owned();
    w.normalize_mut();
    if w[0] < 0.0 {
        w.neg_mut();
    }
    let mut u = -w.clone();
    u[0] += 1.0;
    let reflector = if u.norm() > 1e-12 {
        let u = u.normalize();
        Matrix::identity(d, d) - 2.0 * &u * u.transpose()
    } else {
        Matrix::identity(d, d)
    };
    let mut rotate = Matrix::identity(d, d);
    let tail = QR::new(gaussian(d - 1, d - 1)).q();
    rotate.view_mut((1, 1), (d - 1, d - 1)).copy_from(&tail);
    let basis = rotate * reflector;

    let mut eigenvalues = Vector::from_fn(d, |i, _| {
        if d == 1 { 1.0 } else { condition_target.powf(i as f64 / (d - 1) as f64) }
    });
    let weighted: f64 = (0..d).map(|i| basis[(0, i)].powi(2) * eigenvalues[i]).sum();
    eigenvalues *= n as f64 / weighted;

    let gram = &basis * Matrix::from_diagonal(&eigenvalues) * basis.transpose();
    let gram = (&gram + gram.transpose()) * 0.5;
    let chol = Cholesky::new(gram)
        .ok_or_else(|| DataError::InvalidShape("synthetic Gram matrix is not positive definite".into()))?;
    let upper = chol.l().transpose();
    let mut design = frame * upper;
    design.column_mut(0).fill(1.0);

    let true_coefficients: Vector = gaussian(d, 1).column(0).into_owned();
    let noise = Normal::new(0.0, SYNTH_NOISE_STD).expect("valid noise std");
    let clean = &design * &true_coefficients;
    let targets = clean.map(|v| v + noise.sample(&mut rng));

    Ok(SyntheticProblem { design, targets, true_coefficients })
}
