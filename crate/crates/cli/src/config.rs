//! Experiment configuration shared by every subcommand. Values come from
//! flags, then from an optional TOML file passed with `--config`, then from
//! built-in defaults.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Environment variable naming the directory for relative output paths.
pub const OUT_DIR_ENV: &str = "QRCD_OUT_DIR";

/// A number or a keyword such as `opt`, `max`, `kq`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NumOrKeyword {
    Num(f64),
    Word(String),
}

impl FromStr for NumOrKeyword {
    type Err = std::convert::Infallible;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(s.trim().parse::<f64>().map_or_else(|_| Self::Word(s.trim().to_string()), Self::Num))
    }
}

/// `ones`, `zeros`, `none`, or an explicit comma-separated list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VectorSpec {
    List(Vec<f64>),
    Word(String),
}

impl FromStr for VectorSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s {
            "ones" | "zeros" | "none" => Ok(Self::Word(s.to_string())),
            _ => s
                .split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|e| format!("bad vector entry {t:?}: {e}")))
                .collect::<Result<Vec<_>, _>>()
                .map(Self::List),
        }
    }
}

impl VectorSpec {
    /// `Ok(None)` for `none`.
    pub fn resolve(&self, dim: usize, what: &str) -> Result<Option<Vec<f64>>, CliError> {
        match self {
            Self::Word(w) if w == "ones" => Ok(Some(vec![1.0; dim])),
            Self::Word(w) if w == "zeros" => Ok(Some(vec![0.0; dim])),
            Self::Word(w) if w == "none" => Ok(None),
            Self::Word(w) => Err(CliError::config("InvalidVector", format!("{what}: unknown keyword {w:?}"))),
            Self::List(v) if v.len() == dim => Ok(Some(v.clone())),
            Self::List(v) => Err(CliError::config(
                "DimensionMismatch",
                format!("{what} has {} entries, problem dimension is {dim}", v.len()),
            )),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// CSV data source (header row required)
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Target column name for --csv
    #[arg(long)]
    pub target: Option<String>,
    /// Synthetic data source: number of rows
    #[arg(long)]
    pub synth_n: Option<usize>,
    /// Synthetic data source: dimension d including the intercept
    #[arg(long)]
    pub synth_d: Option<usize>,
    /// Synthetic data source: condition number g of AᵀA
    #[arg(long)]
    pub synth_condition: Option<f64>,
    /// Synthetic data source: generator seed
    #[arg(long)]
    pub synth_seed: Option<u64>,
    /// Z-score features and target before fitting [default: true]
    #[arg(long)]
    pub normalize: Option<bool>,
    /// Step size t, or `opt` for 1/(gLd) [default: opt]
    #[arg(long)]
    pub step_t: Option<NumOrKeyword>,
    /// Quantizer resolution Δ (0 disables quantization), or `max` [default: 0]
    #[arg(long)]
    pub delta: Option<NumOrKeyword>,
    /// Iteration count T [default: 200000]
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Coordinate-draw seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Initial point: ones | zeros | comma-separated list [default: ones]
    #[arg(long)]
    pub x0: Option<VectorSpec>,
    /// Probe input for predictions: ones | none | list [default: ones]
    #[arg(long)]
    pub probe: Option<VectorSpec>,
    /// Accuracy ε [default: 0.01]
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Confidence ρ in (0, 1) [default: 0.1]
    #[arg(long)]
    pub rho: Option<f64>,
    /// Explicit smoothness constant L (theory)
    #[arg(long)]
    pub lipschitz_l: Option<f64>,
    /// Explicit strong convexity constant m (theory)
    #[arg(long)]
    pub strong_convexity_m: Option<f64>,
    /// Explicit dimension d (theory)
    #[arg(long)]
    pub dim: Option<usize>,
    /// Explicit ‖x0 − x*‖² (theory)
    #[arg(long)]
    pub initial_residual_sq: Option<f64>,
    /// Monte Carlo replications R [default: 1000]
    #[arg(long)]
    pub replications: Option<usize>,
    /// Monte Carlo iteration cutoff: kq | kfree | integer [default: kq]
    #[arg(long)]
    pub k: Option<NumOrKeyword>,
    /// Output file (relative paths resolve against $QRCD_OUT_DIR)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($field:ident),+ $(,)?) => {
        ExperimentConfig { $($field: $top.$field.or($base.$field)),+ }
    };
}

impl ExperimentConfig {
    /// Fields set in `self` win over `file`.
    pub fn over(self, file: ExperimentConfig) -> ExperimentConfig {
        overlay!(
            file, self, csv, target, synth_n, synth_d, synth_condition, synth_seed, normalize,
            step_t, delta, iterations, seed, x0, probe, epsilon, rho, lipschitz_l,
            strong_convexity_m, dim, initial_residual_sq, replications, k, out,
        )
    }

    pub fn load_file(path: &Path) -> Result<ExperimentConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config("ConfigFile", format!("{}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::config("ConfigFile", format!("{}: {}", path.display(), e.message())))
    }

    pub fn normalize(&self) -> bool {
        self.normalize.unwrap_or(true)
    }

    pub fn iterations(&self) -> usize {
        self.iterations.unwrap_or(200_000)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon.unwrap_or(0.01)
    }

    pub fn rho(&self) -> f64 {
        self.rho.unwrap_or(0.1)
    }

    pub fn x0(&self) -> VectorSpec {
        self.x0.clone().unwrap_or(VectorSpec::Word("ones".into()))
    }

    pub fn probe(&self) -> VectorSpec {
        self.probe.clone().unwrap_or(VectorSpec::Word("ones".into()))
    }

    pub fn has_data_source(&self) -> bool {
        self.csv.is_some() || self.has_synthetic_source()
    }

    fn has_synthetic_source(&self) -> bool {
        self.synth_n.is_some() || self.synth_d.is_some() || self.synth_condition.is_some()
    }

    pub fn data_source(&self) -> Result<DataSource, CliError> {
        match (&self.csv, self.has_synthetic_source()) {
            (Some(_), true) => Err(CliError::config(
                "DataSource",
                "give either --csv or synthetic parameters, not both",
            )),
            (Some(path), false) => Ok(DataSource::Csv {
                path: path.clone(),
                target: self.target.clone().ok_or_else(|| {
                    CliError::config("DataSource", "--csv requires --target")
                })?,
            }),
            (None, true) => Ok(DataSource::Synthetic {
                n: self.synth_n.ok_or_else(|| CliError::config("DataSource", "missing --synth-n"))?,
                d: self.synth_d.ok_or_else(|| CliError::config("DataSource", "missing --synth-d"))?,
                condition: self.synth_condition.unwrap_or(1.0),
                seed: self.synth_seed.unwrap_or(0),
            }),
            (None, false) => Err(CliError::config(
                "DataSource",
                "no data source: give --csv/--target or --synth-n/--synth-d",
            )),
        }
    }

    /// Output path, resolved against `$QRCD_OUT_DIR` when relative.
    pub fn output_path(&self, default: &str) -> PathBuf {
        let path = self.out.clone().unwrap_or_else(|| PathBuf::from(default));
        match std::env::var_os(OUT_DIR_ENV) {
            Some(dir) if path.is_relative() => PathBuf::from(dir).join(path),
            _ => path,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Csv { path: PathBuf, target: String },
    Synthetic { n: usize, d: usize, condition: f64, seed: u64 },
}
