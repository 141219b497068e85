use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use qrcd_core::bounds::{self, BoundsError, SufficiencyCheck, TheoryInputs, TheoryReport};
use qrcd_core::data::{format_f64, synthesize, DataError, Dataset, NormalizationStats, SYNTH_NOISE_STD};
use qrcd_core::engine::{self, EngineError, RunConfig, Termination};
use qrcd_core::montecarlo::{self, MonteCarloError, MonteCarloSummary, TheoremCheck};
use qrcd_core::objective::{ObjectiveError, QuadraticObjective};
use qrcd_core::Vector;
use serde::Serialize;

use crate::config::{DataSource, ExperimentConfig, NumOrKeyword};
use crate::error::{Class, CliError};

fn data_error(e: DataError) -> CliError {
    let kind = match &e {
        DataError::ParseError { .. } => "ParseError",
        DataError::MissingColumn(_) => "MissingColumn",
        DataError::EmptyFile(_) => "EmptyFile",
        DataError::TooFewRows { .. } => "TooFewRows",
        DataError::ConstantColumn(_) => "ConstantColumn",
        DataError::InvalidShape(_) => "InvalidShape",
        DataError::Csv(_) => "Csv",
        DataError::Io(_) => "Io",
    };
    CliError::data(kind, e.to_string())
}

fn objective_error(e: ObjectiveError) -> CliError {
    let kind = match &e {
        ObjectiveError::SingularProblem { .. } => "SingularProblem",
        ObjectiveError::InvalidShape { .. } => "InvalidShape",
        ObjectiveError::NonFiniteInput { .. } => "NonFiniteInput",
        ObjectiveError::InaccurateMinimizer { .. } => "InaccurateMinimizer",
        _ => "Objective",
    };
    CliError::data(kind, e.to_string())
}

fn bounds_error(e: BoundsError) -> CliError {
    let kind = match &e {
        BoundsError::InvalidConfidence(_) => "InvalidConfidence",
        BoundsError::InvalidInput(_) => "InvalidInput",
        BoundsError::DegenerateContraction { .. } => "DegenerateContraction",
    };
    CliError::config(kind, e.to_string())
}

fn engine_error(e: EngineError) -> CliError {
    match &e {
        EngineError::NonFinite { .. } => CliError::new(Class::Numeric, "NonFinite", e.to_string()),
        EngineError::LevelOverflow { .. } => CliError::new(Class::Numeric, "LevelOverflow", e.to_string()),
        EngineError::ShadowMismatch { .. } => CliError::new(Class::Numeric, "ShadowMismatch", e.to_string()),
        EngineError::Objective(_) => CliError::data("Objective", e.to_string()),
        _ => CliError::config("InvalidRunConfig", e.to_string()),
    }
}

fn montecarlo_error(e: MonteCarloError) -> CliError {
    match e {
        MonteCarloError::Engine(inner) => engine_error(inner),
        MonteCarloError::TooFewReplications(_) => CliError::config("TooFewReplications", e.to_string()),
        other => CliError::config("InvalidMonteCarlo", other.to_string()),
    }
}

/// Loaded data plus the objective built from it.
struct Problem {
    source: DataSource,
    dataset: Dataset,
    objective: QuadraticObjective,
}

fn load_problem(cfg: &ExperimentConfig) -> Result<Problem, CliError> {
    let source = cfg.data_source()?;
    let raw = match &source {
        DataSource::Csv { path, target } => Dataset::load_csv(path, target).map_err(data_error)?,
        DataSource::Synthetic { n, d, condition, seed } => {
            if *d < 2 || n < d {
                return Err(CliError::config("InvalidShape", format!("synthetic data needs n >= d >= 2, got n = {n}, d = {d}")));
            }
            synthesize(*n, *d, *condition, *seed)
                .and_then(|p| p.to_dataset())
                .map_err(|e| CliError::config("InvalidShape", e.to_string()))?
        }
    };
    let dataset = if cfg.normalize() { raw.normalize().map_err(data_error)? } else { raw };
    let objective = QuadraticObjective::build_least_squares(dataset.with_intercept(), dataset.targets.clone())
        .map_err(objective_error)?;
    Ok(Problem { source, dataset, objective })
}

#[derive(Serialize)]
struct DataInfo<'a> {
    source: &'a DataSource,
    rows: usize,
    dim: usize,
    feature_names: &'a [String],
    target_name: &'a str,
    normalized: bool,
    normalization: Option<&'a NormalizationStats>,
}

#[derive(Serialize)]
struct ObjectiveInfo {
    lipschitz_l: f64,
    strong_convexity_m: f64,
    condition_g: f64,
    x_star: Vec<f64>,
}

impl Problem {
    fn data_info(&self) -> DataInfo<'_> {
        DataInfo {
            source: &self.source,
            rows: self.dataset.rows(),
            dim: self.objective.dim(),
            feature_names: &self.dataset.feature_names,
            target_name: &self.dataset.target_name,
            normalized: self.dataset.normalization.is_some(),
            normalization: self.dataset.normalization.as_ref(),
        }
    }

    fn objective_info(&self) -> ObjectiveInfo {
        ObjectiveInfo {
            lipschitz_l: self.objective.lipschitz(),
            strong_convexity_m: self.objective.strong_convexity(),
            condition_g: self.objective.condition(),
            x_star: self.objective.minimizer().as_slice().to_vec(),
        }
    }

    fn theory_inputs(&self, cfg: &ExperimentConfig, x0: &Vector) -> TheoryInputs {
        TheoryInputs {
            lipschitz: self.objective.lipschitz(),
            strong_convexity: self.objective.strong_convexity(),
            dim: self.objective.dim(),
            epsilon: cfg.epsilon(),
            rho: cfg.rho(),
            initial_residual_sq: self.objective.distance_sq(x0),
        }
    }

    /// Maps a normalized-target prediction back to original units.
    fn denormalize(&self, v: f64) -> f64 {
        self.dataset.normalization.as_ref().map_or(v, |s| s.target.denormalize(v))
    }
}

/// Resolved settings for one engine run.
#[derive(Serialize)]
struct Resolved {
    step_t: f64,
    delta: f64,
    iterations: usize,
    seed: u64,
    x0: Vec<f64>,
    probe: Option<Vec<f64>>,
}

fn resolve_run(cfg: &ExperimentConfig, problem: &Problem) -> Result<(Resolved, TheoryInputs), CliError> {
    let dim = problem.objective.dim();
    let x0 = cfg.x0().resolve(dim, "x0")?.ok_or_else(|| CliError::config("InvalidVector", "x0 cannot be none"))?;
    let probe = cfg.probe().resolve(dim, "probe")?;
    let inputs = problem.theory_inputs(cfg, &Vector::from_vec(x0.clone()));

    let step_t = match cfg.step_t.clone().unwrap_or(NumOrKeyword::Word("opt".into())) {
        NumOrKeyword::Num(t) => t,
        NumOrKeyword::Word(w) if w == "opt" => bounds::optimal_step(inputs.lipschitz, inputs.strong_convexity, dim).0,
        NumOrKeyword::Word(w) => return Err(CliError::config("InvalidStep", format!("step_t must be a number or `opt`, got {w:?}"))),
    };
    let delta = match cfg.delta.clone().unwrap_or(NumOrKeyword::Num(0.0)) {
        NumOrKeyword::Num(d) => d,
        NumOrKeyword::Word(w) if w == "max" => bounds::delta_bound(&inputs).map_err(bounds_error)?,
        NumOrKeyword::Word(w) => return Err(CliError::config("InvalidDelta", format!("delta must be a number or `max`, got {w:?}"))),
    };
    if !(step_t.is_finite() && step_t > 0.0) {
        return Err(CliError::config("InvalidStep", format!("step_t must be > 0, got {step_t}")));
    }
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(CliError::config("InvalidDelta", format!("delta must be >= 0, got {delta}")));
    }
    Ok((Resolved { step_t, delta, iterations: cfg.iterations(), seed: cfg.seed(), x0, probe }, inputs))
}

fn run_config(r: &Resolved, iterations: usize) -> RunConfig {
    RunConfig {
        step: r.step_t,
        delta: r.delta,
        iterations,
        seed: r.seed,
        x0: Vector::from_vec(r.x0.clone()),
        probe: r.probe.clone().map(Vector::from_vec),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::io(path, e))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

/// `trajectory.csv` → `trajectory.json`; `a.json` → `a.json.meta.json`.
fn sidecar(path: &Path, suffix: &str, ext: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = if path.extension().is_some_and(|e| e == ext) && suffix.is_empty() {
        format!("{}.meta.{ext}", path.file_name().unwrap_or_default().to_string_lossy())
    } else {
        format!("{stem}{suffix}.{ext}")
    };
    path.with_file_name(name)
}

pub const TRAJECTORY_HEADER: &str = "iter,coord,raw_partial,q_partial,noise,residual_sq,prediction,prediction_denorm";

#[derive(Serialize)]
struct RunMetadata<'a> {
    command: &'static str,
    config: &'a ExperimentConfig,
    resolved: &'a Resolved,
    data: DataInfo<'a>,
    objective: ObjectiveInfo,
    initial_residual_sq: f64,
    final_residual_sq: f64,
    iterations_completed: usize,
    termination: Termination,
    trajectory_csv: String,
}

pub fn cmd_run(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let problem = load_problem(cfg)?;
    let (resolved, _) = resolve_run(cfg, &problem)?;
    let out = cfg.output_path("trajectory.csv");

    let (records, initial, final_residual, termination) = if resolved.iterations == 0 {
        let r0 = problem.objective.distance_sq(&Vector::from_vec(resolved.x0.clone()));
        (Vec::new(), r0, r0, Termination::Completed)
    } else {
        let tr = engine::run(&problem.objective, &run_config(&resolved, resolved.iterations)).map_err(engine_error)?;
        let final_residual = tr.final_residual_sq();
        (tr.records, tr.initial_residual_sq, final_residual, tr.termination)
    };

    let mut w = create(&out)?;
    let io = |e| CliError::io(&out, e);
    writeln!(w, "{TRAJECTORY_HEADER}").map_err(io)?;
    for r in &records {
        let (pred, denorm) = match r.prediction {
            Some(p) => (format_f64(p), format_f64(problem.denormalize(p))),
            None => (String::new(), String::new()),
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{pred},{denorm}",
            r.iteration,
            r.coordinate + 1,
            format_f64(r.raw_partial),
            format_f64(r.quantized_partial),
            format_f64(r.noise),
            format_f64(r.residual_sq),
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)?;

    let meta = RunMetadata {
        command: "run",
        config: cfg,
        resolved: &resolved,
        data: problem.data_info(),
        objective: problem.objective_info(),
        initial_residual_sq: initial,
        final_residual_sq: final_residual,
        iterations_completed: records.len(),
        termination,
        trajectory_csv: out.display().to_string(),
    };
    write_json(&sidecar(&out, "", "json"), &meta)?;

    match termination {
        Termination::Completed => Ok(()),
        Termination::NonFinite { iteration } => Err(engine_error(EngineError::NonFinite { iteration })),
        Termination::LevelOverflow { iteration } => Err(CliError::new(
            Class::Numeric,
            "LevelOverflow",
            format!("quantizer level overflow at iteration {iteration}"),
        )),
    }
}

#[derive(Serialize)]
struct TheoryOutput<'a> {
    command: &'static str,
    inputs: TheoryInputs,
    config: &'a ExperimentConfig,
    t_opt: f64,
    c_min: f64,
    /// Number, or the string `"unbounded"` when `C_min = 0`.
    delta_max: serde_json::Value,
    k1: Option<u64>,
    k2: Option<u64>,
    k_q: Option<u64>,
    k_free: Option<u64>,
    k1_raw: Option<f64>,
    k2_raw: Option<f64>,
    k_free_raw: Option<f64>,
    markov_threshold: f64,
    sufficiency: Option<SufficiencyCheck>,
    note: Option<String>,
}

fn theory_inputs_from(cfg: &ExperimentConfig) -> Result<TheoryInputs, CliError> {
    let from_data = if cfg.has_data_source() {
        let problem = load_problem(cfg)?;
        let (_, inputs) = resolve_run(&ExperimentConfig { delta: None, ..cfg.clone() }, &problem)?;
        Some(inputs)
    } else {
        None
    };
    let missing = |what: &str| CliError::config("MissingInput", format!("no data source and no --{what}"));
    let inputs = TheoryInputs {
        lipschitz: cfg.lipschitz_l.or(from_data.map(|i| i.lipschitz)).ok_or_else(|| missing("lipschitz-l"))?,
        strong_convexity: cfg
            .strong_convexity_m
            .or(from_data.map(|i| i.strong_convexity))
            .ok_or_else(|| missing("strong-convexity-m"))?,
        dim: cfg.dim.or(from_data.map(|i| i.dim)).ok_or_else(|| missing("dim"))?,
        epsilon: cfg.epsilon(),
        rho: cfg.rho(),
        initial_residual_sq: cfg
            .initial_residual_sq
            .or(from_data.map(|i| i.initial_residual_sq))
            .ok_or_else(|| missing("initial-residual-sq"))?,
    };
    inputs.validate().map_err(bounds_error)?;
    Ok(inputs)
}

pub fn cmd_theory(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let inputs = theory_inputs_from(cfg)?;
    let (t_opt, c_min) = bounds::optimal_step(inputs.lipschitz, inputs.strong_convexity, inputs.dim);
    let output = match bounds::iteration_bound(&inputs) {
        Ok(r) => TheoryOutput {
            command: "theory",
            inputs,
            config: cfg,
            t_opt: r.t_opt,
            c_min: r.c_min,
            delta_max: serde_json::json!(r.delta_max),
            k1: Some(r.k1),
            k2: Some(r.k2),
            k_q: Some(r.k_q),
            k_free: Some(r.k_free),
            k1_raw: Some(r.k1_raw),
            k2_raw: Some(r.k2_raw),
            k_free_raw: Some(r.k_free_raw),
            markov_threshold: r.markov_threshold,
            sufficiency: bounds::sufficiency_check(&inputs).ok(),
            note: None,
        },
        Err(e @ BoundsError::DegenerateContraction { .. }) => TheoryOutput {
            command: "theory",
            inputs,
            config: cfg,
            t_opt,
            c_min,
            delta_max: serde_json::json!("unbounded"),
            k1: None,
            k2: None,
            k_q: None,
            k_free: None,
            k1_raw: None,
            k2_raw: None,
            k_free_raw: None,
            markov_threshold: inputs.markov_threshold(),
            sufficiency: None,
            note: Some(e.to_string()),
        },
        Err(e) => return Err(bounds_error(e)),
    };
    write_json(&cfg.output_path("theory.json"), &output)
}

#[derive(Serialize)]
struct MonteCarloOutput<'a> {
    command: &'static str,
    config: &'a ExperimentConfig,
    resolved: &'a Resolved,
    data: DataInfo<'a>,
    objective: ObjectiveInfo,
    theory: Option<TheoryReport>,
    summary: &'a MonteCarloSummary,
    theorem_check: TheoremCheck,
    passed: bool,
    residuals_csv: String,
}

pub fn cmd_montecarlo(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let replications = cfg.replications.unwrap_or(1000);
    if replications < montecarlo::MIN_REPLICATIONS {
        return Err(montecarlo_error(MonteCarloError::TooFewReplications(replications)));
    }
    let problem = load_problem(cfg)?;
    let (resolved, inputs) = resolve_run(cfg, &problem)?;
    let theory = bounds::iteration_bound(&inputs).ok();
    let k = match cfg.k.clone().unwrap_or(NumOrKeyword::Word("kq".into())) {
        NumOrKeyword::Num(k) if k >= 0.0 && k.fract() == 0.0 => k as usize,
        NumOrKeyword::Word(w) if w == "kq" || w == "kfree" => {
            let report = bounds::iteration_bound(&inputs).map_err(bounds_error)?;
            (if w == "kq" { report.k_q } else { report.k_free }) as usize
        }
        other => return Err(CliError::config("InvalidCutoff", format!("k must be kq, kfree or a non-negative integer, got {other:?}"))),
    };
    let base = run_config(&resolved, k.max(1));
    let summary = montecarlo::estimate(&problem.objective, &base, replications, cfg.epsilon(), cfg.rho(), k)
        .map_err(montecarlo_error)?;

    let out = cfg.output_path("montecarlo.json");
    let residuals = sidecar(&out, "_residuals", "csv");
    let mut w = create(&residuals)?;
    let io = |e| CliError::io(&residuals, e);
    writeln!(w, "iter,mean_residual_sq").map_err(io)?;
    for (it, mean) in summary.checkpoints.iter().zip(&summary.per_iteration_mean_residuals) {
        writeln!(w, "{it},{}", format_f64(*mean)).map_err(io)?;
    }
    w.flush().map_err(io)?;

    let check = summary.theorem_check();
    write_json(
        &out,
        &MonteCarloOutput {
            command: "montecarlo",
            config: cfg,
            resolved: &resolved,
            data: problem.data_info(),
            objective: problem.objective_info(),
            theory,
            summary: &summary,
            theorem_check: check,
            passed: check.passed(),
            residuals_csv: residuals.display().to_string(),
        },
    )
}

#[derive(Serialize)]
struct SynthMetadata {
    command: &'static str,
    n: usize,
    d: usize,
    condition_target: f64,
    seed: u64,
    noise_std: f64,
    true_coefficients: Vec<f64>,
    achieved_condition: f64,
    lipschitz_l: f64,
    strong_convexity_m: f64,
    csv: String,
}

pub fn cmd_synth(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let n = cfg.synth_n.ok_or_else(|| CliError::config("MissingInput", "synth requires --synth-n"))?;
    let d = cfg.synth_d.ok_or_else(|| CliError::config("MissingInput", "synth requires --synth-d"))?;
    let condition = cfg.synth_condition.unwrap_or(1.0);
    let seed = cfg.synth_seed.unwrap_or(0);
    if d < 2 || n < d {
        return Err(CliError::config("InvalidShape", format!("synth needs n >= d >= 2, got n = {n}, d = {d}")));
    }
    let problem = synthesize(n, d, condition, seed).map_err(|e| CliError::config("InvalidShape", e.to_string()))?;
    let objective = QuadraticObjective::build_least_squares(problem.design.clone(), problem.targets.clone())
        .map_err(objective_error)?;

    let out = cfg.output_path("synth.csv");
    let dataset = problem.to_dataset().map_err(data_error)?;
    let w = create(&out)?;
    dataset.write_csv(w).map_err(|e| CliError::io(&out, e))?;

    write_json(
        &sidecar(&out, "", "json"),
        &SynthMetadata {
            command: "synth",
            n,
            d,
            condition_target: condition,
            seed,
            noise_std: SYNTH_NOISE_STD,
            true_coefficients: problem.true_coefficients.as_slice().to_vec(),
            achieved_condition: objective.condition(),
            lipschitz_l: objective.lipschitz(),
            strong_convexity_m: objective.strong_convexity(),
            csv: out.display().to_string(),
        },
    )
}
