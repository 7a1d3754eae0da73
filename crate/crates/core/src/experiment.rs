//! Reproducible experiment runs.
//!
//! A run reads an [`ExperimentConfig`], expands its sweep into cells, fits
//! every method of the experiment in each cell, and writes one directory per
//! cell plus aggregate CSV files. Cell `i` is seeded with
//! `cell_seed(seed, i)`, so a cell's output does not depend on the worker
//! count or on which other cells ran.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::benchmarks::{lorenz_benchmark, DecomposedBenchmarkSpec, LinearBenchmarkSpec, SwitchingBenchmarkSpec};
use crate::error::{Error, Result};
use crate::metrics::{
    eigen_match, evaluate_predictions, matrix_correlation, operator_path_errors, EvalReport,
};
use crate::model::{switch_indices, Dynamics, Model};
use crate::predict::{predict_full_lookahead, predict_ims_series, HistoryClamp};
use crate::rng::cell_seed;
use crate::series::{format_f64, TimeSeries};
use crate::solvers::{
    fit_dad, fit_linocs_dlds, fit_linocs_linear, fit_linocs_ltv, fit_linocs_slds, fit_one_step_ls, match_models,
    DadConfig, DadVariant, DldsFitConfig, LinearFitConfig, LtvFitConfig, SldsFitConfig,
};
use crate::synth::{add_noise, NoiseSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Linear2d,
    LinearStructuredNoise,
    Cylinder3d,
    Slds3,
    DldsPseudoSwitching,
    DldsComplex,
    LtvLorenz,
    Custom,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::Linear2d,
        ExperimentKind::LinearStructuredNoise,
        ExperimentKind::Cylinder3d,
        ExperimentKind::Slds3,
        ExperimentKind::DldsPseudoSwitching,
        ExperimentKind::DldsComplex,
        ExperimentKind::LtvLorenz,
        ExperimentKind::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Linear2d => "linear2d",
            ExperimentKind::LinearStructuredNoise => "linear-structured-noise",
            ExperimentKind::Cylinder3d => "cylinder3d",
            ExperimentKind::Slds3 => "slds3",
            ExperimentKind::DldsPseudoSwitching => "dlds-pseudo-switching",
            ExperimentKind::DldsComplex => "dlds-complex",
            ExperimentKind::LtvLorenz => "ltv-lorenz",
            ExperimentKind::Custom => "custom",
        }
    }

    /// Noise used when the config gives none.
    pub fn default_noise(self) -> NoiseSpec {
        match self {
            ExperimentKind::Linear2d => NoiseSpec::gaussian(0.3, 0),
            ExperimentKind::LinearStructuredNoise => NoiseSpec::sine(0.5, 3.0),
            ExperimentKind::Cylinder3d => NoiseSpec::gaussian(0.4, 0),
            ExperimentKind::Slds3 => NoiseSpec::gaussian(0.1, 0),
            _ => NoiseSpec::gaussian(0.0, 0),
        }
    }

    /// Solver section used when the config gives none.
    pub fn default_solver(self) -> Option<SolverConfig> {
        match self {
            ExperimentKind::Linear2d | ExperimentKind::LinearStructuredNoise | ExperimentKind::Cylinder3d => {
                Some(SolverConfig::Linear(LinearFitConfig::default()))
            }
            ExperimentKind::Slds3 => Some(SolverConfig::Slds(SldsFitConfig::default())),
            ExperimentKind::DldsPseudoSwitching | ExperimentKind::DldsComplex => {
                Some(SolverConfig::Dlds(DldsFitConfig::default()))
            }
            ExperimentKind::LtvLorenz => Some(SolverConfig::Ltv(LtvFitConfig::default())),
            ExperimentKind::Custom => None,
        }
    }

    fn accepts(self, solver: &SolverConfig) -> bool {
        match self {
            ExperimentKind::Custom => true,
            _ => std::mem::discriminant(solver) == std::mem::discriminant(&self.default_solver().expect("built-in")),
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Self::ALL.iter().map(|k| k.name()).collect();
                Error::Config(format!("unknown experiment `{s}` (expected one of {})", names.join(", ")))
            })
    }
}

/// Exactly one solver family, as a `[solver.<family>]` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverConfig {
    Linear(LinearFitConfig),
    Slds(SldsFitConfig),
    Dlds(DldsFitConfig),
    Ltv(LtvFitConfig),
}

/// Lists to cross. An empty list leaves that setting at its configured value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub k_train: Vec<usize>,
    pub k_pred: Vec<usize>,
    pub sigma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    /// The seed inside is ignored: each cell draws noise from its own seed.
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
    #[serde(default)]
    pub solver: Option<SolverConfig>,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Observation CSV for `custom` runs.
    #[serde(default)]
    pub data: Option<PathBuf>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind) -> Self {
        Self {
            experiment,
            seed: 0,
            noise: None,
            solver: None,
            sweep: SweepConfig::default(),
            output_dir: default_output_dir(),
            data: None,
        }
    }

    /// Parses TOML; unknown keys and malformed values are errors that name
    /// the offending line.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Fills every default so the result alone re-runs the experiment.
    pub fn resolved(&self) -> Result<Self> {
        let mut out = self.clone();
        if out.noise.is_none() {
            out.noise = Some(self.experiment.default_noise());
        }
        if out.solver.is_none() {
            out.solver = self.experiment.default_solver();
        }
        match &out.solver {
            None => return Err(Error::Config("a custom experiment needs a [solver.<family>] section".into())),
            Some(s) if !self.experiment.accepts(s) => {
                return Err(Error::Config(format!("experiment {} does not take this solver section", self.experiment)))
            }
            _ => {}
        }
        if self.experiment == ExperimentKind::Custom && out.data.is_none() {
            return Err(Error::Config("a custom experiment needs `data = \"path.csv\"`".into()));
        }
        if self.experiment == ExperimentKind::DldsPseudoSwitching && out.sweep.k_train.is_empty() {
            out.sweep.k_train = vec![1, 10, 35, 50];
        }
        if out.sweep.k_train.contains(&0) && matches!(out.solver, Some(SolverConfig::Dlds(_))) {
            return Err(Error::Config("dLDS k_train counts terms and must be at least 1".into()));
        }
        Ok(out)
    }

    /// Cross product of the sweep lists, row-major in (k_train, k_pred, sigma).
    pub fn cells(&self) -> Vec<CellParams> {
        fn opt<T: Copy>(v: &[T]) -> Vec<Option<T>> {
            if v.is_empty() {
                vec![None]
            } else {
                v.iter().map(|x| Some(*x)).collect()
            }
        }
        let mut cells = Vec::new();
        for k_train in opt(&self.sweep.k_train) {
            for k_pred in opt(&self.sweep.k_pred) {
                for sigma in opt(&self.sweep.sigma) {
                    cells.push(CellParams { k_train, k_pred, sigma });
                }
            }
        }
        cells
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    pub k_train: Option<usize>,
    pub k_pred: Option<usize>,
    pub sigma: Option<f64>,
}

/// Ground truth and observations for one experiment draw.
#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub clean: TimeSeries,
    pub observed: TimeSeries,
    pub truth: Option<Model>,
    /// Long noiseless continuation for horizon tests.
    pub extension: Option<TimeSeries>,
}

/// Draws the benchmark data of a built-in experiment.
pub fn simulate_experiment(kind: ExperimentKind, seed: u64, noise: &NoiseSpec) -> Result<SimulatedData> {
    let noise = NoiseSpec { seed, ..*noise };
    let linear = |spec: LinearBenchmarkSpec| -> Result<SimulatedData> {
        let b = spec.build(seed, &noise)?;
        Ok(SimulatedData {
            clean: b.clean,
            observed: b.observed,
            truth: Some(b.truth.into()),
            extension: Some(b.extension),
        })
    };
    match kind {
        ExperimentKind::Linear2d => linear(LinearBenchmarkSpec::planar()),
        ExperimentKind::LinearStructuredNoise => linear(LinearBenchmarkSpec::structured_noise()),
        ExperimentKind::Cylinder3d => linear(LinearBenchmarkSpec::cylinder()),
        ExperimentKind::Slds3 => {
            let b = SwitchingBenchmarkSpec::default().build(seed, &noise)?;
            Ok(SimulatedData { clean: b.clean, observed: b.observed, truth: Some(b.truth.into()), extension: None })
        }
        ExperimentKind::DldsPseudoSwitching | ExperimentKind::DldsComplex => {
            let spec = if kind == ExperimentKind::DldsComplex {
                DecomposedBenchmarkSpec::recurring()
            } else {
                DecomposedBenchmarkSpec::pseudo_switching()
            };
            let b = spec.build(&noise)?;
            Ok(SimulatedData { clean: b.clean, observed: b.observed, truth: Some(b.truth.into()), extension: None })
        }
        ExperimentKind::LtvLorenz => {
            let clean = lorenz_benchmark(900)?;
            let observed = add_noise(&clean, &noise)?;
            Ok(SimulatedData { clean, observed, truth: None, extension: None })
        }
        ExperimentKind::Custom => Err(Error::Config("custom experiments read their data from a file".into())),
    }
}

/// A sampled curve; value `i` sits at `x = start + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub start: usize,
    pub values: Vec<f64>,
}

impl Curve {
    pub fn new(start: usize, values: Vec<f64>) -> Self {
        Self { start, values }
    }
}

/// One fitted method in a cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub eval: EvalReport,
    /// Family-specific scalars (per-operator correlations, switch counts, ...).
    pub extra: BTreeMap<String, f64>,
    /// Named curves written to `curves.csv`.
    #[serde(skip)]
    pub curves: BTreeMap<String, Curve>,
    pub model: Model,
    #[serde(skip)]
    pub prediction: Option<TimeSeries>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellReport {
    pub experiment: ExperimentKind,
    pub cell: usize,
    pub seed: u64,
    pub params: CellParams,
    pub config: ExperimentConfig,
    pub methods: Vec<MethodReport>,
    pub wall_time_seconds: f64,
}

/// Outcome of a whole run.
#[derive(Debug, Clone, Default)]
pub struct RunSummary {
    pub cells: usize,
    /// `(cell, message)` for every failed cell.
    pub failures: Vec<(usize, String)>,
    pub output_dir: PathBuf,
}

impl RunSummary {
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() {
            0
        } else {
            2
        }
    }
}

fn ims_orders(params: &CellParams) -> Vec<usize> {
    match params.k_pred {
        Some(k) => vec![k],
        None => vec![1, 10, 50],
    }
}

/// Longest IMS order in the error-by-order curve when no `k_pred` is swept.
const IMS_CURVE_ORDERS: usize = 50;

/// IMS error against the reference for orders `1..=max_order`. Early
/// targets are clamped to start at the first observation, so order `k`
/// at time `t < k` uses `t + 1` steps.
fn ims_curve(model: &Model, data: &SimulatedData, max_order: usize) -> Result<Vec<f64>> {
    let horizon = data.observed.horizon();
    (1..=max_order.min(horizon))
        .map(|k| {
            let roll = predict_ims_series(model, &data.observed, k, HistoryClamp::ClampToStart)?;
            let n = roll.valid_len();
            if n < 2 {
                return Ok(f64::NAN);
            }
            let pred = roll.series.values().columns(1, n - 1).into_owned();
            let truth = data.clean.values().columns(1, n - 1).into_owned();
            crate::metrics::mse_matrices(&pred, &truth)
        })
        .collect()
}

fn method(
    name: &str,
    model: Model,
    data: &SimulatedData,
    params: &CellParams,
) -> Result<MethodReport> {
    let mut eval = evaluate_predictions(&model, &data.observed, &data.clean, &ims_orders(params))?;
    let mut extra = BTreeMap::new();
    let mut curves = BTreeMap::new();
    match (&model, &data.truth) {
        (Model::Linear(m), Some(Model::Linear(t))) => {
            eval.operator_frobenius_error = Some((&m.a - &t.a).norm());
            eval.eigen_match_distances = eigen_match(&m.a, &t.a)?;
            if let Some(ext) = &data.extension {
                eval.horizon_steps = Some(crate::metrics::horizon_until_error(m, ext, 1.0)?);
            }
        }
        (Model::Switching(m), Some(Model::Switching(t))) => {
            let pairing = match_models(&m.operators, &t.operators)?;
            let mut total = 0.0;
            for (i, &j) in pairing.iter().enumerate() {
                extra.insert(format!("operator_correlation_{i}"), matrix_correlation(&m.operators[j], &t.operators[i])?);
                total += (&m.operators[j] - &t.operators[i]).norm();
                let d = eigen_match(&m.operators[j], &t.operators[i])?;
                eval.eigen_match_distances.extend(d);
            }
            eval.operator_frobenius_error = Some(total / pairing.len() as f64);
            extra.insert("switch_count".into(), switch_indices(&m.state_path).len() as f64);
            extra.insert("switch_count_truth".into(), switch_indices(&t.state_path).len() as f64);
        }
        (_, Some(t)) if t.steps().is_some() => {
            let steps = data.observed.horizon().min(t.steps().unwrap_or(usize::MAX));
            let errs = operator_path_errors(&model, t, steps)?;
            eval.operator_frobenius_error = Some(errs.iter().sum::<f64>() / errs.len() as f64);
            curves.insert("operator_error".into(), Curve::new(0, errs.clone()));
            eval.operator_errors_per_step = errs;
        }
        _ => {}
    }
    curves.insert(
        "mse_ims_by_order".into(),
        Curve::new(1, ims_curve(&model, data, params.k_pred.unwrap_or(IMS_CURVE_ORDERS))?),
    );
    let roll = predict_full_lookahead(&model, &data.observed.column(0), data.observed.horizon())?;
    Ok(MethodReport {
        method: name.into(),
        eval,
        extra,
        curves,
        model,
        prediction: Some(roll.series),
    })
}

/// Fits and scores every method of the experiment on one cell's data.
pub fn run_cell_methods(
    config: &ExperimentConfig,
    data: &SimulatedData,
    params: &CellParams,
    seed: u64,
) -> Result<Vec<MethodReport>> {
    let obs = &data.observed;
    let solver = config.solver.clone().ok_or_else(|| Error::Config("unresolved config".into()))?;
    let mut out = Vec::new();
    match solver {
        SolverConfig::Linear(mut cfg) => {
            if let Some(k) = params.k_train {
                cfg.max_order = k;
            }
            let fit = fit_linocs_linear(obs, &cfg)?;
            out.push(method("linocs", fit.model.into(), data, params)?);
            if config.experiment != ExperimentKind::Custom {
                out.push(method("one-step", fit_one_step_ls(obs, cfg.with_offset)?.model.into(), data, params)?);
                for (name, v) in [
                    ("dad-full", DadVariant::FullUpdate),
                    ("dad-reweighted", DadVariant::Reweighted),
                    ("dad-reweighted-l2", DadVariant::ReweightedL2),
                ] {
                    let dad = DadConfig { with_offset: cfg.with_offset, ..DadConfig::variant(v) };
                    out.push(method(name, fit_dad(obs, &dad)?.model.into(), data, params)?);
                }
            }
        }
        SolverConfig::Slds(mut cfg) => {
            cfg.seed = seed;
            if let Some(k) = params.k_train {
                cfg.linear.max_order = k;
            }
            let fit = fit_linocs_slds(obs, &cfg)?;
            out.push(method("linocs", fit.model.into(), data, params)?);
            if config.experiment != ExperimentKind::Custom {
                let base = fit_linocs_slds(obs, &cfg.one_step())?;
                out.push(method("one-step", base.model.into(), data, params)?);
            }
        }
        SolverConfig::Dlds(mut cfg) => {
            cfg.seed = seed;
            if let Some(k) = params.k_train {
                cfg.max_order = k - 1;
            }
            let fit = fit_linocs_dlds(obs, &cfg)?;
            let mut m = method("linocs", fit.model.into(), data, params)?;
            m.extra.insert("training_loss".into(), fit.training_loss);
            m.extra.insert("selected_iteration".into(), fit.selected_iteration as f64);
            m.extra.insert("active_order".into(), fit.active_order as f64);
            out.push(m);
        }
        SolverConfig::Ltv(mut cfg) => {
            if let Some(k) = params.k_train {
                cfg.max_order = k;
            }
            let fit = fit_linocs_ltv(obs, &cfg)?;
            let mut m = method("linocs", fit.model.into(), data, params)?;
            m.curves.insert("full_lookahead_mse_by_iteration".into(), Curve::new(0, fit.full_lookahead_history));
            out.push(m);
            if config.experiment != ExperimentKind::Custom {
                for w in [0.1, 2.0, 20.0] {
                    let base = LtvFitConfig { max_iters: cfg.max_iters, ..LtvFitConfig::one_step(w) };
                    let fit = fit_linocs_ltv(obs, &base)?;
                    let mut m = method(&format!("one-step-smooth-{w}"), fit.model.into(), data, params)?;
                    m.curves.insert("full_lookahead_mse_by_iteration".into(), Curve::new(0, fit.full_lookahead_history));
                    out.push(m);
                }
            }
        }
    }
    Ok(out)
}

fn cell_data(config: &ExperimentConfig, params: &CellParams, seed: u64) -> Result<SimulatedData> {
    let noise = config.noise.unwrap_or(config.experiment.default_noise());
    if config.experiment == ExperimentKind::Custom {
        let path = config.data.as_ref().ok_or_else(|| Error::Config("custom run without data".into()))?;
        let observed = TimeSeries::load_csv(path)?;
        return Ok(SimulatedData { clean: observed.clone(), observed, truth: None, extension: None });
    }
    simulate_experiment(config.experiment, seed, &NoiseSpec { seed, ..params.sigma.map_or(noise, |v| noise.with_sigma(v)) })
}

/// Runs one cell without touching the file system.
pub fn run_cell(config: &ExperimentConfig, index: usize) -> Result<(CellReport, SimulatedData)> {
    let resolved = config.resolved()?;
    let cells = resolved.cells();
    let params = *cells.get(index).ok_or(Error::IndexOutOfRange { index, limit: cells.len() })?;
    let seed = cell_seed(resolved.seed, index);
    let start = Instant::now();
    let data = cell_data(&resolved, &params, seed)?;
    let methods = run_cell_methods(&resolved, &data, &params, seed)?;
    let report = CellReport {
        experiment: resolved.experiment,
        cell: index,
        seed,
        params,
        config: resolved,
        methods,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((report, data))
}

fn write_cell(dir: &Path, report: &CellReport, data: &SimulatedData) -> Result<()> {
    fs::create_dir_all(dir)?;
    let json = serde_json::to_string_pretty(report)?;
    fs::write(dir.join("report.json"), json + "\n")?;
    data.clean.save_csv(dir.join("truth.csv"))?;
    data.observed.save_csv(dir.join("observed.csv"))?;
    for m in &report.methods {
        if let Some(pred) = &m.prediction {
            pred.save_csv(dir.join(format!("predicted_{}.csv", m.method)))?;
        }
    }
    Ok(())
}

fn opt_cell<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn scalar_metrics(m: &MethodReport) -> Vec<(String, f64)> {
    let e = &m.eval;
    let mut rows = Vec::new();
    let mut push = |name: &str, v: Option<f64>| {
        if let Some(v) = v {
            rows.push((name.to_string(), v));
        }
    };
    push("mse_one_step", e.mse_one_step);
    for (k, v) in &e.mse_ims {
        push(&format!("mse_ims_{k}"), *v);
    }
    push("mse_full_lookahead", e.mse_full_lookahead);
    push("correlation_full_lookahead", e.correlation_full_lookahead);
    push("operator_frobenius_error", e.operator_frobenius_error);
    push("horizon_steps", e.horizon_steps.map(|h| h as f64));
    for (k, v) in &m.extra {
        push(k, Some(*v));
    }
    rows
}

fn write_aggregates(dir: &Path, reports: &[CellReport]) -> Result<()> {
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    let mut sweep = csv::Writer::from_path(dir.join("sweep.csv")).map_err(io)?;
    sweep
        .write_record(["experiment", "cell", "k_train", "k_pred", "sigma", "method", "metric", "value"])
        .map_err(io)?;
    let mut curves = csv::Writer::from_path(dir.join("curves.csv")).map_err(io)?;
    curves.write_record(["experiment", "cell", "metric", "x", "y"]).map_err(io)?;
    for r in reports {
        for m in &r.methods {
            for (name, v) in scalar_metrics(m) {
                sweep
                    .write_record([
                        r.experiment.name().to_string(),
                        r.cell.to_string(),
                        opt_cell(r.params.k_train),
                        opt_cell(r.params.k_pred),
                        opt_cell(r.params.sigma),
                        m.method.clone(),
                        name,
                        format_f64(v),
                    ])
                    .map_err(io)?;
            }
            let eig = ("eigen_match_distance".to_string(), Curve::new(0, m.eval.eigen_match_distances.clone()));
            let all_curves = m.curves.iter().chain(std::iter::once((&eig.0, &eig.1)));
            for (name, curve) in all_curves {
                for (i, y) in curve.values.iter().enumerate() {
                    let x = curve.start + i;
                    curves
                        .write_record([
                            r.experiment.name().to_string(),
                            r.cell.to_string(),
                            format!("{}.{name}", m.method),
                            x.to_string(),
                            format_f64(*y),
                        ])
                        .map_err(io)?;
                }
            }
        }
    }
    sweep.flush()?;
    curves.flush()?;
    Ok(())
}

/// Runs every cell on a pool of `workers` threads (all cores when `None`)
/// and writes `cell-NNN/` directories, `sweep.csv` and `curves.csv` under
/// the configured output directory. Failed cells leave an `error.json`.
pub fn run_experiment(config: &ExperimentConfig, workers: Option<usize>) -> Result<RunSummary> {
    let resolved = config.resolved()?;
    let out_dir = resolved.output_dir.clone();
    fs::create_dir_all(&out_dir)?;
    let cells = resolved.cells();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let results: Vec<Result<CellReport>> = pool.install(|| {
        (0..cells.len())
            .into_par_iter()
            .map(|i| {
                let (report, data) = run_cell(&resolved, i)?;
                write_cell(&out_dir.join(format!("cell-{i:03}")), &report, &data)?;
                Ok(report)
            })
            .collect()
    });
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(rep) => reports.push(rep),
            Err(e) => {
                let dir = out_dir.join(format!("cell-{i:03}"));
                fs::create_dir_all(&dir)?;
                let record = serde_json::json!({
                    "experiment": resolved.experiment,
                    "cell": i,
                    "seed": cell_seed(resolved.seed, i),
                    "params": cells[i],
                    "error": e.to_string(),
                });
                fs::write(dir.join("error.json"), serde_json::to_string_pretty(&record)? + "\n")?;
                failures.push((i, e.to_string()));
            }
        }
    }
    write_aggregates(&out_dir, &reports)?;
    Ok(RunSummary {
        cells: cells.len(),
        failures,
        output_dir: out_dir,
    })
}
