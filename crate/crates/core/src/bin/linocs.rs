//! Command-line front end over the `linocs` library.
//!
//! Exit status: 0 on success, 1 on bad input or a failed command, 2 when a
//! sweep finished with some failed cells.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use linocs::experiment::{run_experiment, simulate_experiment, ExperimentConfig, ExperimentKind, SweepConfig};
use linocs::metrics::{evaluate_predictions, operator_path_errors, EvalReport};
use linocs::model::{switch_indices, Dynamics, Model};
use linocs::numerics::eigenvalues;
use linocs::predict::{predict, PredictionMode, PredictionRequest};
use linocs::solvers::{
    fit_dad, fit_linocs_dlds, fit_linocs_linear, fit_linocs_ltv, fit_linocs_slds, fit_one_step_ls, DadConfig,
    DadVariant, DldsFitConfig, LinearFitConfig, LtvFitConfig, SldsFitConfig,
};
use linocs::synth::NoiseSpec;
use linocs::{Error, Result, TimeSeries};

#[derive(Parser)]
#[command(name = "linocs", version, about = "Fit and evaluate lookahead-weighted linear dynamical models")]
struct Cli {
    /// Worker threads for sweeps and restarts (all cores when unset).
    #[arg(long, global = true, env = "LINOCS_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a benchmark series and its ground truth.
    Simulate(SimulateArgs),
    /// Fit a model to an observation CSV.
    Fit(FitArgs),
    /// Predict from a fitted model.
    Predict(PredictArgs),
    /// Score a fitted model on a series.
    Evaluate(EvaluateArgs),
    /// Run a built-in experiment or a TOML experiment config.
    Reproduce(ReproduceArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    experiment: ExperimentKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Noise level; keeps the experiment's noise family.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value = "simulated")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Linear,
    Slds,
    Dlds,
    Ltv,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Method {
    Linocs,
    OneStep,
    DadFull,
    #[value(alias = "dad-reweighted")]
    DadReweigh,
    #[value(alias = "dad-reweighted-l2")]
    DadReweighL2,
}

#[derive(Args)]
struct FitArgs {
    /// Observation CSV.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    model: Family,
    #[arg(long, value_enum, default_value = "linocs")]
    method: Method,
    /// Lookahead depth: the largest order for linear, switching and
    /// time-varying fits, the number of terms for decomposed fits.
    #[arg(long = "K")]
    k: Option<usize>,
    /// Number of switching states or basis operators.
    #[arg(long = "J")]
    j: Option<usize>,
    #[arg(long)]
    w_smooth: Option<f64>,
    #[arg(long)]
    n_zeros: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Fit affine offsets.
    #[arg(long)]
    offset: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output JSON (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    OneStep,
    Ims,
    FullLookahead,
}

#[derive(Args)]
struct PredictArgs {
    /// Model JSON written by `fit` or `simulate`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "full-lookahead")]
    mode: Mode,
    /// IMS order.
    #[arg(long, default_value_t = 1)]
    order: usize,
    /// First column to predict from; output rows count from here.
    #[arg(long, default_value_t = 0)]
    start: usize,
    /// Output CSV (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Observations driving the predictions.
    #[arg(long)]
    data: PathBuf,
    /// Clean series to score against; the observations when omitted.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Ground-truth model JSON for operator errors.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 10, 50])]
    orders: Vec<usize>,
}

#[derive(Args)]
struct ReproduceArgs {
    /// Built-in experiment; optional when `--config` is given.
    experiment: Option<ExperimentKind>,
    /// Experiment TOML. Flags below override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    k_train: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    k_pred: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    sigma: Vec<f64>,
    /// Observation CSV for `custom`.
    #[arg(long)]
    data: Option<PathBuf>,
}

/// Model plus whatever the fit reports alongside it.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    model: Model,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    method: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    switch_indices: Option<Vec<usize>>,
    /// Per-step eigenvalues of the applied operator, as `[re, im]` pairs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    eigenvalue_traces: Option<Vec<Vec<[f64; 2]>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    diagnostics: Option<serde_json::Value>,
}

impl ModelFile {
    fn new(model: Model, method: Option<String>) -> Result<Self> {
        let switch_indices = match &model {
            Model::Switching(m) => Some(switch_indices(&m.state_path)),
            _ => None,
        };
        let eigenvalue_traces = match &model {
            Model::Decomposed(_) | Model::TimeVarying(_) => {
                let steps = model.steps().unwrap_or(0);
                let mut traces = Vec::with_capacity(steps);
                for t in 0..steps {
                    let (a, _) = model.transition_at(t)?;
                    traces.push(eigenvalues(&a).iter().map(|z| [z.re, z.im]).collect());
                }
                Some(traces)
            }
            _ => None,
        };
        Ok(Self { model, method, switch_indices, eigenvalue_traces, diagnostics: None })
    }
}

/// Accepts a `ModelFile` or a bare model.
fn load_model(path: &Path) -> Result<Model> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Either {
        File(Box<ModelFile>),
        Bare(Model),
    }
    let text = fs::read_to_string(path)?;
    match serde_json::from_str::<Either>(&text) {
        Ok(Either::File(f)) => Ok(f.model),
        Ok(Either::Bare(m)) => Ok(m),
        Err(_) => Err(Error::Config(format!("{}: not a model JSON file", path.display()))),
    }
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(p, text)?;
        }
        None => print_stdout(text)?,
    }
    Ok(())
}

/// Writes to stdout, treating a closed pipe as success.
fn print_stdout(text: &str) -> Result<()> {
    use std::io::Write;
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn load_series(path: &Path) -> Result<TimeSeries> {
    TimeSeries::load_csv(path).map_err(|e| match e {
        Error::Io(io) => Error::Config(format!("{}: {io}", path.display())),
        Error::Parse { row, message } => Error::Config(format!("{}: row {row}: {message}", path.display())),
        other => other,
    })
}

fn simulate(args: SimulateArgs) -> Result<()> {
    if args.experiment == ExperimentKind::Custom {
        return Err(Error::Config("custom experiments have no generator".into()));
    }
    let mut noise = args.experiment.default_noise();
    if let Some(s) = args.sigma {
        noise = noise.with_sigma(s);
    }
    let data = simulate_experiment(args.experiment, args.seed, &noise)?;
    fs::create_dir_all(&args.out)?;
    data.observed.save_csv(args.out.join("observed.csv"))?;
    data.clean.save_csv(args.out.join("truth.csv"))?;
    if let Some(ext) = &data.extension {
        ext.save_csv(args.out.join("extension.csv"))?;
    }
    if let Some(model) = data.truth {
        #[derive(Serialize)]
        struct Sidecar<'a> {
            experiment: ExperimentKind,
            seed: u64,
            noise: NoiseSpec,
            #[serde(flatten)]
            file: &'a ModelFile,
        }
        let file = ModelFile::new(model, None)?;
        let sidecar = Sidecar { experiment: args.experiment, seed: args.seed, noise: NoiseSpec { seed: args.seed, ..noise }, file: &file };
        fs::write(args.out.join("truth.json"), serde_json::to_string_pretty(&sidecar)? + "\n")?;
    }
    eprintln!("wrote {}", args.out.display());
    Ok(())
}

fn fit(args: FitArgs) -> Result<()> {
    let obs = load_series(&args.data)?;
    let one_step = args.method == Method::OneStep;
    if !matches!(args.model, Family::Linear) && !matches!(args.method, Method::Linocs | Method::OneStep) {
        return Err(Error::Config("DAD baselines fit only linear models".into()));
    }
    let name = args.method.to_possible_value().map(|v| v.get_name().to_string());
    let (model, diagnostics): (Model, serde_json::Value) = match args.model {
        Family::Linear => {
            let fit = match args.method {
                Method::OneStep => fit_one_step_ls(&obs, args.offset)?,
                Method::Linocs => {
                    let mut cfg = LinearFitConfig { with_offset: args.offset, ..LinearFitConfig::default() };
                    if let Some(k) = args.k {
                        cfg.max_order = k;
                    }
                    if let Some(n) = args.max_iters {
                        cfg.max_iters = n;
                    }
                    fit_linocs_linear(&obs, &cfg)?
                }
                dad => {
                    let variant = match dad {
                        Method::DadFull => DadVariant::FullUpdate,
                        Method::DadReweigh => DadVariant::Reweighted,
                        _ => DadVariant::ReweightedL2,
                    };
                    let mut cfg = DadConfig { with_offset: args.offset, ..DadConfig::variant(variant) };
                    if let Some(n) = args.max_iters {
                        cfg.iterations = n;
                    }
                    fit_dad(&obs, &cfg)?
                }
            };
            let diag = serde_json::json!({
                "iterations": fit.iterations,
                "converged": fit.converged,
                "degenerate": fit.degenerate,
                "objective": fit.objective,
            });
            (fit.model.into(), diag)
        }
        Family::Slds => {
            let mut cfg = SldsFitConfig { seed: args.seed, ..SldsFitConfig::default() };
            cfg.linear.with_offset = args.offset;
            if let Some(j) = args.j {
                cfg.states = j;
            }
            if let Some(k) = args.k {
                cfg.linear.max_order = k;
            }
            if let Some(n) = args.max_iters {
                cfg.outer_iters = n;
            }
            if one_step {
                cfg = cfg.one_step();
            }
            let fit = fit_linocs_slds(&obs, &cfg)?;
            let diag = serde_json::json!({
                "outer_iterations": fit.outer_iterations,
                "residual": fit.residual,
            });
            (fit.model.into(), diag)
        }
        Family::Dlds => {
            let mut cfg = DldsFitConfig { seed: args.seed, ..DldsFitConfig::default() };
            if let Some(j) = args.j {
                cfg.operators = j;
            }
            if let Some(k) = args.k {
                if k == 0 {
                    return Err(Error::Config("--K counts lookahead terms and must be at least 1".into()));
                }
                cfg.max_order = k - 1;
            }
            if let Some(n) = args.max_iters {
                cfg.max_iters = n;
            }
            if one_step {
                cfg.max_order = 0;
            }
            let fit = fit_linocs_dlds(&obs, &cfg)?;
            let diag = serde_json::json!({
                "iterations": fit.iterations,
                "selected_iteration": fit.selected_iteration,
                "active_order": fit.active_order,
                "training_loss": fit.training_loss,
                "degenerate": fit.degenerate,
                "unconverged_steps": fit.unconverged_steps,
            });
            (fit.model.into(), diag)
        }
        Family::Ltv => {
            let mut cfg = LtvFitConfig { with_offset: args.offset, ..LtvFitConfig::default() };
            if let Some(k) = args.k {
                cfg.max_order = k;
            }
            if let Some(w) = args.w_smooth {
                cfg.w_smooth = w;
            }
            if let Some(n) = args.n_zeros {
                cfg.n_zeros = n;
            }
            if let Some(n) = args.max_iters {
                cfg.max_iters = n;
            }
            if one_step {
                cfg.max_order = 0;
            }
            let fit = fit_linocs_ltv(&obs, &cfg)?;
            let diag = serde_json::json!({
                "iterations": fit.iterations,
                "degenerate": fit.degenerate,
                "active_order": fit.active_order,
                "full_lookahead_mse_by_iteration": fit.full_lookahead_history,
            });
            (fit.model.into(), diag)
        }
    };
    let mut file = ModelFile::new(model, name)?;
    file.diagnostics = Some(diagnostics);
    write_or_print(args.out.as_deref(), &(serde_json::to_string_pretty(&file)? + "\n"))
}

fn run_predict(args: PredictArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let obs = load_series(&args.data)?;
    let mode = match args.mode {
        Mode::OneStep => PredictionMode::OneStep,
        Mode::Ims => PredictionMode::Ims(args.order),
        Mode::FullLookahead => PredictionMode::FullLookahead,
    };
    let roll = predict(&model, &obs, PredictionRequest { mode, start_index: args.start })?;
    if let Some(t) = roll.diverged_at {
        eprintln!("warning: prediction diverged at column {t}");
    }
    let mut buf = Vec::new();
    roll.series.write_csv(&mut buf)?;
    write_or_print(args.out.as_deref(), &String::from_utf8_lossy(&buf))
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let obs = load_series(&args.data)?;
    let reference = match &args.reference {
        Some(p) => load_series(p)?,
        None => obs.clone(),
    };
    let mut report: EvalReport = evaluate_predictions(&model, &obs, &reference, &args.orders)?;
    if let Some(p) = &args.truth {
        let truth = load_model(p)?;
        // Time-invariant pairs have a single operator to compare.
        let steps = match (truth.steps(), model.steps()) {
            (None, None) => 1,
            (a, b) => obs.horizon().min(a.unwrap_or(usize::MAX)).min(b.unwrap_or(usize::MAX)),
        };
        let errs = operator_path_errors(&model, &truth, steps)?;
        if !errs.is_empty() {
            report.operator_frobenius_error = Some(errs.iter().sum::<f64>() / errs.len() as f64);
        }
        report.operator_errors_per_step = errs;
    }
    print_stdout(&(serde_json::to_string_pretty(&report)? + "\n"))?;
    Ok(())
}

fn reproduce(args: ReproduceArgs, workers: Option<usize>) -> Result<i32> {
    let mut config = match (&args.config, args.experiment) {
        (Some(p), _) => ExperimentConfig::load(p)?,
        (None, Some(kind)) => ExperimentConfig::new(kind),
        (None, None) => return Err(Error::Config("name an experiment or pass --config".into())),
    };
    if let (Some(kind), Some(_)) = (args.experiment, &args.config) {
        if kind != config.experiment {
            return Err(Error::Config(format!("--config runs {}, not {kind}", config.experiment)));
        }
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    config.output_dir = args.out.unwrap_or_else(|| {
        if args.config.is_some() {
            config.output_dir.clone()
        } else {
            PathBuf::from("results").join(config.experiment.name())
        }
    });
    let sweep = SweepConfig { k_train: args.k_train, k_pred: args.k_pred, sigma: args.sigma };
    if !sweep.k_train.is_empty() {
        config.sweep.k_train = sweep.k_train;
    }
    if !sweep.k_pred.is_empty() {
        config.sweep.k_pred = sweep.k_pred;
    }
    if !sweep.sigma.is_empty() {
        config.sweep.sigma = sweep.sigma;
    }
    if args.data.is_some() {
        config.data = args.data;
    }
    let summary = run_experiment(&config, workers)?;
    for (cell, msg) in &summary.failures {
        eprintln!("cell {cell} failed: {msg}");
    }
    eprintln!(
        "{} of {} cells completed, results in {}",
        summary.cells - summary.failures.len(),
        summary.cells,
        summary.output_dir.display()
    );
    Ok(summary.exit_code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    let workers = cli.workers;
    if let Some(n) = workers {
        // Restarts inside a single fit use the global pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let outcome = match cli.command {
        Command::Simulate(a) => simulate(a).map(|_| 0),
        Command::Fit(a) => fit(a).map(|_| 0),
        Command::Predict(a) => run_predict(a).map(|_| 0),
        Command::Evaluate(a) => evaluate(a).map(|_| 0),
        Command::Reproduce(a) => reproduce(a, workers),
    };
    match outcome {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
