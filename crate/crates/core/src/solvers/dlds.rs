//! Decomposed fits: sparse per-step coefficients over a shared operator
//! basis, with coefficients chosen against every active lookahead order.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::model::{combine_operators, DecomposedModel};
use crate::numerics::{solve_l1_gram, solve_least_squares_detailed, L1Options, RidgeProblem};
use crate::predict::DIVERGENCE_LIMIT;
use crate::rng;
use crate::series::TimeSeries;
use crate::weights::{ScheduleKind, WeightSchedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DldsFitConfig {
    pub operators: usize,
    pub max_order: usize,
    pub max_iters: usize,
    /// Operators are refit every this many iterations.
    pub operator_update_every: usize,
    pub l1: f64,
    pub l1_decay: f64,
    /// Multiplies `l1` in every coefficient solve.
    pub l1_scale: f64,
    pub l2: f64,
    pub l2_decay: f64,
    pub smooth_time: f64,
    /// Per-iteration growth of `smooth_time`.
    pub smooth_growth: f64,
    /// Std of the jitter added to coefficient warm starts while training.
    pub warm_start_noise: f64,
    pub normalize_operators: bool,
    /// Orders added each iteration until `max_order` is reached.
    pub order_step: usize,
    /// Iterations fit with the one-step term only before orders start growing.
    pub warmup_iters: usize,
    pub schedule: ScheduleKind,
    /// One more coefficient sweep after the last operator update.
    pub final_sweep: bool,
    /// Return the iterate with the lowest training loss at the highest order
    /// reached instead of the last one.
    pub keep_best: bool,
    /// Independent fits from different random bases; the one with the lowest
    /// training loss is kept.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for DldsFitConfig {
    fn default() -> Self {
        Self {
            operators: 3,
            max_order: 50,
            max_iters: 200,
            operator_update_every: 5,
            l1: 2.5,
            l1_decay: 0.9999,
            l1_scale: 0.01,
            l2: 0.0,
            l2_decay: 0.99,
            smooth_time: 0.1,
            smooth_growth: 1.01,
            warm_start_noise: 0.05,
            normalize_operators: true,
            order_step: 1,
            warmup_iters: 100,
            schedule: ScheduleKind::ExponentialDecay { sigma_w: 0.01 },
            final_sweep: true,
            keep_best: true,
            restarts: 4,
            seed: 0,
        }
    }
}

impl DldsFitConfig {
    pub fn with_order(max_order: usize) -> Self {
        Self {
            max_order,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.operators == 0 {
            return Err(Error::InvalidArgument("need at least one basis operator".into()));
        }
        if self.operator_update_every == 0 || self.order_step == 0 || self.restarts == 0 {
            return Err(Error::InvalidArgument("update cadence, order step and restarts must be at least 1".into()));
        }
        let weights = [
            self.l1,
            self.l1_decay,
            self.l1_scale,
            self.l2,
            self.l2_decay,
            self.smooth_time,
            self.smooth_growth,
            self.warm_start_noise,
        ];
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument("dLDS weights must be finite and >= 0".into()));
        }
        WeightSchedule::new(self.schedule, self.max_order).map(|_| ())
    }
}

#[derive(Debug, Clone)]
pub struct DldsFit {
    pub model: DecomposedModel,
    pub iterations: usize,
    /// Set when an operator refit hit a rank-deficient regressor.
    pub degenerate: bool,
    /// Steps whose last coefficient solve stopped at the iteration cap.
    pub unconverged_steps: usize,
    /// Mean squared error per lookahead order from the last sweep.
    pub order_errors: Vec<f64>,
    /// Highest order with non-zero weight at the end.
    pub active_order: usize,
    /// Squared-weight average of `order_errors` over the active orders.
    pub training_loss: f64,
    /// Iteration the returned model comes from; `iterations` means the final sweep.
    pub selected_iteration: usize,
}

/// One consistent (basis, coefficients) pair with the errors of the sweep
/// that produced the coefficients.
struct Snapshot {
    ops: Vec<DMatrix<f64>>,
    coefficients: DMatrix<f64>,
    order_errors: Vec<f64>,
    unconverged: usize,
    loss: f64,
    active: usize,
    iteration: usize,
}

impl Snapshot {
    fn beats(&self, other: &Snapshot) -> bool {
        self.active > other.active || (self.active == other.active && self.loss < other.loss)
    }
}

fn training_loss(weights: &[f64], errors: &[f64]) -> f64 {
    let (num, den) = weights
        .iter()
        .zip(errors)
        .filter(|(w, e)| **w > 0.0 && e.is_finite())
        .fold((0.0, 0.0), |(n, d), (w, e)| (n + w * w * e, d + w * w));
    if den > 0.0 {
        num / den
    } else {
        f64::INFINITY
    }
}

/// Stacked dictionary for one step: block `k` holds `w_k [f_1 l_k, .., f_J l_k]`
/// and the target stacks `w_k x_next`. Orders with zero weight are skipped.
pub fn build_stacked_dictionary(
    operators: &[DMatrix<f64>],
    lookaheads: &[DVector<f64>],
    next: &DVector<f64>,
    weights: &[f64],
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if operators.is_empty() {
        return Err(Error::InvalidArgument("need at least one operator".into()));
    }
    let p = next.len();
    let used: Vec<usize> = (0..lookaheads.len().min(weights.len())).filter(|&k| weights[k] != 0.0).collect();
    let j = operators.len();
    let mut design = DMatrix::zeros(used.len() * p, j);
    let mut target = DVector::zeros(used.len() * p);
    for (block, &k) in used.iter().enumerate() {
        let w = weights[k];
        if lookaheads[k].len() != p {
            return Err(dim_err("lookahead length differs from state dimension"));
        }
        for (col, f) in operators.iter().enumerate() {
            let v = f * &lookaheads[k] * w;
            design.view_mut((block * p, col), (p, 1)).copy_from(&v);
        }
        target.rows_mut(block * p, p).copy_from(&(next * w));
    }
    Ok((design, target))
}

/// Regularization in force for one coefficient solve.
#[derive(Debug, Clone, Copy)]
pub struct CoefficientPenalty {
    pub l1: f64,
    pub l2: f64,
    pub smooth: f64,
}

/// Solves for one coefficient vector against a stacked dictionary;
/// smoothness pulls toward `previous`.
/// Returns the solution and whether the solver converged.
pub fn update_coefficients(
    design: &DMatrix<f64>,
    target: &DVector<f64>,
    penalty: CoefficientPenalty,
    previous: Option<&DVector<f64>>,
    warm_start: Option<&DVector<f64>>,
    fallback: Option<&DVector<f64>>,
) -> Result<(DVector<f64>, bool)> {
    let j = design.ncols();
    let mut gram = design.transpose() * design;
    let mut dty = design.transpose() * target;
    let mut yty = target.norm_squared();
    if let (Some(prev), true) = (previous, penalty.smooth > 0.0) {
        for i in 0..j {
            gram[(i, i)] += penalty.smooth;
        }
        dty += prev * penalty.smooth;
        yty += prev.norm_squared() * penalty.smooth;
    }
    let opts = L1Options { max_iters: 5000, tol: 1e-10, accelerated: false };
    let sol = solve_l1_gram(&gram, &dty, yty, penalty.l1, penalty.l2, warm_start, opts)?;
    // Never return something worse than the incumbent.
    if let Some(f) = fallback {
        let obj = 0.5 * (f.dot(&(&gram * f)) - 2.0 * f.dot(&dty) + yty) + penalty.l1 * f.lp_norm(1) + penalty.l2 * f.norm_squared();
        if obj < sol.objective {
            return Ok((f.clone(), sol.converged));
        }
    }
    Ok((sol.coefficients, sol.converged))
}

/// Least-squares refit of the whole basis against fixed coefficients, with
/// regressor `[c_1t x_t; ..; c_Jt x_t]`. When `normalize` is set, each
/// operator is scaled to unit Frobenius norm and its coefficient row absorbs
/// the norm, so every combined operator is unchanged.
pub fn update_operators(
    obs: &TimeSeries,
    coefficients: &mut DMatrix<f64>,
    normalize: bool,
) -> Result<(Vec<DMatrix<f64>>, bool)> {
    let p = obs.dim();
    let j = coefficients.nrows();
    let t_len = obs.horizon();
    if coefficients.ncols() != t_len {
        return Err(dim_err(format!("{} coefficient columns for {t_len} transitions", coefficients.ncols())));
    }
    let x = obs.values();
    let design = DMatrix::from_fn(t_len, p * j, |t, col| coefficients[(col / p, t)] * x[(col % p, t)]);
    let targets = x.columns(1, t_len).transpose();
    let ls = solve_least_squares_detailed(&RidgeProblem::new(design, targets, 0.0))?;
    // Coefficients are (pJ) x p, the transpose of [f_1 .. f_J].
    let mut ops: Vec<DMatrix<f64>> = (0..j)
        .map(|jj| ls.coefficients.rows(jj * p, p).transpose())
        .collect();
    if normalize {
        for (jj, f) in ops.iter_mut().enumerate() {
            let n = f.norm();
            if n > 0.0 {
                *f /= n;
                let mut row = coefficients.row_mut(jj);
                row *= n;
            }
        }
    }
    Ok((ops, ls.degenerate))
}

fn random_operators(p: usize, j: usize, seed: u64) -> Vec<DMatrix<f64>> {
    let mut rng = rng::stream(seed, "dlds-init-operators");
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    (0..j)
        .map(|_| {
            let f = DMatrix::from_fn(p, p, |_, _| normal.sample(&mut rng));
            let n = f.norm();
            f / n
        })
        .collect()
}

/// Per-step least squares on the one-step dictionary.
fn initial_coefficients(obs: &TimeSeries, ops: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let x = obs.values();
    let mut c = DMatrix::zeros(ops.len(), obs.horizon());
    for t in 0..obs.horizon() {
        let (d, y) = build_stacked_dictionary(ops, &[x.column(t).into_owned()], &x.column(t + 1).into_owned(), &[1.0])?;
        let sol = solve_least_squares_detailed(&RidgeProblem::new(d, DMatrix::from_column_slice(y.len(), 1, y.as_slice()), 0.0))?;
        c.set_column(t, &sol.coefficients.column(0));
    }
    Ok(c)
}

struct SweepSettings<'a> {
    weights: &'a [f64],
    penalty: CoefficientPenalty,
    jitter: Option<(&'a mut rng::StreamRng, Normal<f64>)>,
}

/// Ascending coefficient sweep. Lookaheads at step `t` are rolled forward
/// with the coefficients already updated in this sweep. Returns the number
/// of unconverged solves and the mean squared error per order.
fn sweep(
    obs: &TimeSeries,
    ops: &[DMatrix<f64>],
    coefficients: &mut DMatrix<f64>,
    settings: SweepSettings<'_>,
) -> Result<(usize, Vec<f64>)> {
    let SweepSettings { weights, penalty, mut jitter } = settings;
    let x = obs.values();
    let k_max = weights.len() - 1;
    let mut err_sum = vec![0.0; k_max + 1];
    let mut err_count = vec![0usize; k_max + 1];
    let mut unconverged = 0;
    let mut looks: Vec<DVector<f64>> = vec![x.column(0).into_owned()];
    for t in 0..obs.horizon() {
        let next = x.column(t + 1).into_owned();
        let (design, target) = build_stacked_dictionary(ops, &looks, &next, weights)?;
        let current = coefficients.column(t).into_owned();
        let previous = (t > 0).then(|| coefficients.column(t - 1).into_owned());
        let warm = match jitter.as_mut() {
            Some((rng, normal)) => current.map(|v| v + normal.sample(*rng)),
            None => current.clone(),
        };
        let (c, converged) = update_coefficients(&design, &target, penalty, previous.as_ref(), Some(&warm), Some(&current))?;
        if !converged {
            unconverged += 1;
        }
        coefficients.set_column(t, &c);

        let step = combine_operators(ops, &c);
        let mut rolled = Vec::with_capacity(looks.len().min(k_max) + 1);
        rolled.push(next.clone());
        for (k, l) in looks.iter().enumerate() {
            let pred = &step * l;
            err_sum[k] += (&next - &pred).norm_squared();
            err_count[k] += 1;
            if k < k_max {
                if pred.amax() > DIVERGENCE_LIMIT || pred.iter().any(|v| !v.is_finite()) {
                    break;
                }
                rolled.push(pred);
            }
        }
        looks = rolled;
    }
    let errors = err_sum
        .iter()
        .zip(&err_count)
        .map(|(s, &n)| if n > 0 { s / n as f64 } else { f64::INFINITY })
        .collect();
    Ok((unconverged, errors))
}

/// Alternating fit. Operators start as normalized Gaussian matrices and
/// coefficients as per-step least squares. Each iteration sweeps the
/// coefficients with the active orders, refits the operators on cadence,
/// grows the active order and applies the regularization decays.
/// With `restarts > 1` the fits run in parallel, restart `r > 0` seeded by
/// `cell_seed(seed, r)`, and the lowest training loss wins.
pub fn fit_linocs_dlds(obs: &TimeSeries, config: &DldsFitConfig) -> Result<DldsFit> {
    config.validate()?;
    let fits: Vec<Result<DldsFit>> = (0..config.restarts)
        .into_par_iter()
        .map(|r| {
            let seed = if r == 0 { config.seed } else { rng::cell_seed(config.seed, r) };
            let cfg = DldsFitConfig { seed, restarts: 1, ..config.clone() };
            fit_linocs_dlds_from(obs, &cfg, None, None)
        })
        .collect();
    let mut best: Option<DldsFit> = None;
    let mut first_err = None;
    for fit in fits {
        match fit {
            Ok(f) => {
                if best.as_ref().is_none_or(|b| f.training_loss < b.training_loss) {
                    best = Some(f);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.expect("at least one restart"))
}

/// Snapshot handed to a progress observer after each iteration.
pub struct DldsProgress<'a> {
    pub iteration: usize,
    pub operators: &'a [DMatrix<f64>],
    pub coefficients: &'a DMatrix<f64>,
    pub order_errors: &'a [f64],
    pub active_order: usize,
}

/// [`fit_linocs_dlds`] starting from the given basis instead of a random one.
pub fn fit_linocs_dlds_from(
    obs: &TimeSeries,
    config: &DldsFitConfig,
    init: Option<&[DMatrix<f64>]>,
    mut observer: Option<&mut dyn FnMut(&DldsProgress<'_>)>,
) -> Result<DldsFit> {
    config.validate()?;
    let j = config.operators;
    let p = obs.dim();
    let t_len = obs.horizon();
    if t_len < j {
        return Err(Error::Precondition(format!("{t_len} transitions are too few for {j} operators")));
    }
    let schedule = WeightSchedule::new(config.schedule, config.max_order)?;
    let mut state = schedule.initial_state();
    let mut ops = match init {
        Some(given) => {
            if given.len() != j || given.iter().any(|f| f.shape() != (p, p)) {
                return Err(dim_err(format!("initial basis must hold {j} operators of size {p}x{p}")));
            }
            let mut ops = given.to_vec();
            if config.normalize_operators {
                for f in &mut ops {
                    let n = f.norm();
                    if n > 0.0 {
                        *f /= n;
                    }
                }
            }
            ops
        }
        None => random_operators(p, j, config.seed),
    };
    let mut coefficients = initial_coefficients(obs, &ops)?;
    let mut jitter_rng = rng::stream(config.seed, "dlds-warm-start");
    let jitter = Normal::new(0.0, config.warm_start_noise).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let sequential = matches!(config.schedule, ScheduleKind::SequentialActivation { .. });

    let mut l1 = 0.0;
    let mut l2 = config.l2;
    let mut smooth = config.smooth_time;
    let mut order = 0usize;
    let mut degenerate = false;
    let mut unconverged = 0;
    let mut order_errors = vec![f64::INFINITY; config.max_order + 1];
    let mut last_weights = vec![0.0; config.max_order + 1];
    let mut best: Option<Snapshot> = None;

    for it in 0..config.max_iters {
        let mut weights = schedule.weights_for_iteration(&state);
        let active = if sequential { schedule.effective_order(&state) } else { order };
        for w in weights.iter_mut().skip(active + 1) {
            *w = 0.0;
        }
        let penalty = CoefficientPenalty { l1: l1 * config.l1_scale, l2, smooth };
        let settings = SweepSettings {
            weights: &weights,
            penalty,
            jitter: (config.warm_start_noise > 0.0).then_some((&mut jitter_rng, jitter)),
        };
        let (bad, errors) = sweep(obs, &ops, &mut coefficients, settings)?;
        if config.keep_best {
            let snap = Snapshot {
                loss: training_loss(&weights, &errors),
                ops: ops.clone(),
                coefficients: coefficients.clone(),
                order_errors: errors.clone(),
                unconverged: bad,
                active,
                iteration: it,
            };
            if best.as_ref().is_none_or(|b| snap.beats(b)) {
                best = Some(snap);
            }
        }
        unconverged = bad;
        order_errors = errors;
        last_weights = weights.clone();

        if (it + 1) % config.operator_update_every == 0 {
            let (next_ops, deg) = update_operators(obs, &mut coefficients, config.normalize_operators)?;
            // An operator whose coefficients are all zero gets no data; keep it.
            for (f, old) in next_ops.into_iter().zip(ops.iter_mut()) {
                if f.norm() > 0.0 {
                    *old = f;
                }
            }
            degenerate |= deg;
        }
        state = schedule.advance(&state, &order_errors);
        if it + 1 >= config.warmup_iters {
            order = (order + config.order_step).min(config.max_order);
        }
        l1 = if it == 0 { config.l1 } else { l1 * config.l1_decay };
        l2 *= config.l2_decay;
        smooth *= config.smooth_growth;
        if let Some(f) = observer.as_mut() {
            f(&DldsProgress {
                iteration: it,
                operators: &ops,
                coefficients: &coefficients,
                order_errors: &order_errors,
                active_order: active,
            });
        }
    }

    let active = if sequential { schedule.effective_order(&state) } else { order };
    if config.final_sweep && config.max_iters > 0 {
        let mut weights = schedule.weights_for_iteration(&state);
        for w in weights.iter_mut().skip(active + 1) {
            *w = 0.0;
        }
        let settings = SweepSettings {
            weights: &weights,
            penalty: CoefficientPenalty { l1: l1 * config.l1_scale, l2, smooth },
            jitter: None,
        };
        let (bad, errors) = sweep(obs, &ops, &mut coefficients, settings)?;
        unconverged = bad;
        order_errors = errors;
        last_weights = weights;
    }
    let last = Snapshot {
        loss: training_loss(&last_weights, &order_errors),
        ops,
        coefficients,
        order_errors,
        unconverged,
        active,
        iteration: config.max_iters,
    };
    let chosen = match best {
        Some(b) if b.beats(&last) => b,
        _ => last,
    };

    let model = if config.normalize_operators {
        DecomposedModel::new(chosen.ops, chosen.coefficients)?
    } else {
        DecomposedModel::new_unnormalized(chosen.ops, chosen.coefficients)?
    };
    Ok(DldsFit {
        model,
        iterations: config.max_iters,
        degenerate,
        unconverged_steps: chosen.unconverged,
        training_loss: chosen.loss,
        order_errors: chosen.order_errors,
        active_order: chosen.active,
        selected_iteration: chosen.iteration,
    })
}
