//! Time-invariant affine fits: one-step least squares, rollout-refit (DAD)
//! baselines, and the multi-step lookahead objective.
//!
//! The lookahead objective is polynomial in `A`. It is minimized with
//! Levenberg-Marquardt: forward-mode sensitivities of every lookahead give
//! the Jacobian, a thin QR compresses it to `P x P`, and each damped step
//! comes from a small SVD. Steps are accepted only when the objective drops.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LinearModel;
use crate::numerics::{solve_least_squares_detailed, RidgeProblem};
use crate::predict::{predict_full_lookahead, DIVERGENCE_LIMIT};
use crate::series::TimeSeries;
use crate::weights::{ScheduleKind, WeightSchedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinearFitConfig {
    /// Largest lookahead order `K` in the objective.
    pub max_order: usize,
    /// Largest order used by the offset refinement pass.
    pub offset_order: usize,
    pub schedule: ScheduleKind,
    pub offset_schedule: ScheduleKind,
    pub with_offset: bool,
    /// Re-solve `b` alone over `offset_order` orders after every step.
    pub refine_offset: bool,
    pub max_iters: usize,
    /// Stop when `||dA||_F + ||db||_2` falls below this.
    pub tol: f64,
}

impl Default for LinearFitConfig {
    fn default() -> Self {
        Self {
            max_order: 80,
            offset_order: 20,
            schedule: ScheduleKind::ExponentialDecay { sigma_w: 0.01 },
            offset_schedule: ScheduleKind::ExponentialDecay { sigma_w: 0.01 },
            with_offset: true,
            refine_offset: false,
            max_iters: 200,
            tol: 1e-8,
        }
    }
}

impl LinearFitConfig {
    pub fn with_order(max_order: usize) -> Self {
        Self {
            max_order,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DadVariant {
    FullUpdate,
    Reweighted,
    ReweightedL2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DadConfig {
    pub variant: DadVariant,
    pub iterations: usize,
    pub l2_weight: f64,
    /// Multiplies `l2_weight` after every iteration.
    pub l2_decay: f64,
    pub with_offset: bool,
}

impl Default for DadConfig {
    fn default() -> Self {
        Self {
            variant: DadVariant::FullUpdate,
            iterations: 100,
            l2_weight: 0.0,
            l2_decay: 1.0,
            with_offset: true,
        }
    }
}

impl DadConfig {
    pub fn variant(variant: DadVariant) -> Self {
        let l2_weight = if variant == DadVariant::ReweightedL2 { 1.0 } else { 0.0 };
        Self {
            variant,
            l2_weight,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinearFit {
    pub model: LinearModel,
    pub iterations: usize,
    pub converged: bool,
    /// The one-step design was rank deficient; a minimum-norm solution was used.
    pub degenerate: bool,
    /// Final weighted lookahead objective (one-step objective for baselines).
    pub objective: f64,
    /// Mean squared error per lookahead order at the returned parameters.
    pub order_errors: Vec<f64>,
}

fn check_segments(segments: &[DMatrix<f64>]) -> Result<usize> {
    let p = segments.first().map(|s| s.nrows()).ok_or_else(|| Error::InvalidArgument("no data segments".into()))?;
    if p == 0 || segments.iter().any(|s| s.nrows() != p) {
        return Err(Error::Dimension("segments must share a positive state dimension".into()));
    }
    if segments.iter().all(|s| s.ncols() < 2) {
        return Err(Error::Precondition("need at least one transition".into()));
    }
    Ok(p)
}

/// Regresses `targets` on `inputs` (columns are samples), optionally with an
/// intercept and a Frobenius ridge on all coefficients.
fn affine_regression(
    inputs: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    with_offset: bool,
    ridge: f64,
) -> Result<(LinearModel, bool)> {
    let p = inputs.nrows();
    let n = inputs.ncols();
    let cols = if with_offset { p + 1 } else { p };
    let design = DMatrix::from_fn(n, cols, |t, j| if j < p { inputs[(j, t)] } else { 1.0 });
    let sol = solve_least_squares_detailed(&RidgeProblem::new(design, targets.transpose(), ridge))?;
    let w = sol.coefficients;
    let a = w.rows(0, p).transpose();
    let b = if with_offset {
        w.row(p).transpose()
    } else {
        DVector::zeros(p)
    };
    Ok((LinearModel::new(a, b)?, sol.degenerate))
}

/// One-step least squares over the consecutive pairs inside each segment.
pub fn fit_one_step_segments(segments: &[DMatrix<f64>], with_offset: bool) -> Result<LinearFit> {
    let p = check_segments(segments)?;
    let n: usize = segments.iter().map(|s| s.ncols().saturating_sub(1)).sum();
    let mut inputs = DMatrix::zeros(p, n);
    let mut targets = DMatrix::zeros(p, n);
    let mut at = 0;
    for s in segments.iter().filter(|s| s.ncols() >= 2) {
        let m = s.ncols() - 1;
        inputs.columns_mut(at, m).copy_from(&s.columns(0, m));
        targets.columns_mut(at, m).copy_from(&s.columns(1, m));
        at += m;
    }
    let (model, degenerate) = affine_regression(&inputs, &targets, with_offset, 0.0)?;
    let objective = lookahead_objective_segments(segments, &model.a, &model.b, &[1.0]);
    Ok(LinearFit {
        order_errors: vec![objective / (n * p) as f64],
        model,
        iterations: 0,
        converged: true,
        degenerate,
        objective,
    })
}

/// Least-squares fit of `x_{t+1} = A x_t + b` over the whole series.
pub fn fit_one_step_ls(obs: &TimeSeries, with_offset: bool) -> Result<LinearFit> {
    fit_one_step_segments(std::slice::from_ref(obs.values()), with_offset)
}

/// `sum_k w_k sum_t ||x_{t+1} - A^{k+1} x_{t-k} - sum_{j<=k} A^j b||^2`
/// over every anchor with enough history.
pub fn linocs_linear_objective(a: &DMatrix<f64>, b: &DVector<f64>, obs: &TimeSeries, weights: &[f64]) -> f64 {
    lookahead_objective_segments(std::slice::from_ref(obs.values()), a, b, weights)
}

pub(crate) fn lookahead_objective_segments(
    segments: &[DMatrix<f64>],
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    weights: &[f64],
) -> f64 {
    let eval = Lookahead::evaluate(segments, a, b, weights, weights.len().saturating_sub(1), false, true);
    eval.residual.norm_squared()
}

/// Residuals (and optionally the Jacobian) of the weighted lookahead objective.
struct Lookahead {
    residual: DVector<f64>,
    jacobian: Option<DMatrix<f64>>,
    /// Sum of squared errors and entry count per order.
    sse: Vec<(f64, usize)>,
}

impl Lookahead {
    fn evaluate(
        segments: &[DMatrix<f64>],
        a: &DMatrix<f64>,
        b: &DVector<f64>,
        weights: &[f64],
        max_order: usize,
        with_jacobian: bool,
        with_offset: bool,
    ) -> Self {
        let p = a.nrows();
        let params = if with_offset { p * p + p } else { p * p };
        let rows: usize = segments
            .iter()
            .map(|s| {
                let t = s.ncols().saturating_sub(1);
                (0..=max_order.min(t.saturating_sub(1)))
                    .filter(|&k| weights[k] > 0.0)
                    .map(|k| (t - k) * p)
                    .sum::<usize>()
            })
            .sum();
        let mut residual = DVector::zeros(rows);
        let mut jacobian = with_jacobian.then(|| DMatrix::zeros(rows, params));
        let mut sse = vec![(0.0, 0usize); max_order + 1];
        let mut row = 0;

        for seg in segments {
            let t_len = seg.ncols().saturating_sub(1);
            if t_len == 0 {
                continue;
            }
            let mut cur = seg.columns(0, t_len).into_owned();
            let mut dcur: Vec<DMatrix<f64>> = if with_jacobian {
                vec![DMatrix::zeros(p, t_len); params]
            } else {
                Vec::new()
            };
            for k in 0..=max_order {
                let m = t_len.saturating_sub(k);
                if m == 0 {
                    break;
                }
                let mut pred = a * cur.columns(0, m);
                for mut col in pred.column_iter_mut() {
                    col += b;
                }
                let mut dpred: Vec<DMatrix<f64>> = Vec::new();
                if with_jacobian {
                    dpred = dcur.iter().map(|d| a * d.columns(0, m)).collect();
                    for i in 0..p {
                        for j in 0..p {
                            let q = i * p + j;
                            let mut r = dpred[q].row_mut(i);
                            r += cur.row(j).columns(0, m);
                        }
                        if with_offset {
                            dpred[p * p + i].row_mut(i).add_scalar_mut(1.0);
                        }
                    }
                }
                let target = seg.columns(k + 1, m);
                let diff = target - &pred;
                sse[k].0 += diff.norm_squared();
                sse[k].1 += m * p;
                let w = weights[k];
                if w > 0.0 {
                    let sw = w.sqrt();
                    let n = m * p;
                    // Column-major flattening: time outer, coordinate inner.
                    residual.rows_mut(row, n).copy_from_slice(diff.as_slice());
                    residual.rows_mut(row, n).scale_mut(sw);
                    if let Some(jac) = jacobian.as_mut() {
                        for (q, d) in dpred.iter().enumerate() {
                            let mut c = jac.view_mut((row, q), (n, 1));
                            c.copy_from_slice(d.as_slice());
                            c.scale_mut(sw);
                        }
                    }
                    row += n;
                }
                if m > 1 {
                    cur = pred.columns(0, m - 1).into_owned();
                    if with_jacobian {
                        dcur = dpred.iter().map(|d| d.columns(0, m - 1).into_owned()).collect();
                    }
                }
            }
        }
        Self {
            residual,
            jacobian,
            sse,
        }
    }

    fn order_errors(&self) -> Vec<f64> {
        self.sse
            .iter()
            .map(|&(s, n)| if n == 0 { f64::INFINITY } else { s / n as f64 })
            .collect()
    }
}

fn unpack(theta: &DVector<f64>, p: usize, with_offset: bool) -> (DMatrix<f64>, DVector<f64>) {
    let a = DMatrix::from_row_slice(p, p, &theta.as_slice()[..p * p]);
    let b = if with_offset {
        theta.rows(p * p, p).into_owned()
    } else {
        DVector::zeros(p)
    };
    (a, b)
}

fn pack(a: &DMatrix<f64>, b: &DVector<f64>, with_offset: bool) -> DVector<f64> {
    let p = a.nrows();
    let mut v: Vec<f64> = a.transpose().as_slice().to_vec();
    if with_offset {
        v.extend(b.iter());
    }
    debug_assert_eq!(v.len(), if with_offset { p * p + p } else { p * p });
    DVector::from_vec(v)
}

fn stable(a: &DMatrix<f64>, b: &DVector<f64>) -> bool {
    a.iter().chain(b.iter()).all(|v| v.is_finite() && v.abs() < DIVERGENCE_LIMIT)
}

/// Lookahead fit over independent segments; no lookahead crosses a segment
/// boundary. Starts from the one-step solution.
pub fn fit_linocs_segments(segments: &[DMatrix<f64>], config: &LinearFitConfig) -> Result<LinearFit> {
    fit_linocs_segments_from(segments, config, None)
}

/// As [`fit_linocs_segments`], starting from `init` when given.
pub fn fit_linocs_segments_from(
    segments: &[DMatrix<f64>],
    config: &LinearFitConfig,
    init: Option<&LinearModel>,
) -> Result<LinearFit> {
    let p = check_segments(segments)?;
    let base = fit_one_step_segments(segments, config.with_offset)?;
    let longest = segments.iter().map(|s| s.ncols() - 1).max().unwrap_or(0);
    let k_max = config.max_order.min(longest.saturating_sub(1));
    if k_max == 0 {
        return Ok(base);
    }
    let schedule = WeightSchedule::new(config.schedule, k_max)?;
    let offset_schedule = WeightSchedule::new(config.offset_schedule, config.offset_order.min(k_max))?;
    let with_offset = config.with_offset;
    let mut state = schedule.initial_state();

    let mut model = match init {
        Some(m) if m.a.nrows() == p => m.clone(),
        Some(_) => return Err(Error::Dimension("initial model dimension differs from data".into())),
        None => base.model.clone(),
    };
    if !with_offset {
        model.b.fill(0.0);
    }
    let mut theta = pack(&model.a, &model.b, with_offset);
    let mut damping = 1e-4;
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=config.max_iters {
        iterations = iter;
        let weights = schedule.weights_for_iteration(&state);
        let order = schedule.effective_order(&state);
        let (a, b) = unpack(&theta, p, with_offset);
        let eval = Lookahead::evaluate(segments, &a, &b, &weights, order, true, with_offset);
        let f = eval.residual.norm_squared();
        let current_errors = eval.order_errors();
        let jac = eval.jacobian.expect("requested");

        // Thin QR then SVD of R: the damped step for any damping is cheap.
        let params = jac.ncols();
        let qr = jac.qr();
        let mut qtr = eval.residual.clone();
        qr.q_tr_mul(&mut qtr);
        let r = qr.r();
        let svd = r.svd(true, true);
        let u = svd.u.as_ref().expect("u");
        let v_t = svd.v_t.as_ref().expect("v_t");
        let s = &svd.singular_values;
        let s_max = s.iter().cloned().fold(0.0, f64::max);
        let z = u.transpose() * qtr.rows(0, params);

        let mut accepted = None;
        while damping < 1e10 {
            let mu = damping * s_max * s_max;
            let scaled = DVector::from_fn(params, |i, _| if s[i] > 0.0 { s[i] / (s[i] * s[i] + mu) * z[i] } else { 0.0 });
            let step = v_t.transpose() * scaled;
            let trial = &theta + &step;
            let (ta, tb) = unpack(&trial, p, with_offset);
            if stable(&ta, &tb) {
                let te = Lookahead::evaluate(segments, &ta, &tb, &weights, order, false, with_offset);
                let ft = te.residual.norm_squared();
                if ft.is_finite() && ft < f {
                    accepted = Some((trial, step, te));
                    damping = (damping / 10.0).max(1e-12);
                    break;
                }
            }
            damping *= 10.0;
        }

        let previous_order = state.active_order;
        let moved;
        match accepted {
            Some((trial, step, te)) => {
                let (da, db) = unpack(&step, p, with_offset);
                moved = da.norm() + db.norm();
                theta = trial;
                state = schedule.advance(&state, &te.order_errors());
            }
            None => {
                // No descent direction left at this weighting.
                moved = 0.0;
                damping = 1e-4;
                state = schedule.advance(&state, &current_errors);
            }
        }
        if config.refine_offset && with_offset {
            let (a, _) = unpack(&theta, p, true);
            let w_b = offset_schedule.weights_for_iteration(&offset_schedule.initial_state());
            let b = refine_offset(segments, &a, &w_b)?;
            theta.rows_mut(p * p, p).copy_from(&b);
        }
        if moved < config.tol && state.active_order == previous_order {
            converged = true;
            break;
        }
    }

    let (a, b) = unpack(&theta, p, with_offset);
    let weights = schedule.weights_for_iteration(&state);
    let eval = Lookahead::evaluate(segments, &a, &b, &weights, schedule.max_order, false, with_offset);
    Ok(LinearFit {
        model: LinearModel::new(a, b)?,
        iterations,
        converged,
        degenerate: base.degenerate,
        objective: eval.residual.norm_squared(),
        order_errors: eval.order_errors(),
    })
}

/// LINOCS fit of a time-invariant affine model.
pub fn fit_linocs_linear(obs: &TimeSeries, config: &LinearFitConfig) -> Result<LinearFit> {
    if obs.horizon() <= config.max_order {
        return Err(Error::Precondition(format!(
            "series has {} transitions, need more than K = {}",
            obs.horizon(),
            config.max_order
        )));
    }
    fit_linocs_segments(std::slice::from_ref(obs.values()), config)
}

/// Best `b` for fixed `A` under the weighted lookahead objective. For order
/// `k` the residuals are `y_t - S_k b` with `S_k = sum_{j<=k} A^j`, so only
/// their per-order mean matters.
fn refine_offset(segments: &[DMatrix<f64>], a: &DMatrix<f64>, weights: &[f64]) -> Result<DVector<f64>> {
    let p = a.nrows();
    let k_max = weights.len() - 1;
    let mut design_rows: Vec<DMatrix<f64>> = Vec::new();
    let mut target_rows: Vec<DVector<f64>> = Vec::new();
    let zero = DVector::zeros(p);
    let mut sums: Vec<(DVector<f64>, usize)> = vec![(DVector::zeros(p), 0); k_max + 1];
    for seg in segments {
        let t_len = seg.ncols().saturating_sub(1);
        if t_len == 0 {
            continue;
        }
        let mut cur = seg.columns(0, t_len).into_owned();
        for (k, slot) in sums.iter_mut().enumerate() {
            let m = t_len.saturating_sub(k);
            if m == 0 {
                break;
            }
            let pred = a * cur.columns(0, m);
            let diff = seg.columns(k + 1, m) - &pred;
            slot.0 += diff.column_sum();
            slot.1 += m;
            if m > 1 {
                cur = pred.columns(0, m - 1).into_owned();
            }
        }
    }
    let mut power_sum = DMatrix::zeros(p, p);
    let mut power = DMatrix::identity(p, p);
    for (k, (sum, n)) in sums.iter().enumerate() {
        power_sum += &power;
        power = a * power;
        if *n == 0 || weights[k] <= 0.0 {
            continue;
        }
        let scale = (weights[k] * *n as f64).sqrt();
        design_rows.push(&power_sum * scale);
        target_rows.push(sum / *n as f64 * scale);
    }
    if design_rows.is_empty() {
        return Ok(zero);
    }
    let rows = design_rows.len() * p;
    let mut design = DMatrix::zeros(rows, p);
    let mut targets = DMatrix::zeros(rows, 1);
    for (i, (d, t)) in design_rows.iter().zip(&target_rows).enumerate() {
        design.view_mut((i * p, 0), (p, p)).copy_from(d);
        targets.view_mut((i * p, 0), (p, 1)).copy_from(t);
    }
    let sol = solve_least_squares_detailed(&RidgeProblem::new(design, targets, 0.0))?;
    Ok(sol.coefficients.column(0).into_owned())
}

/// Rollout-and-refit baselines. Each iteration rolls the current model out
/// from the first observation and refits on the rolled-out states.
pub fn fit_dad(obs: &TimeSeries, config: &DadConfig) -> Result<LinearFit> {
    if config.iterations == 0 {
        return Err(Error::InvalidArgument("DAD needs at least one iteration".into()));
    }
    let base = fit_one_step_ls(obs, config.with_offset)?;
    let mut model = base.model.clone();
    let horizon = obs.horizon();
    let x = obs.values();
    let x0 = obs.column(0);
    let mut l2 = config.l2_weight;
    let mut degenerate = base.degenerate;
    for _ in 0..config.iterations {
        let roll = predict_full_lookahead(&model, &x0, horizon)?;
        // Columns at or after divergence are left out.
        let valid = roll.valid_len().min(horizon + 1);
        let usable = valid.saturating_sub(1);
        if usable == 0 {
            break;
        }
        let xhat = roll.series.values();
        let (inputs, targets) = match config.variant {
            DadVariant::FullUpdate => (xhat.columns(0, usable).into_owned(), x.columns(1, usable).into_owned()),
            DadVariant::Reweighted | DadVariant::ReweightedL2 => {
                let mut inputs = DMatrix::zeros(x.nrows(), 2 * usable);
                let mut targets = DMatrix::zeros(x.nrows(), 2 * usable);
                let look_targets = usable.min(valid - 1);
                inputs.columns_mut(0, usable).copy_from(&xhat.columns(0, usable));
                targets.columns_mut(0, look_targets).copy_from(&xhat.columns(1, look_targets));
                inputs.columns_mut(usable, usable).copy_from(&x.columns(0, usable));
                targets.columns_mut(usable, usable).copy_from(&x.columns(1, usable));
                (inputs, targets)
            }
        };
        let ridge = if config.variant == DadVariant::ReweightedL2 { l2 } else { 0.0 };
        let (next, deg) = affine_regression(&inputs, &targets, config.with_offset, ridge)?;
        degenerate |= deg;
        model = next;
        l2 *= config.l2_decay;
    }
    let objective = linocs_linear_objective(&model.a, &model.b, obs, &[1.0]);
    Ok(LinearFit {
        order_errors: vec![objective / (obs.horizon() * obs.dim()) as f64],
        model,
        iterations: config.iterations,
        converged: true,
        degenerate,
        objective,
    })
}
