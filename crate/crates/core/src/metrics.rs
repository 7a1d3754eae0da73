//! Scores for fitted models: reconstruction errors, correlations, operator
//! distances, spectrum matching and the stable prediction horizon.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::model::Dynamics;
use crate::numerics::{eigenvalues, linear_sum_assignment};
use crate::predict::DIVERGENCE_LIMIT;
use crate::series::TimeSeries;

fn column_ok(m: &DMatrix<f64>, t: usize) -> bool {
    m.column(t).iter().all(|v| v.is_finite() && v.abs() <= DIVERGENCE_LIMIT)
}

/// Mean squared entry-wise difference over the shared leading columns,
/// skipping any column that is non-finite or diverged in either input.
pub fn mse(a: &TimeSeries, b: &TimeSeries) -> Result<f64> {
    mse_matrices(a.values(), b.values())
}

pub fn mse_matrices(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.nrows() != b.nrows() {
        return Err(dim_err("series have different state dimensions"));
    }
    let n = a.ncols().min(b.ncols());
    let mut total = 0.0;
    let mut count = 0usize;
    for t in 0..n {
        if column_ok(a, t) && column_ok(b, t) {
            total += (a.column(t) - b.column(t)).norm_squared();
            count += a.nrows();
        }
    }
    if count == 0 {
        return Err(Error::Precondition("no overlapping valid columns to score".into()));
    }
    Ok(total / count as f64)
}

/// Pearson correlation of the flattened inputs, with a flag set when either
/// side is constant (the coefficient is then reported as 0).
pub fn pearson_flagged(a: &[f64], b: &[f64]) -> Result<(f64, bool)> {
    if a.len() != b.len() {
        return Err(dim_err("correlation inputs differ in length"));
    }
    if a.is_empty() {
        return Err(Error::Precondition("correlation of empty inputs".into()));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok((0.0, true));
    }
    Ok(((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0), false))
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    pearson_flagged(a, b).map(|(r, _)| r)
}

/// Pearson correlation of two series over their shared valid columns.
pub fn pearson_series(a: &TimeSeries, b: &TimeSeries) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(dim_err("series have different state dimensions"));
    }
    let (va, vb) = (a.values(), b.values());
    let n = va.ncols().min(vb.ncols());
    let (mut xa, mut xb) = (Vec::new(), Vec::new());
    for t in (0..n).filter(|&t| column_ok(va, t) && column_ok(vb, t)) {
        xa.extend(va.column(t).iter());
        xb.extend(vb.column(t).iter());
    }
    pearson(&xa, &xb)
}

/// Correlation between the entries of two matrices.
pub fn matrix_correlation(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(dim_err("matrices differ in shape"));
    }
    pearson(a.as_slice(), b.as_slice())
}

/// Column `t` is `((A_hat - A_true) x_t) * factor`.
pub fn operator_effect_difference(
    a_hat: &DMatrix<f64>,
    a_true: &DMatrix<f64>,
    series: &TimeSeries,
    factor: f64,
) -> Result<TimeSeries> {
    if a_hat.shape() != a_true.shape() || a_hat.ncols() != series.dim() {
        return Err(dim_err("operators and series dimensions differ"));
    }
    let diff = (a_hat - a_true) * factor;
    TimeSeries::with_dt(&diff * series.values(), series.dt())
}

/// Rolls `model` out from the first column of `truth` and returns the
/// largest `h` such that, for every step `s <= h`, the error norm stays below
/// `rel_threshold` times the running RMS of the mean-removed truth (RMS per
/// entry over steps `0..=s`). Divergence ends the horizon.
pub fn horizon_until_error(model: &impl Dynamics, truth: &TimeSeries, rel_threshold: f64) -> Result<usize> {
    if model.dim() != truth.dim() {
        return Err(dim_err("model and series dimensions differ"));
    }
    let p = truth.dim();
    let steps = truth.horizon().min(model.steps().unwrap_or(usize::MAX));
    let vals = truth.values();
    let mut x = truth.column(0);
    // Welford accumulators per coordinate.
    let mut mean = vals.column(0).into_owned();
    let mut m2 = DVector::<f64>::zeros(p);
    for h in 1..=steps {
        x = model.step(h - 1, &x)?;
        let col = vals.column(h);
        let n = (h + 1) as f64;
        for i in 0..p {
            let d = col[i] - mean[i];
            mean[i] += d / n;
            m2[i] += d * (col[i] - mean[i]);
        }
        if x.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT) {
            return Ok(h - 1);
        }
        let err = (&x - col).norm();
        let scale = (m2.sum() / (n * p as f64)).sqrt();
        let ok = if scale > 0.0 { err < rel_threshold * scale } else { err == 0.0 };
        if !ok {
            return Ok(h - 1);
        }
    }
    Ok(steps)
}

/// Distances `|lambda_hat - lambda|` after optimally pairing the spectra,
/// listed in the order of `a_true`'s eigenvalues.
pub fn eigen_match(a_hat: &DMatrix<f64>, a_true: &DMatrix<f64>) -> Result<Vec<f64>> {
    if a_hat.shape() != a_true.shape() || !a_hat.is_square() {
        return Err(dim_err("eigen matching needs square matrices of equal size"));
    }
    let est = eigenvalues(a_hat);
    let tru = eigenvalues(a_true);
    let cost = DMatrix::from_fn(tru.len(), est.len(), |i, j| (tru[i] - est[j]).norm());
    let perm = linear_sum_assignment(&cost)?;
    Ok(perm.iter().enumerate().map(|(i, &j)| cost[(i, j)]).collect())
}

/// Mean squared entry error between the step operators of two models over
/// the first `steps` transitions, one value per step.
pub fn operator_path_errors(est: &impl Dynamics, truth: &impl Dynamics, steps: usize) -> Result<Vec<f64>> {
    if est.dim() != truth.dim() {
        return Err(dim_err("models differ in dimension"));
    }
    (0..steps)
        .map(|t| {
            let (a, _) = est.transition_at(t)?;
            let (b, _) = truth.transition_at(t)?;
            Ok((a - b).norm_squared() / (est.dim() * est.dim()) as f64)
        })
        .collect()
}

/// Correlation of the flattened step operators of two models.
pub fn operator_path_correlation(est: &impl Dynamics, truth: &impl Dynamics, steps: usize) -> Result<f64> {
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for t in 0..steps {
        a.extend(est.transition_at(t)?.0.iter());
        b.extend(truth.transition_at(t)?.0.iter());
    }
    pearson(&a, &b)
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Evaluation summary for one fitted model. Diverged quantities are `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mse_one_step: Option<f64>,
    /// IMS error keyed by prediction order.
    pub mse_ims: BTreeMap<usize, Option<f64>>,
    pub mse_full_lookahead: Option<f64>,
    pub correlation_full_lookahead: Option<f64>,
    /// First diverged column of the full-lookahead rollout.
    pub full_lookahead_diverged_at: Option<usize>,
    pub operator_frobenius_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub operator_errors_per_step: Vec<f64>,
    pub horizon_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub eigen_match_distances: Vec<f64>,
}

/// Fills the prediction fields of an [`EvalReport`]: one-step and IMS
/// predictions are driven by `observed`, the full lookahead starts from its
/// first column, and every prediction is scored against `reference` (the
/// clean series when known, else `observed` itself). IMS targets without
/// enough history are skipped.
pub fn evaluate_predictions(
    model: &impl Dynamics,
    observed: &TimeSeries,
    reference: &TimeSeries,
    ims_orders: &[usize],
) -> Result<EvalReport> {
    if observed.dim() != reference.dim() || observed.len() != reference.len() {
        return Err(dim_err("observed and reference series differ in shape"));
    }
    let horizon = observed.horizon();
    let score = |pred: &DMatrix<f64>, from: usize| -> Option<f64> {
        let n = pred.ncols();
        mse_matrices(pred, &reference.values().columns(from, n).into_owned()).ok()
    };
    let one = DMatrix::from_columns(
        &(0..horizon)
            .map(|t| model.step(t, &observed.column(t)))
            .collect::<Result<Vec<_>>>()?,
    );
    let mut report = EvalReport {
        mse_one_step: score(&one, 1),
        ..EvalReport::default()
    };
    for &k in ims_orders {
        if k == 0 || k > horizon {
            report.mse_ims.insert(k, None);
            continue;
        }
        let cols = (k - 1..horizon)
            .map(|t| crate::predict::predict_ims(model, observed, t, k, crate::predict::HistoryClamp::Strict))
            .collect::<Result<Vec<_>>>()?;
        report.mse_ims.insert(k, score(&DMatrix::from_columns(&cols), k));
    }
    let roll = crate::predict::predict_full_lookahead(model, &observed.column(0), horizon)?;
    let valid = roll.valid_len();
    report.full_lookahead_diverged_at = roll.diverged_at;
    report.mse_full_lookahead = score(&roll.series.values().columns(0, valid).into_owned(), 0);
    if valid > 1 {
        let a: Vec<f64> = roll.series.values().columns(0, valid).iter().copied().collect();
        let b: Vec<f64> = reference.values().columns(0, valid).iter().copied().collect();
        report.correlation_full_lookahead = pearson(&a, &b).ok();
    }
    Ok(report)
}
