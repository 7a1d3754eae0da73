//! One-step, iterative multi-step (IMS) and full-lookahead prediction.
//!
//! All three styles reduce to repeated application of
//! [`Dynamics::transition_at`]; they differ only in where the chain is
//! anchored. IMS of order `K` for target `t + 1` starts from the observation
//! at `t - K + 1` and takes `K` steps, so order 1 is the one-step prediction
//! and full lookahead is IMS anchored at `t = 0`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::model::Dynamics;
use crate::series::TimeSeries;

/// Entries above this magnitude mark a rollout as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictionMode {
    OneStep,
    Ims(usize),
    FullLookahead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRequest {
    pub mode: PredictionMode,
    pub start_index: usize,
}

/// What to do when an IMS anchor would fall before `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HistoryClamp {
    /// Reject the request.
    #[default]
    Strict,
    /// Anchor at index 0 and take fewer steps.
    ClampToStart,
}

/// A predicted trajectory plus divergence bookkeeping.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub series: TimeSeries,
    /// First column with an entry beyond [`DIVERGENCE_LIMIT`].
    pub diverged_at: Option<usize>,
    /// True when the rollout hit a non-finite value and was cut short.
    pub truncated: bool,
}

impl Rollout {
    pub fn is_diverged(&self) -> bool {
        self.diverged_at.is_some()
    }

    /// Number of leading columns that are safe to score.
    pub fn valid_len(&self) -> usize {
        self.diverged_at.unwrap_or(self.series.len())
    }
}

fn check_obs(model: &impl Dynamics, obs: &TimeSeries) -> Result<()> {
    if model.dim() != obs.dim() {
        return Err(dim_err(format!(
            "model dimension {} does not match observations with {} rows",
            model.dim(),
            obs.dim()
        )));
    }
    Ok(())
}

/// `A_t x_t + b_t` from the observed column `t`.
pub fn predict_one_step(model: &impl Dynamics, obs: &TimeSeries, t: usize) -> Result<DVector<f64>> {
    check_obs(model, obs)?;
    if t >= obs.horizon() {
        return Err(Error::IndexOutOfRange {
            index: t,
            limit: obs.horizon(),
        });
    }
    model.step(t, &obs.column(t))
}

/// IMS prediction of `x_{t+1}` with order `order`.
pub fn predict_ims(
    model: &impl Dynamics,
    obs: &TimeSeries,
    t: usize,
    order: usize,
    clamp: HistoryClamp,
) -> Result<DVector<f64>> {
    check_obs(model, obs)?;
    if order == 0 {
        return Err(Error::InvalidArgument("IMS order must be at least 1".into()));
    }
    if t >= obs.horizon() {
        return Err(Error::IndexOutOfRange {
            index: t,
            limit: obs.horizon(),
        });
    }
    let anchor = match (t + 1).checked_sub(order) {
        Some(a) => a,
        None => match clamp {
            HistoryClamp::ClampToStart => 0,
            HistoryClamp::Strict => {
                return Err(Error::Precondition(format!(
                    "IMS order {order} at t={t} needs history before index 0"
                )))
            }
        },
    };
    let mut x = obs.column(anchor);
    for s in anchor..=t {
        x = model.step(s, &x)?;
    }
    Ok(x)
}

/// Rolls `model` forward from `x0` for `horizon` steps, feeding each
/// prediction back in. Entries beyond [`DIVERGENCE_LIMIT`] set the
/// divergence flag; the first non-finite column ends the rollout.
pub fn predict_full_lookahead(model: &impl Dynamics, x0: &DVector<f64>, horizon: usize) -> Result<Rollout> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    if x0.len() != model.dim() {
        return Err(dim_err("initial state does not match model dimension"));
    }
    if let Some(n) = model.steps() {
        if horizon > n {
            return Err(Error::IndexOutOfRange { index: horizon, limit: n });
        }
    }
    let p = model.dim();
    let mut values = DMatrix::zeros(p, horizon + 1);
    values.set_column(0, x0);
    let mut x = x0.clone();
    let mut diverged_at = None;
    let mut filled = horizon + 1;
    let mut truncated = false;
    for t in 0..horizon {
        x = model.step(t, &x)?;
        if x.iter().any(|v| !v.is_finite()) {
            filled = t + 1;
            truncated = true;
            diverged_at.get_or_insert(t + 1);
            break;
        }
        if diverged_at.is_none() && x.iter().any(|v| v.abs() > DIVERGENCE_LIMIT) {
            diverged_at = Some(t + 1);
        }
        values.set_column(t + 1, &x);
    }
    if filled < horizon + 1 {
        values = values.columns(0, filled).into_owned();
    }
    Ok(Rollout {
        series: TimeSeries::from_raw(values, 1.0),
        diverged_at,
        truncated,
    })
}

/// IMS predictions of order `order` for every target column `1..=T`.
/// Column 0 holds the first observation. Targets that would need history
/// before index 0 are clamped when `clamp` allows it, else rejected.
pub fn predict_ims_series(
    model: &impl Dynamics,
    obs: &TimeSeries,
    order: usize,
    clamp: HistoryClamp,
) -> Result<Rollout> {
    check_obs(model, obs)?;
    let n = obs.len();
    let mut values = DMatrix::zeros(obs.dim(), n);
    values.set_column(0, &obs.column(0));
    let mut diverged_at = None;
    for t in 0..obs.horizon() {
        let x = predict_ims(model, obs, t, order, clamp)?;
        if diverged_at.is_none() && x.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT) {
            diverged_at = Some(t + 1);
        }
        values.set_column(t + 1, &x.map(|v| if v.is_finite() { v } else { f64::MAX }));
    }
    Ok(Rollout {
        series: TimeSeries::from_raw(values, obs.dt()),
        diverged_at,
        truncated: false,
    })
}

/// Runs a [`PredictionRequest`] over the observations.
pub fn predict(model: &impl Dynamics, obs: &TimeSeries, request: PredictionRequest) -> Result<Rollout> {
    let start = request.start_index;
    if start >= obs.horizon() {
        return Err(Error::IndexOutOfRange {
            index: start,
            limit: obs.horizon(),
        });
    }
    let shifted = Shifted { inner: model, offset: start };
    match request.mode {
        PredictionMode::OneStep => predict_ims_series(&shifted, &obs.slice(start, obs.len())?, 1, HistoryClamp::Strict),
        PredictionMode::Ims(k) => {
            if k == 0 {
                return Err(Error::InvalidArgument("IMS order must be at least 1".into()));
            }
            predict_ims_series(&shifted, &obs.slice(start, obs.len())?, k, HistoryClamp::ClampToStart)
        }
        PredictionMode::FullLookahead => predict_full_lookahead(&shifted, &obs.column(start), obs.horizon() - start),
    }
}

/// A model viewed with its time index shifted by `offset`.
pub(crate) struct Shifted<'a, M: Dynamics + ?Sized> {
    pub inner: &'a M,
    pub offset: usize,
}

impl<M: Dynamics + ?Sized> Dynamics for Shifted<'_, M> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn steps(&self) -> Option<usize> {
        self.inner.steps().map(|n| n.saturating_sub(self.offset))
    }

    fn transition_at(&self, t: usize) -> Result<(DMatrix<f64>, DVector<f64>)> {
        self.inner.transition_at(t + self.offset)
    }

    fn step(&self, t: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.inner.step(t + self.offset, x)
    }
}
