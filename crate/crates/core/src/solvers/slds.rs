//! Switching affine fits: sticky-chain Viterbi segmentation alternated with
//! per-state operator fits restricted to each state's segments.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::model::{switch_indices, LinearModel, SwitchingModel};
use crate::numerics::linear_sum_assignment;
use crate::rng;
use crate::series::TimeSeries;

use super::linear::{fit_linocs_linear, fit_linocs_segments_from, fit_one_step_segments, LinearFitConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SldsFitConfig {
    pub states: usize,
    /// Self-transition probability of the discrete chain.
    pub stickiness: f64,
    pub outer_iters: usize,
    /// Per-state fit. `max_order = 0` gives the one-step baseline.
    pub linear: LinearFitConfig,
    /// Runs shorter than this are absorbed by a neighbour.
    pub min_segment: usize,
    /// Seeds the k-means initialization.
    pub seed: u64,
}

impl Default for SldsFitConfig {
    fn default() -> Self {
        Self {
            states: 3,
            stickiness: 0.98,
            outer_iters: 20,
            linear: LinearFitConfig {
                max_order: 20,
                max_iters: 50,
                ..LinearFitConfig::default()
            },
            min_segment: 3,
            seed: 0,
        }
    }
}

impl SldsFitConfig {
    /// The same alternation with one-step per-state fits.
    pub fn one_step(&self) -> Self {
        let mut c = self.clone();
        c.linear.max_order = 0;
        c
    }
}

#[derive(Debug, Clone)]
pub struct SldsFit {
    pub model: SwitchingModel,
    pub outer_iterations: usize,
    /// Residual scale used by the final segmentation.
    pub residual_scale: f64,
    /// Sum of squared one-step residuals under the decoded path.
    pub residual: f64,
}

/// `r[j][t] = ||x_{t+1} - f_j x_t - b_j||`.
fn residual_norms(obs: &DMatrix<f64>, operators: &[DMatrix<f64>], offsets: &[DVector<f64>]) -> Vec<Vec<f64>> {
    let t_len = obs.ncols() - 1;
    let xs = obs.columns(0, t_len);
    let ys = obs.columns(1, t_len);
    operators
        .iter()
        .zip(offsets)
        .map(|(f, b)| {
            let mut pred = f * xs;
            for mut c in pred.column_iter_mut() {
                c += b;
            }
            (ys - pred).column_iter().map(|c| c.norm()).collect()
        })
        .collect()
}

fn median_of(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Maximum a posteriori state path under a sticky chain with Gaussian
/// residual emissions of scale `residual_scale`.
pub fn decode_states(
    residuals: &[Vec<f64>],
    stickiness: f64,
    residual_scale: f64,
) -> Result<Vec<usize>> {
    let j = residuals.len();
    if j == 0 {
        return Err(Error::InvalidArgument("need at least one state".into()));
    }
    let t_len = residuals[0].len();
    if j == 1 {
        return Ok(vec![0; t_len]);
    }
    if !(stickiness > 0.0 && stickiness < 1.0) {
        return Err(Error::InvalidArgument("stickiness must lie in (0, 1)".into()));
    }
    let stay = stickiness.ln();
    let switch = ((1.0 - stickiness) / (j - 1) as f64).ln();
    let inv = 0.5 / (residual_scale * residual_scale);
    let emit = |s: usize, t: usize| -residuals[s][t].powi(2) * inv;

    let mut score: Vec<f64> = (0..j).map(|s| emit(s, 0) - (j as f64).ln()).collect();
    let mut back = vec![vec![0usize; j]; t_len];
    for t in 1..t_len {
        let mut next = vec![f64::NEG_INFINITY; j];
        for s in 0..j {
            // Ties go to the lower previous label so decoding is deterministic.
            let mut best = (f64::NEG_INFINITY, 0);
            for (prev, &sc) in score.iter().enumerate() {
                let v = sc + if prev == s { stay } else { switch };
                if v > best.0 {
                    best = (v, prev);
                }
            }
            next[s] = best.0 + emit(s, t);
            back[t][s] = best.1;
        }
        score = next;
    }
    let mut last = 0;
    for s in 1..j {
        if score[s] > score[last] {
            last = s;
        }
    }
    let mut path = vec![0; t_len];
    path[t_len - 1] = last;
    for t in (1..t_len).rev() {
        path[t - 1] = back[t][path[t]];
    }
    Ok(path)
}

/// Viterbi segmentation of `obs` under the given per-state affine maps.
/// The residual scale is the median per-step residual of the best state.
pub fn estimate_switches(
    obs: &TimeSeries,
    operators: &[DMatrix<f64>],
    offsets: &[DVector<f64>],
    stickiness: f64,
) -> Result<Vec<usize>> {
    if operators.len() != offsets.len() || operators.is_empty() {
        return Err(dim_err("need one offset per operator"));
    }
    let res = residual_norms(obs.values(), operators, offsets);
    let best: Vec<f64> = (0..obs.horizon())
        .map(|t| res.iter().map(|r| r[t]).fold(f64::INFINITY, f64::min))
        .collect();
    let tau = residual_floor(obs.values()).max(median_of(best));
    decode_states(&res, stickiness, tau)
}

fn residual_floor(obs: &DMatrix<f64>) -> f64 {
    1e-9 * obs.amax().max(1.0)
}

/// Maximal runs `(state, start, end)` with transitions `start..end`.
pub fn runs(path: &[usize]) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    for t in 1..=path.len() {
        if t == path.len() || path[t] != path[start] {
            out.push((path[start], start, t));
            start = t;
        }
    }
    out
}

/// Relabels runs shorter than `min_len` with the cheaper neighbouring state.
fn absorb_short_runs(path: &mut [usize], residuals: &[Vec<f64>], min_len: usize) {
    loop {
        let rs = runs(path);
        if rs.len() < 2 {
            return;
        }
        let Some(idx) = (0..rs.len()).filter(|&i| rs[i].2 - rs[i].1 < min_len).min_by_key(|&i| rs[i].2 - rs[i].1) else {
            return;
        };
        let (_, s, e) = rs[idx];
        let cost = |state: usize| (s..e).map(|t| residuals[state][t].powi(2)).sum::<f64>();
        let target = match (idx.checked_sub(1).map(|i| rs[i].0), rs.get(idx + 1).map(|r| r.0)) {
            (Some(a), Some(b)) => {
                if cost(b) < cost(a) {
                    b
                } else {
                    a
                }
            }
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (None, None) => return,
        };
        for z in &mut path[s..e] {
            *z = target;
        }
    }
}

/// Column blocks `start..=end` for every run of `state`.
fn state_segments(obs: &DMatrix<f64>, path: &[usize], state: usize) -> Vec<DMatrix<f64>> {
    runs(path)
        .into_iter()
        .filter(|r| r.0 == state)
        .map(|(_, s, e)| obs.columns(s, e - s + 1).into_owned())
        .collect()
}

fn kmeans_labels(features: &DMatrix<f64>, k: usize, seed: u64) -> Vec<usize> {
    let n = features.ncols();
    let mut rng = rng::stream(seed, "slds-kmeans");
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..5 {
        // k-means++ seeding.
        let mut centers: Vec<DVector<f64>> = vec![features.column(rng.random_range(0..n)).into_owned()];
        while centers.len() < k {
            let d: Vec<f64> = (0..n)
                .map(|i| centers.iter().map(|c| (features.column(i) - c).norm_squared()).fold(f64::INFINITY, f64::min))
                .collect();
            let total: f64 = d.iter().sum();
            let pick = if total > 0.0 {
                let mut u = rng.random::<f64>() * total;
                d.iter().position(|&v| {
                    u -= v;
                    u <= 0.0
                })
                .unwrap_or(n - 1)
            } else {
                rng.random_range(0..n)
            };
            centers.push(features.column(pick).into_owned());
        }
        let mut labels = vec![0; n];
        for _ in 0..100 {
            let mut changed = false;
            for i in 0..n {
                let l = (0..k)
                    .min_by(|&a, &b| {
                        (features.column(i) - &centers[a])
                            .norm_squared()
                            .total_cmp(&(features.column(i) - &centers[b]).norm_squared())
                    })
                    .unwrap();
                if labels[i] != l {
                    labels[i] = l;
                    changed = true;
                }
            }
            for (c, center) in centers.iter_mut().enumerate() {
                let members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
                if !members.is_empty() {
                    *center = members.iter().map(|&i| features.column(i).into_owned()).sum::<DVector<f64>>() / members.len() as f64;
                }
            }
            if !changed {
                break;
            }
        }
        let inertia: f64 = (0..n).map(|i| (features.column(i) - &centers[labels[i]]).norm_squared()).sum();
        if best.as_ref().is_none_or(|b| inertia < b.0) {
            best = Some((inertia, labels));
        }
    }
    best.map(|b| b.1).unwrap_or_default()
}

/// One-step fit on the transitions `ts`, each treated as its own segment.
fn fit_pairs(obs: &DMatrix<f64>, ts: &[usize], with_offset: bool) -> Result<LinearModel> {
    let segs: Vec<DMatrix<f64>> = ts.iter().map(|&t| obs.columns(t, 2).into_owned()).collect();
    Ok(fit_one_step_segments(&segs, with_offset)?.model)
}

/// The window of the worst-explained transitions, used to revive a state
/// that lost all of its segments.
fn worst_window(path: &[usize], residuals: &[Vec<f64>], width: usize) -> Vec<usize> {
    let t_len = path.len();
    let width = width.min(t_len);
    let err: Vec<f64> = (0..t_len).map(|t| residuals[path[t]][t]).collect();
    let mut best = (f64::NEG_INFINITY, 0);
    for s in 0..=t_len - width {
        let v: f64 = err[s..s + width].iter().map(|e| e * e).sum();
        if v > best.0 {
            best = (v, s);
        }
    }
    (best.1..best.1 + width).collect()
}

/// Alternates segmentation and per-state fitting. With
/// `config.linear.max_order > 0` the per-state fits use the lookahead
/// objective with orders capped by the shortest segment of that state.
pub fn fit_linocs_slds(obs: &TimeSeries, config: &SldsFitConfig) -> Result<SldsFit> {
    let j = config.states;
    let p = obs.dim();
    let t_len = obs.horizon();
    if j == 0 {
        return Err(Error::InvalidArgument("need at least one state".into()));
    }
    if t_len < j * (p + 1) {
        return Err(Error::Precondition(format!("{t_len} transitions are too few for {j} states in dimension {p}")));
    }
    if j == 1 {
        let fit = fit_linocs_linear(obs, &config.linear)?;
        let residual = residual_norms(obs.values(), std::slice::from_ref(&fit.model.a), std::slice::from_ref(&fit.model.b))[0]
            .iter()
            .map(|r| r * r)
            .sum();
        let model = SwitchingModel::new(vec![fit.model.a], vec![fit.model.b], vec![0; t_len], config.stickiness)?;
        return Ok(SldsFit {
            model,
            outer_iterations: 0,
            residual_scale: 0.0,
            residual,
        });
    }
    let x = obs.values();
    let with_offset = config.linear.with_offset;

    // Initial labels from k-means on stacked lag pairs.
    let features = DMatrix::from_fn(2 * p, t_len, |i, t| if i < p { x[(i, t)] } else { x[(i - p, t + 1)] });
    let labels = kmeans_labels(&features, j, config.seed);
    let mut models: Vec<LinearModel> = Vec::with_capacity(j);
    for s in 0..j {
        let ts: Vec<usize> = (0..t_len).filter(|&t| labels[t] == s).collect();
        let ts = if ts.len() > p { ts } else { (0..t_len).collect() };
        models.push(fit_pairs(x, &ts, with_offset)?);
    }

    let mut path: Vec<usize> = labels;
    let mut tau = 0.0;
    let mut iterations = 0;
    for outer in 1..=config.outer_iters.max(1) {
        iterations = outer;
        let ops: Vec<DMatrix<f64>> = models.iter().map(|m| m.a.clone()).collect();
        let offs: Vec<DVector<f64>> = models.iter().map(|m| m.b.clone()).collect();
        let res = residual_norms(x, &ops, &offs);
        let current: Vec<f64> = (0..t_len).map(|t| res.iter().map(|r| r[t]).fold(f64::INFINITY, f64::min)).collect();
        tau = residual_floor(x).max(median_of(current));
        let mut next = decode_states(&res, config.stickiness, tau)?;
        absorb_short_runs(&mut next, &res, config.min_segment);

        let previous_models = models.clone();
        for s in 0..j {
            let count: usize = state_segments(x, &next, s).iter().map(|g| g.ncols() - 1).sum();
            if count <= p {
                for t in worst_window(&next, &res, config.min_segment.max(2 * (p + 1))) {
                    next[t] = s;
                }
            }
        }
        let fits: Vec<Result<LinearModel>> = (0..j)
            .into_par_iter()
            .map(|s| {
                let segs = state_segments(x, &next, s);
                let shortest = segs.iter().map(|g| g.ncols() - 1).min().unwrap_or(1);
                let mut lin = config.linear.clone();
                lin.max_order = lin.max_order.min(shortest.saturating_sub(1));
                Ok(fit_linocs_segments_from(&segs, &lin, Some(&previous_models[s]))?.model)
            })
            .collect();
        models = fits.into_iter().collect::<Result<_>>()?;
        let stable_path = next == path;
        path = next;
        let moved: f64 = models
            .iter()
            .zip(&previous_models)
            .map(|(a, b)| (&a.a - &b.a).norm() + (&a.b - &b.b).norm())
            .sum();
        if stable_path && moved < config.linear.tol.max(1e-10) {
            break;
        }
    }

    let ops: Vec<DMatrix<f64>> = models.iter().map(|m| m.a.clone()).collect();
    let offs: Vec<DVector<f64>> = models.iter().map(|m| m.b.clone()).collect();
    let res = residual_norms(x, &ops, &offs);
    let residual = (0..t_len).map(|t| res[path[t]][t].powi(2)).sum();
    Ok(SldsFit {
        model: SwitchingModel::new(ops, offs, path, config.stickiness)?,
        outer_iterations: iterations,
        residual_scale: tau,
        residual,
    })
}

/// Pairing of estimated to true operators minimizing summed Frobenius
/// distance; entry `i` is the estimate matched to truth `i`.
pub fn match_models(estimated: &[DMatrix<f64>], truth: &[DMatrix<f64>]) -> Result<Vec<usize>> {
    if estimated.len() != truth.len() {
        return Err(dim_err(format!("{} estimates but {} true operators", estimated.len(), truth.len())));
    }
    let cost = DMatrix::from_fn(truth.len(), estimated.len(), |i, j| (&truth[i] - &estimated[j]).norm());
    linear_sum_assignment(&cost)
}

/// Number of switches in a decoded path.
pub fn switch_count(path: &[usize]) -> usize {
    switch_indices(path).len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::SwitchingBenchmarkSpec;
    use crate::synth::{rotation_operator, simulate_switching, NoiseSpec};

    fn two_state_data() -> (TimeSeries, Vec<usize>, Vec<DMatrix<f64>>, Vec<DVector<f64>>) {
        let ops = vec![
            rotation_operator(2, &[0.3], 0.98).unwrap(),
            rotation_operator(2, &[-0.5], 0.97).unwrap(),
        ];
        let offs = vec![DVector::from_vec(vec![0.2, 0.1]), DVector::from_vec(vec![-0.1, 0.4])];
        let (s, path) = simulate_switching(&ops, &offs, &[40, 70, 120], None, &DVector::from_vec(vec![1.0, 0.0]), 160).unwrap();
        (s, path, ops, offs)
    }

    #[test]
    fn single_state_gives_constant_path() {
        let (s, _, ops, offs) = two_state_data();
        let path = estimate_switches(&s, &ops[..1], &offs[..1], 0.9).unwrap();
        assert!(path.iter().all(|&z| z == 0));
    }

    #[test]
    fn noiseless_path_recovered_exactly() {
        let (s, truth, ops, offs) = two_state_data();
        assert_eq!(estimate_switches(&s, &ops, &offs, 0.98).unwrap(), truth);
    }

    #[test]
    fn uninformative_prior_is_pointwise_argmin() {
        let res = vec![vec![1.0, 3.0, 0.5, 2.0], vec![2.0, 1.0, 0.7, 1.0], vec![1.5, 2.0, 0.1, 9.0]];
        let path = decode_states(&res, 1.0 / 3.0, 1.0).unwrap();
        assert_eq!(path, vec![0, 1, 2, 1]);
    }

    #[test]
    fn relabeling_permutes_path() {
        let (s, _, ops, offs) = two_state_data();
        let a = estimate_switches(&s, &ops, &offs, 0.95).unwrap();
        let b = estimate_switches(&s, &[ops[1].clone(), ops[0].clone()], &[offs[1].clone(), offs[0].clone()], 0.95).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| *x == 1 - *y));
    }

    #[test]
    fn runs_and_absorption() {
        assert_eq!(runs(&[0, 0, 1, 1, 1, 0]), vec![(0, 0, 2), (1, 2, 5), (0, 5, 6)]);
        let res = vec![vec![0.0; 8], vec![1.0; 8]];
        let mut p = vec![0, 0, 0, 1, 0, 0, 0, 0];
        absorb_short_runs(&mut p, &res, 3);
        assert_eq!(p, vec![0; 8]);
    }

    #[test]
    fn matching_recovers_permutation() {
        let ops: Vec<DMatrix<f64>> = (0..3).map(|i| rotation_operator(2, &[0.4 * i as f64 + 0.1], 1.0).unwrap()).collect();
        assert_eq!(match_models(&ops, &ops).unwrap(), vec![0, 1, 2]);
        let swapped = vec![ops[1].clone(), ops[0].clone(), ops[2].clone()];
        assert_eq!(match_models(&swapped, &ops).unwrap(), vec![1, 0, 2]);
        assert!(match_models(&ops[..2], &ops).is_err());
    }

    #[test]
    fn single_state_reduces_to_linear_fit() {
        let (s, _, _, _) = two_state_data();
        let cfg = SldsFitConfig { states: 1, ..SldsFitConfig::default() };
        let fit = fit_linocs_slds(&s, &cfg).unwrap();
        let lin = super::super::linear::fit_linocs_linear(&s, &cfg.linear).unwrap();
        assert!((&fit.model.operators[0] - &lin.model.a).amax() < 1e-8);
    }

    #[test]
    fn noiseless_benchmark_reaches_zero_residual() {
        let bench = SwitchingBenchmarkSpec::default().build(3, &NoiseSpec::gaussian(0.0, 0)).unwrap();
        let cfg = SldsFitConfig { outer_iters: 3, ..SldsFitConfig::default() };
        let fit = fit_linocs_slds(&bench.observed, &cfg).unwrap();
        assert_eq!(fit.model.switch_indices(), bench.truth.switch_indices().iter().copied().collect::<Vec<_>>());
        assert!(fit.residual < 1e-12, "residual {}", fit.residual);
    }
}
