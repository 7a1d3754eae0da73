//! Ground-truth generators and observation noise.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::model::{DecomposedModel, Dynamics, LinearModel, SwitchingModel};
use crate::rng;
use crate::series::TimeSeries;

/// `scale * R`, where `R` is a planar rotation (one angle) or the 3D
/// composition `Rz(c) Ry(b) Rx(a)` for angles `(a, b, c)`.
pub fn rotation_operator(dim: usize, angles: &[f64], scale: f64) -> Result<DMatrix<f64>> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::InvalidArgument("rotation scale must be positive".into()));
    }
    let r = match (dim, angles) {
        (2, &[th]) => planar(th),
        (3, &[a, b, c]) => {
            let (sa, ca) = a.sin_cos();
            let (sb, cb) = b.sin_cos();
            let (sc, cc) = c.sin_cos();
            let rx = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, ca, -sa, 0.0, sa, ca]);
            let ry = DMatrix::from_row_slice(3, 3, &[cb, 0.0, sb, 0.0, 1.0, 0.0, -sb, 0.0, cb]);
            let rz = DMatrix::from_row_slice(3, 3, &[cc, -sc, 0.0, sc, cc, 0.0, 0.0, 0.0, 1.0]);
            rz * ry * rx
        }
        (2 | 3, _) => {
            return Err(Error::InvalidArgument(format!(
                "a {dim}D rotation takes {} angle(s), got {}",
                if dim == 2 { 1 } else { 3 },
                angles.len()
            )))
        }
        _ => return Err(Error::InvalidArgument(format!("rotations are 2D or 3D, got {dim}"))),
    };
    Ok(r * scale)
}

fn planar(th: f64) -> DMatrix<f64> {
    let (s, c) = th.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
}

/// Planar rotation in the first two coordinates, identity in the third.
pub fn cylinder_operator(angle: f64) -> DMatrix<f64> {
    let mut a = DMatrix::identity(3, 3);
    a.view_mut((0, 0), (2, 2)).copy_from(&planar(angle));
    a
}

/// Runs `model` forward from `x0` for `horizon` steps. Errors if the
/// trajectory leaves the finite range.
pub fn simulate(model: &impl Dynamics, x0: &DVector<f64>, horizon: usize) -> Result<TimeSeries> {
    if x0.len() != model.dim() {
        return Err(dim_err("initial state does not match model dimension"));
    }
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let mut values = DMatrix::zeros(x0.len(), horizon + 1);
    values.set_column(0, x0);
    let mut x = x0.clone();
    for t in 0..horizon {
        x = model.step(t, &x)?;
        values.set_column(t + 1, &x);
    }
    TimeSeries::new(values)
}

pub fn simulate_linear(model: &LinearModel, x0: &DVector<f64>, horizon: usize) -> Result<TimeSeries> {
    simulate(model, x0, horizon)
}

/// Piecewise-linear simulation. Segment `i` spans
/// `[switch_times[i-1], switch_times[i])` and uses state `labels[i]`, or
/// `i mod J` when no labels are given.
pub fn simulate_switching(
    operators: &[DMatrix<f64>],
    offsets: &[DVector<f64>],
    switch_times: &[usize],
    labels: Option<&[usize]>,
    x0: &DVector<f64>,
    horizon: usize,
) -> Result<(TimeSeries, Vec<usize>)> {
    let j = operators.len();
    let mut bounds = vec![0];
    for &s in switch_times {
        if s <= *bounds.last().unwrap() || s >= horizon {
            return Err(Error::InvalidArgument(format!(
                "switch times must be strictly increasing inside (0, {horizon}), got {s}"
            )));
        }
        bounds.push(s);
    }
    bounds.push(horizon);
    let segments = bounds.len() - 1;
    if let Some(l) = labels {
        if l.len() != segments {
            return Err(dim_err(format!("{segments} segments but {} labels", l.len())));
        }
    }
    let mut path = Vec::with_capacity(horizon);
    for seg in 0..segments {
        let z = labels.map_or(seg % j.max(1), |l| l[seg]);
        path.extend(std::iter::repeat_n(z, bounds[seg + 1] - bounds[seg]));
    }
    let model = SwitchingModel::new(operators.to_vec(), offsets.to_vec(), path, 0.5)?;
    let series = simulate(&model, x0, horizon)?;
    Ok((series, model.state_path))
}

/// `x_{t+1} = (sum_j c_{jt} f_j) x_t` with `coefficients` of shape `J x horizon`.
pub fn simulate_dlds(
    operators: &[DMatrix<f64>],
    coefficients: &DMatrix<f64>,
    x0: &DVector<f64>,
) -> Result<TimeSeries> {
    let model = DecomposedModel::new(operators.to_vec(), coefficients.clone())?;
    simulate(&model, x0, coefficients.ncols())
}

/// Coefficient path that holds one operator at a time with amplitude
/// `amplitude`, cycling through `J` regimes over `segments` equal segments,
/// and cross-fades linearly between neighbours over `overlap` (a fraction
/// of the segment length) centred on each boundary.
pub fn pseudo_switching_path(j: usize, segments: usize, horizon: usize, overlap: f64, amplitude: f64) -> Result<DMatrix<f64>> {
    if j == 0 || segments == 0 || horizon < segments {
        return Err(Error::InvalidArgument("need J >= 1 and at least one step per segment".into()));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::InvalidArgument("overlap must lie in [0, 1)".into()));
    }
    let seg_len = horizon as f64 / segments as f64;
    let half = 0.5 * overlap * seg_len;
    let mut c = DMatrix::zeros(j, horizon);
    for t in 0..horizon {
        let pos = t as f64 + 0.5;
        let seg = ((pos / seg_len) as usize).min(segments - 1);
        let start = seg as f64 * seg_len;
        let end = start + seg_len;
        // Blend with the neighbour whose boundary is within reach.
        let (mix, other) = if seg + 1 < segments && half > 0.0 && pos > end - half {
            ((pos - (end - half)) / (2.0 * half), seg + 1)
        } else if seg > 0 && half > 0.0 && pos < start + half {
            ((start + half - pos) / (2.0 * half), seg - 1)
        } else {
            (0.0, seg)
        };
        c[(seg % j, t)] += amplitude * (1.0 - mix);
        c[(other % j, t)] += amplitude * mix;
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorenzParams {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
    pub dt: f64,
    pub x0: [f64; 3],
}

impl Default for LorenzParams {
    fn default() -> Self {
        Self {
            sigma: 10.0,
            rho: 28.0,
            beta: 8.0 / 3.0,
            dt: 0.1 / 9.0,
            x0: [1.0, 1.0, 1.0],
        }
    }
}

impl LorenzParams {
    fn field(&self, s: [f64; 3]) -> [f64; 3] {
        [
            self.sigma * (s[1] - s[0]),
            s[0] * (self.rho - s[2]) - s[1],
            s[0] * s[1] - self.beta * s[2],
        ]
    }

    fn rk4(&self, s: [f64; 3], h: f64) -> [f64; 3] {
        let add = |a: [f64; 3], k: [f64; 3], f: f64| [a[0] + f * k[0], a[1] + f * k[1], a[2] + f * k[2]];
        let k1 = self.field(s);
        let k2 = self.field(add(s, k1, h / 2.0));
        let k3 = self.field(add(s, k2, h / 2.0));
        let k4 = self.field(add(s, k3, h));
        let mut out = s;
        for i in 0..3 {
            out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out
    }
}

/// `points` samples of the Lorenz system, one RK4 step of `dt` apart.
pub fn simulate_lorenz(params: &LorenzParams, points: usize) -> Result<TimeSeries> {
    if !(params.dt.is_finite() && params.dt > 0.0) {
        return Err(Error::InvalidArgument("Lorenz dt must be positive".into()));
    }
    if points < 2 {
        return Err(Error::InvalidArgument("need at least two Lorenz samples".into()));
    }
    let mut values = DMatrix::zeros(3, points);
    let mut s = params.x0;
    for t in 0..points {
        values.set_column(t, &DVector::from_row_slice(&s));
        s = params.rk4(s, params.dt);
    }
    TimeSeries::with_dt(values, params.dt)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseKind {
    GaussianIid { sigma: f64 },
    /// Adds `sigma * sin(gamma * t)` to every coordinate of column `t`.
    StructuredSine { sigma: f64, gamma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(flatten)]
    pub kind: NoiseKind,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseSpec {
    pub fn gaussian(sigma: f64, seed: u64) -> Self {
        Self {
            kind: NoiseKind::GaussianIid { sigma },
            seed,
        }
    }

    pub fn sine(sigma: f64, gamma: f64) -> Self {
        Self {
            kind: NoiseKind::StructuredSine { sigma, gamma },
            seed: 0,
        }
    }

    /// Same family and seed at a different level.
    pub fn with_sigma(self, sigma: f64) -> Self {
        let kind = match self.kind {
            NoiseKind::GaussianIid { .. } => NoiseKind::GaussianIid { sigma },
            NoiseKind::StructuredSine { gamma, .. } => NoiseKind::StructuredSine { sigma, gamma },
        };
        Self { kind, ..self }
    }
}

/// Returns a noisy copy of `series`; the input is left untouched.
pub fn add_noise(series: &TimeSeries, spec: &NoiseSpec) -> Result<TimeSeries> {
    let mut values = series.values().clone();
    match spec.kind {
        NoiseKind::GaussianIid { sigma } => {
            if !(sigma.is_finite() && sigma >= 0.0) {
                return Err(Error::InvalidArgument("noise sigma must be finite and >= 0".into()));
            }
            if sigma > 0.0 {
                let normal = Normal::new(0.0, sigma).expect("validated sigma");
                let mut rng = rng::stream(spec.seed, "observation-noise");
                // Column-major fill: time outer, coordinate inner.
                for v in values.iter_mut() {
                    *v += normal.sample(&mut rng);
                }
            }
        }
        NoiseKind::StructuredSine { sigma, gamma } => {
            if !(sigma.is_finite() && gamma.is_finite()) {
                return Err(Error::InvalidArgument("sine noise parameters must be finite".into()));
            }
            if sigma != 0.0 {
                for (t, mut col) in values.column_iter_mut().enumerate() {
                    let shift = sigma * (gamma * t as f64).sin();
                    col.add_scalar_mut(shift);
                }
            }
        }
    }
    TimeSeries::with_dt(values, series.dt())
}

/// `n` draws from `Uniform(0, 1)` for `purpose` under `seed`.
pub fn uniform_vector(seed: u64, purpose: &str, n: usize) -> DVector<f64> {
    let mut rng = rng::stream(seed, purpose);
    DVector::from_fn(n, |_, _| rng.random::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::eigenvalues;
    use crate::predict::predict_full_lookahead;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn quarter_turn() {
        let r = rotation_operator(2, &[FRAC_PI_2], 1.0).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!((r - expect).amax() < 1e-15);
    }

    #[test]
    fn planar_spectrum_on_unit_circle() {
        for ev in eigenvalues(&rotation_operator(2, &[0.37], 1.0).unwrap()) {
            assert!((ev.norm() - 1.0).abs() < 1e-12);
            assert!((ev.im.abs() - 0.37_f64.sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn spatial_rotation_is_orthogonal() {
        let r = rotation_operator(3, &[0.3, -1.1, 2.0], 1.0).unwrap();
        assert!((r.transpose() * &r - DMatrix::identity(3, 3)).amax() < 1e-12);
        assert!((r.determinant() - 1.0).abs() < 1e-12);
        let s = rotation_operator(3, &[0.3, -1.1, 2.0], 0.5).unwrap();
        assert!((s - r * 0.5).amax() < 1e-15);
    }

    #[test]
    fn rotation_rejects_bad_angles() {
        assert!(rotation_operator(2, &[0.1, 0.2], 1.0).is_err());
        assert!(rotation_operator(3, &[0.1], 1.0).is_err());
        assert!(rotation_operator(4, &[0.1], 1.0).is_err());
        assert!(rotation_operator(2, &[0.1], 0.0).is_err());
    }

    #[test]
    fn zero_operator_yields_offset() {
        let m = LinearModel::new(DMatrix::zeros(2, 2), DVector::from_vec(vec![1.0, 1.0])).unwrap();
        let s = simulate_linear(&m, &DVector::from_vec(vec![5.0, -3.0]), 10).unwrap();
        for t in 1..=10 {
            assert_eq!(s.column(t), DVector::from_vec(vec![1.0, 1.0]));
        }
    }

    #[test]
    fn rotation_preserves_norm() {
        let m = LinearModel::without_offset(rotation_operator(2, &[0.3], 1.0).unwrap()).unwrap();
        let s = simulate_linear(&m, &DVector::from_vec(vec![0.6, 0.8]), 500).unwrap();
        for t in 0..=500 {
            assert!((s.column(t).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cylinder_keeps_radius() {
        let m = LinearModel::new(cylinder_operator(0.2), DVector::from_vec(vec![0.0, 0.0, 0.1])).unwrap();
        let s = simulate_linear(&m, &DVector::from_vec(vec![1.0, 0.0, 0.0]), 200).unwrap();
        for t in 0..=200 {
            let c = s.column(t);
            assert!((c[0].hypot(c[1]) - 1.0).abs() < 1e-12);
            assert!((c[2] - 0.1 * t as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn single_segment_switching_is_linear() {
        let a = rotation_operator(2, &[0.2], 0.99).unwrap();
        let b = DVector::from_vec(vec![0.1, 0.3]);
        let x0 = DVector::from_vec(vec![1.0, 2.0]);
        let (s, path) = simulate_switching(&[a.clone()], &[b.clone()], &[], None, &x0, 40).unwrap();
        let lin = simulate_linear(&LinearModel::new(a, b).unwrap(), &x0, 40).unwrap();
        assert_eq!(s, lin);
        assert!(path.iter().all(|&z| z == 0));
    }

    #[test]
    fn state_path_matches_segments() {
        let ops: Vec<_> = (0..3).map(|i| rotation_operator(2, &[0.1 * i as f64], 1.0).unwrap()).collect();
        let offs = vec![DVector::zeros(2); 3];
        let (_, path) = simulate_switching(&ops, &offs, &[10, 25, 31], None, &DVector::from_vec(vec![1.0, 0.0]), 50).unwrap();
        let count = |z| path.iter().filter(|&&s| s == z).count();
        assert_eq!((count(0), count(1), count(2)), (10 + 19, 15, 6));
        assert!(simulate_switching(&ops, &offs, &[10, 10], None, &DVector::from_vec(vec![1.0, 0.0]), 50).is_err());
        assert!(simulate_switching(&ops, &offs, &[50], None, &DVector::from_vec(vec![1.0, 0.0]), 50).is_err());
    }

    #[test]
    fn one_hot_dlds_is_linear() {
        let f = rotation_operator(3, &[0.1, 0.2, 0.3], 1.0).unwrap() / 3f64.sqrt();
        let c = DMatrix::from_element(1, 30, 3f64.sqrt());
        let x0 = DVector::from_vec(vec![0.2160895, 0.97627445, 0.00623026]);
        let s = simulate_dlds(&[f.clone()], &c, &x0).unwrap();
        let lin = simulate_linear(&LinearModel::without_offset(f * 3f64.sqrt()).unwrap(), &x0, 30).unwrap();
        assert!((s.values() - lin.values()).amax() < 1e-12);
    }

    #[test]
    fn pseudo_switching_path_shape() {
        let c = pseudo_switching_path(3, 6, 1000, 0.05, 2.0).unwrap();
        assert_eq!(c.shape(), (3, 1000));
        for t in 0..1000 {
            let col = c.column(t);
            assert!((col.sum() - 2.0).abs() < 1e-12);
            assert!(col.iter().filter(|v| **v > 0.0).count() <= 2);
        }
        // Mid-segment steps are one-hot.
        assert_eq!(c.column(80).iter().filter(|v| **v > 0.0).count(), 1);
        // Boundary steps blend two regimes.
        assert_eq!(c.column(166).iter().filter(|v| **v > 0.0).count(), 2);
    }

    #[test]
    fn lorenz_equilibrium_is_constant() {
        let mut p = LorenzParams::default();
        let r = (p.beta * (p.rho - 1.0)).sqrt();
        p.x0 = [r, r, p.rho - 1.0];
        let s = simulate_lorenz(&p, 101).unwrap();
        for t in 0..101 {
            assert!((s.column(t) - s.column(0)).amax() < 1e-6);
        }
    }

    #[test]
    fn lorenz_step_doubling_converges() {
        let p = LorenzParams::default();
        let coarse = simulate_lorenz(&p, 11).unwrap();
        let fine = simulate_lorenz(&LorenzParams { dt: p.dt / 2.0, ..p }, 21).unwrap();
        let finer = simulate_lorenz(&LorenzParams { dt: p.dt / 4.0, ..p }, 41).unwrap();
        let e1 = (coarse.column(10) - fine.column(20)).norm();
        let e2 = (fine.column(20) - finer.column(40)).norm();
        // Fourth-order method: halving dt cuts the gap by about 16.
        assert!(e1 / e2 > 10.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn zero_noise_is_identity() {
        let s = TimeSeries::new(DMatrix::from_fn(2, 5, |i, j| (i * 5 + j) as f64 * 0.3)).unwrap();
        assert_eq!(add_noise(&s, &NoiseSpec::gaussian(0.0, 3)).unwrap(), s);
        assert_eq!(add_noise(&s, &NoiseSpec::sine(0.0, 3.0)).unwrap(), s);
    }

    #[test]
    fn gaussian_noise_statistics() {
        let s = TimeSeries::new(DMatrix::zeros(2, 60_001)).unwrap();
        let n = add_noise(&s, &NoiseSpec::gaussian(0.3, 11)).unwrap();
        let v = n.values();
        let mean = v.mean();
        let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
        assert!((0.27..=0.33).contains(&std), "std {std}");
        assert_eq!(n, add_noise(&s, &NoiseSpec::gaussian(0.3, 11)).unwrap());
    }

    #[test]
    fn sine_noise_is_exact() {
        let s = TimeSeries::new(DMatrix::zeros(3, 50)).unwrap();
        let n = add_noise(&s, &NoiseSpec::sine(0.5, 3.0)).unwrap();
        for t in 0..50 {
            for i in 0..3 {
                assert_eq!(n.values()[(i, t)], 0.5 * (3.0 * t as f64).sin());
            }
        }
    }

    #[test]
    fn generators_round_trip_through_full_lookahead() {
        let a = rotation_operator(2, &[0.1], 1.0).unwrap();
        let m = LinearModel::new(a, DVector::from_vec(vec![0.3, 0.7])).unwrap();
        let x0 = DVector::from_vec(vec![0.5, 0.2]);
        let s = simulate_linear(&m, &x0, 300).unwrap();
        let r = predict_full_lookahead(&m, &x0, 300).unwrap();
        assert!((r.series.values() - s.values()).amax() < 1e-9);
    }
}
