//! Synthetic benchmark systems with their ground truth.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{DecomposedModel, LinearModel, SwitchingModel};
use crate::synth::{
    add_noise, cylinder_operator, pseudo_switching_path, rotation_operator, simulate, simulate_lorenz,
    simulate_switching, uniform_vector, LorenzParams, NoiseSpec,
};
use crate::series::TimeSeries;

/// Noisy observations of a time-invariant affine system plus a long
/// noiseless continuation from the same initial state.
#[derive(Debug, Clone)]
pub struct LinearBenchmark {
    pub truth: LinearModel,
    pub clean: TimeSeries,
    pub observed: TimeSeries,
    pub extension: TimeSeries,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinearBenchmarkSpec {
    /// Rotation angle per step (radians).
    pub angle: f64,
    pub horizon: usize,
    /// Length of the noiseless continuation used for horizon tests.
    pub extension: usize,
    /// Constant drift along the third axis; `Some` selects the 3D cylinder.
    pub drift: Option<f64>,
}

impl Default for LinearBenchmarkSpec {
    fn default() -> Self {
        Self {
            angle: 0.1,
            horizon: 500,
            extension: 40_000,
            drift: None,
        }
    }
}

impl LinearBenchmarkSpec {
    pub fn planar() -> Self {
        Self::default()
    }

    pub fn structured_noise() -> Self {
        Self::default()
    }

    pub fn cylinder() -> Self {
        Self {
            angle: 0.15,
            drift: Some(0.1),
            ..Self::default()
        }
    }

    /// Rotation plus offset, offsets and initial state drawn from `Uniform(0, 1)`.
    pub fn build(&self, seed: u64, noise: &NoiseSpec) -> Result<LinearBenchmark> {
        let (a, b, x0) = match self.drift {
            None => (
                rotation_operator(2, &[self.angle], 1.0)?,
                uniform_vector(seed, "offset", 2),
                uniform_vector(seed, "initial-state", 2),
            ),
            Some(drift) => {
                let mut b = uniform_vector(seed, "offset", 3);
                b[2] = drift;
                (cylinder_operator(self.angle), b, uniform_vector(seed, "initial-state", 3))
            }
        };
        let truth = LinearModel::new(a, b)?;
        let extension = simulate(&truth, &x0, self.extension.max(self.horizon))?;
        let clean = extension.slice(0, self.horizon + 1)?;
        let observed = add_noise(&clean, noise)?;
        Ok(LinearBenchmark {
            truth,
            clean,
            observed,
            extension,
        })
    }
}

#[derive(Debug, Clone)]
pub struct SwitchingBenchmark {
    pub truth: SwitchingModel,
    pub clean: TimeSeries,
    pub observed: TimeSeries,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SwitchingBenchmarkSpec {
    pub states: usize,
    pub horizon: usize,
    /// Switch points; the default splits the series into three equal segments.
    pub switch_times: Vec<usize>,
    /// Per-state rotation angles about x, y and z.
    pub angles: Vec<[f64; 3]>,
    /// Contraction applied to every state operator.
    pub scale: f64,
}

impl Default for SwitchingBenchmarkSpec {
    fn default() -> Self {
        Self {
            states: 3,
            horizon: 300,
            switch_times: vec![100, 200],
            angles: vec![[0.3, 0.0, 0.0], [0.0, 0.3, 0.0], [0.0, 0.0, 0.3]],
            scale: 0.95,
        }
    }
}

impl SwitchingBenchmarkSpec {
    pub fn build(&self, seed: u64, noise: &NoiseSpec) -> Result<SwitchingBenchmark> {
        let operators: Vec<DMatrix<f64>> = self
            .angles
            .iter()
            .take(self.states)
            .map(|a| rotation_operator(3, a, self.scale))
            .collect::<Result<_>>()?;
        let offsets: Vec<DVector<f64>> = (0..self.states)
            .map(|j| uniform_vector(seed, &format!("state-offset-{j}"), 3))
            .collect();
        let x0 = uniform_vector(seed, "initial-state", 3);
        let (clean, path) = simulate_switching(&operators, &offsets, &self.switch_times, None, &x0, self.horizon)?;
        let truth = SwitchingModel::new(operators, offsets, path, 0.98)?;
        let observed = add_noise(&clean, noise)?;
        Ok(SwitchingBenchmark { truth, clean, observed })
    }
}

#[derive(Debug, Clone)]
pub struct DecomposedBenchmark {
    pub truth: DecomposedModel,
    pub clean: TimeSeries,
    pub observed: TimeSeries,
}

/// Three unit-norm rotations blended along a cross-fading coefficient path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecomposedBenchmarkSpec {
    pub horizon: usize,
    /// Number of constant-regime segments; regimes cycle through the operators.
    pub segments: usize,
    /// Cross-fade width as a fraction of a segment.
    pub overlap: f64,
    pub angles: Vec<[f64; 3]>,
    pub x0: [f64; 3],
}

impl Default for DecomposedBenchmarkSpec {
    fn default() -> Self {
        Self {
            horizon: 1000,
            segments: 3,
            overlap: 0.05,
            angles: vec![[0.05, 0.0, 0.0], [0.0, 0.05, 0.0], [0.0, 0.0, 0.05]],
            x0: [0.2160895, 0.97627445, 0.00623026],
        }
    }
}

impl DecomposedBenchmarkSpec {
    pub fn pseudo_switching() -> Self {
        Self::default()
    }

    /// Longer run in which regimes recur.
    pub fn recurring() -> Self {
        Self {
            horizon: 1500,
            segments: 6,
            ..Self::default()
        }
    }

    pub fn build(&self, noise: &NoiseSpec) -> Result<DecomposedBenchmark> {
        let operators: Vec<DMatrix<f64>> = self
            .angles
            .iter()
            .map(|a| {
                let r = rotation_operator(3, a, 1.0)?;
                let n = r.norm();
                Ok(r / n)
            })
            .collect::<Result<_>>()?;
        // Rotations have Frobenius norm sqrt(3); the amplitude restores it.
        let path = pseudo_switching_path(operators.len(), self.segments, self.horizon, self.overlap, 3f64.sqrt())?;
        let truth = DecomposedModel::new(operators, path)?;
        let clean = simulate(&truth, &DVector::from_row_slice(&self.x0), self.horizon)?;
        let observed = add_noise(&clean, noise)?;
        Ok(DecomposedBenchmark { truth, clean, observed })
    }
}

/// The Lorenz trajectory used for time-varying fits.
pub fn lorenz_benchmark(points: usize) -> Result<TimeSeries> {
    simulate_lorenz(&LorenzParams::default(), points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Dynamics;
    use crate::predict::predict_full_lookahead;

    #[test]
    fn linear_benchmark_is_reproducible() {
        let spec = LinearBenchmarkSpec { extension: 600, ..LinearBenchmarkSpec::planar() };
        let a = spec.build(3, &NoiseSpec::gaussian(0.3, 3)).unwrap();
        let b = spec.build(3, &NoiseSpec::gaussian(0.3, 3)).unwrap();
        assert_eq!(a.observed, b.observed);
        assert_eq!(a.clean.len(), 501);
        assert_eq!(a.extension.len(), 601);
        assert!(a.truth.b.iter().all(|v| (0.0..1.0).contains(v)));
    }

    #[test]
    fn cylinder_benchmark_drifts() {
        let spec = LinearBenchmarkSpec { extension: 100, ..LinearBenchmarkSpec::cylinder() };
        let bench = spec.build(0, &NoiseSpec::gaussian(0.0, 0)).unwrap();
        assert_eq!(bench.truth.b[2], 0.1);
        assert_eq!(bench.truth.dim(), 3);
    }

    #[test]
    fn switching_benchmark_round_trips() {
        let bench = SwitchingBenchmarkSpec::default().build(1, &NoiseSpec::gaussian(0.0, 1)).unwrap();
        assert_eq!(bench.truth.switch_indices(), vec![100, 200]);
        let r = predict_full_lookahead(&bench.truth, &bench.clean.column(0), 300).unwrap();
        assert!((r.series.values() - bench.clean.values()).amax() < 1e-9);
    }

    #[test]
    fn decomposed_benchmark_round_trips() {
        let bench = DecomposedBenchmarkSpec::pseudo_switching().build(&NoiseSpec::gaussian(0.0, 0)).unwrap();
        for f in &bench.truth.operators {
            assert!((f.norm() - 1.0).abs() < 1e-12);
        }
        let r = predict_full_lookahead(&bench.truth, &bench.clean.column(0), 1000).unwrap();
        assert!((r.series.values() - bench.clean.values()).amax() < 1e-9);
    }
}
