//! Per-order weight schedules for multi-step reconstruction losses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Errors above this are clipped before they enter [`ScheduleKind::JointKE`].
pub const ERROR_CAP: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScheduleKind {
    /// Orders switch on one at a time once the newest active order's error
    /// drops below `threshold`.
    SequentialActivation {
        threshold: f64,
        #[serde(default = "one")]
        base_weight: f64,
        /// Orders added per activation.
        #[serde(default = "one_usize")]
        step: usize,
        /// Activation freezes while any active order's error exceeds this.
        #[serde(default)]
        error_guard: Option<f64>,
    },
    /// `w_k = exp(-sigma_w k)` for every iteration.
    ExponentialDecay { sigma_w: f64 },
    /// `w_k = exp(-decay_k k) (1 + growth_e min(e_k, cap))`, rescaled to `w_0 = 1`.
    #[serde(rename = "joint-ke")]
    JointKE { decay_k: f64, growth_e: f64 },
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSchedule {
    #[serde(flatten)]
    pub kind: ScheduleKind,
    /// Largest order `K`; weights run over `0..=K`.
    pub max_order: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleState {
    pub active_order: usize,
    pub iteration: usize,
    /// Latest error per order; infinite until first evaluated.
    pub last_errors: Vec<f64>,
}

impl WeightSchedule {
    pub fn new(kind: ScheduleKind, max_order: usize) -> Result<Self> {
        let s = Self { kind, max_order };
        s.validate()?;
        Ok(s)
    }

    pub fn exponential(sigma_w: f64, max_order: usize) -> Self {
        Self::new(ScheduleKind::ExponentialDecay { sigma_w }, max_order).expect("positive sigma_w")
    }

    pub fn sequential(threshold: f64, max_order: usize) -> Self {
        Self::new(
            ScheduleKind::SequentialActivation {
                threshold,
                base_weight: 1.0,
                step: 1,
                error_guard: None,
            },
            max_order,
        )
        .expect("positive threshold")
    }

    /// Equal weights on every order from the start.
    pub fn uniform(max_order: usize) -> Self {
        Self::exponential(f64::MIN_POSITIVE, max_order)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        match self.kind {
            ScheduleKind::SequentialActivation { threshold, base_weight, step, error_guard } => {
                if !(threshold > 0.0 && threshold.is_finite()) {
                    return bad("activation threshold must be positive");
                }
                if !(base_weight > 0.0 && base_weight.is_finite()) {
                    return bad("base weight must be positive");
                }
                if step == 0 {
                    return bad("activation step must be at least 1");
                }
                if error_guard.is_some_and(|g| g.is_nan() || g <= 0.0) {
                    return bad("error guard must be positive");
                }
            }
            ScheduleKind::ExponentialDecay { sigma_w } => {
                if !(sigma_w > 0.0 && sigma_w.is_finite()) {
                    return bad("sigma_w must be positive");
                }
            }
            ScheduleKind::JointKE { decay_k, growth_e } => {
                if !(decay_k > 0.0 && decay_k.is_finite() && growth_e >= 0.0 && growth_e.is_finite()) {
                    return bad("decay_k must be positive and growth_e non-negative");
                }
                if decay_k <= growth_e {
                    return bad("decay_k must exceed growth_e");
                }
            }
        }
        Ok(())
    }

    pub fn initial_state(&self) -> ScheduleState {
        ScheduleState {
            active_order: 0,
            iteration: 0,
            last_errors: vec![f64::INFINITY; self.max_order + 1],
        }
    }

    /// Weights `w_0..=w_K` for the current state.
    pub fn weights_for_iteration(&self, state: &ScheduleState) -> Vec<f64> {
        let k_max = self.max_order;
        match self.kind {
            ScheduleKind::SequentialActivation { base_weight, .. } => (0..=k_max)
                .map(|k| if k <= state.active_order { base_weight } else { 0.0 })
                .collect(),
            ScheduleKind::ExponentialDecay { sigma_w } => (0..=k_max).map(|k| (-sigma_w * k as f64).exp()).collect(),
            ScheduleKind::JointKE { decay_k, growth_e } => {
                let raw = |k: usize| {
                    let e = state.last_errors.get(k).copied().unwrap_or(f64::INFINITY);
                    (-decay_k * k as f64).exp() * (1.0 + growth_e * e.min(ERROR_CAP))
                };
                let w0 = raw(0);
                (0..=k_max).map(|k| raw(k) / w0).collect()
            }
        }
    }

    /// Records `errors` and, for sequential activation, switches on the next
    /// order(s) when the newest active order is under threshold.
    pub fn advance(&self, state: &ScheduleState, errors: &[f64]) -> ScheduleState {
        let mut next = state.clone();
        next.iteration += 1;
        for (slot, &e) in next.last_errors.iter_mut().zip(errors) {
            *slot = if e.is_nan() { f64::INFINITY } else { e };
        }
        if let ScheduleKind::SequentialActivation { threshold, step, error_guard, .. } = self.kind {
            let current = next.last_errors.get(state.active_order).copied().unwrap_or(f64::INFINITY);
            let guarded = error_guard.is_some_and(|g| next.last_errors[..=state.active_order.min(self.max_order)].iter().any(|&e| e > g));
            if current < threshold && !guarded {
                next.active_order = (state.active_order + step).min(self.max_order);
            }
        }
        next
    }

    /// Highest order with non-zero weight under `state`.
    pub fn effective_order(&self, state: &ScheduleState) -> usize {
        match self.kind {
            ScheduleKind::SequentialActivation { .. } => state.active_order.min(self.max_order),
            _ => self.max_order,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_values() {
        let s = WeightSchedule::exponential(0.01, 80);
        let w = s.weights_for_iteration(&s.initial_state());
        assert_eq!(w[0], 1.0);
        assert!((w[80] - 0.449_328_964_117_221_6).abs() < 1e-12);
    }

    #[test]
    fn sequential_starts_with_base_only() {
        let s = WeightSchedule::new(
            ScheduleKind::SequentialActivation { threshold: 0.1, base_weight: 2.0, step: 1, error_guard: None },
            4,
        )
        .unwrap();
        assert_eq!(s.weights_for_iteration(&s.initial_state()), vec![2.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn joint_collapses_to_exponential() {
        let j = WeightSchedule::new(ScheduleKind::JointKE { decay_k: 0.2, growth_e: 0.0 }, 10).unwrap();
        let e = WeightSchedule::exponential(0.2, 10);
        let mut st = j.initial_state();
        st.last_errors = (0..=10).map(|k| k as f64 * 0.7).collect();
        let a = j.weights_for_iteration(&st);
        let b = e.weights_for_iteration(&st);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn joint_rejects_slow_decay() {
        assert!(WeightSchedule::new(ScheduleKind::JointKE { decay_k: 0.1, growth_e: 0.1 }, 3).is_err());
        assert!(WeightSchedule::new(ScheduleKind::JointKE { decay_k: 0.1, growth_e: 0.2 }, 3).is_err());
    }

    #[test]
    fn joint_grows_with_error() {
        let j = WeightSchedule::new(ScheduleKind::JointKE { decay_k: 0.5, growth_e: 0.2 }, 2).unwrap();
        let mut st = j.initial_state();
        st.last_errors = vec![1.0, 1.0, 1.0];
        let low = j.weights_for_iteration(&st);
        st.last_errors = vec![1.0, 1.0, 5.0];
        let high = j.weights_for_iteration(&st);
        assert!(high[2] > low[2]);
        assert_eq!(high[0], 1.0);
    }

    #[test]
    fn activation_rule() {
        let s = WeightSchedule::sequential(0.1, 3);
        let st = s.initial_state();
        let up = s.advance(&st, &[0.05, 9.0, 9.0, 9.0]);
        assert_eq!(up.active_order, 1);
        let same = s.advance(&st, &[0.5, 0.0, 0.0, 0.0]);
        assert_eq!(same.active_order, 0);
        assert_eq!(same.iteration, 1);
    }

    #[test]
    fn activation_saturates() {
        let s = WeightSchedule::sequential(0.1, 3);
        let mut st = s.initial_state();
        for _ in 0..10 {
            st = s.advance(&st, &[0.0; 4]);
        }
        assert_eq!(st.active_order, 3);
        assert_eq!(s.weights_for_iteration(&st), vec![1.0; 4]);
    }

    #[test]
    fn guard_freezes_activation() {
        let s = WeightSchedule::new(
            ScheduleKind::SequentialActivation { threshold: 2.0, base_weight: 1.0, step: 1, error_guard: Some(8.0) },
            5,
        )
        .unwrap();
        let mut st = s.initial_state();
        st.active_order = 2;
        assert_eq!(s.advance(&st, &[0.1, 9.0, 1.0, 0.0, 0.0, 0.0]).active_order, 2);
        assert_eq!(s.advance(&st, &[0.1, 1.0, 1.0, 50.0, 0.0, 0.0]).active_order, 3);
    }
}
