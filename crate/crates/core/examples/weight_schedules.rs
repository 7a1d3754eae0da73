//! How the per-order weight schedules evolve as order errors come in.
//!
//! ```text
//! cargo run --example weight_schedules
//! ```

use linocs::weights::{ScheduleKind, WeightSchedule};

fn show(label: &str, w: &[f64]) {
    let cells: Vec<String> = w.iter().map(|v| format!("{v:.2}")).collect();
    println!("{label:<28} [{}]", cells.join(" "));
}

fn main() -> linocs::Result<()> {
    let k = 6;
    let exp = WeightSchedule::exponential(0.3, k);
    show("exponential decay, 0.3", &exp.weights_for_iteration(&exp.initial_state()));

    // Orders switch on one at a time while the newest one fits well.
    let seq = WeightSchedule::new(
        ScheduleKind::SequentialActivation { threshold: 0.5, base_weight: 1.0, step: 1, error_guard: Some(2.0) },
        k,
    )?;
    let mut state = seq.initial_state();
    for (it, errs) in [[0.1; 7], [0.2; 7], [0.9; 7], [0.3; 7], [0.4; 7]].iter().enumerate() {
        show(&format!("sequential, iteration {it}"), &seq.weights_for_iteration(&state));
        state = seq.advance(&state, errs);
    }

    // Joint schedule: decays with order, grows with the order's error.
    let joint = WeightSchedule::new(ScheduleKind::JointKE { decay_k: 0.5, growth_e: 0.2 }, k)?;
    let errors = [0.1, 0.2, 0.4, 0.8, 1.6, 3.2, 6.4];
    let state = joint.advance(&joint.initial_state(), &errors);
    show("joint, growing errors", &joint.weights_for_iteration(&state));
    Ok(())
}
