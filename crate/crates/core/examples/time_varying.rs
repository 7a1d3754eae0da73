//! Fit one operator per step to a Lorenz trajectory and compare the
//! lookahead fit with smoothed one-step fits.
//!
//! ```text
//! cargo run --release --example time_varying
//! ```

use linocs::benchmarks::lorenz_benchmark;
use linocs::metrics::evaluate_predictions;
use linocs::solvers::{fit_linocs_ltv, LtvFitConfig};

fn main() -> linocs::Result<()> {
    let obs = lorenz_benchmark(900)?;
    let lin = fit_linocs_ltv(&obs, &LtvFitConfig::default())?;
    let h = &lin.full_lookahead_history;
    println!(
        "linocs: full-lookahead MSE {:.3e} after init, {:.3e} after {} sweeps",
        h[0],
        h[h.len() - 1],
        lin.iterations
    );

    let mut fits = vec![("linocs".to_string(), lin.model)];
    for w in [0.1, 2.0, 20.0] {
        fits.push((format!("one-step, smooth {w}"), fit_linocs_ltv(&obs, &LtvFitConfig::one_step(w))?.model));
    }
    for (name, model) in &fits {
        let r = evaluate_predictions(model, &obs, &obs, &[5])?;
        println!(
            "{name:>20}: 1-step {:.2e}, order-5 {:.2e}, full lookahead {:.2e}",
            r.mse_one_step.unwrap_or(f64::NAN),
            r.mse_ims[&5].unwrap_or(f64::NAN),
            r.mse_full_lookahead.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
