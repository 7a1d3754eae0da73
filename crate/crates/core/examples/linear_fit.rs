//! Fit a rotation-plus-offset system from noisy data and compare LINOCS with
//! one-step least squares on operator error, eigenvalues and how long the
//! fitted model tracks a long noiseless continuation.
//!
//! ```text
//! cargo run --release --example linear_fit
//! ```

use linocs::benchmarks::LinearBenchmarkSpec;
use linocs::metrics::{eigen_match, horizon_until_error};
use linocs::solvers::{fit_linocs_linear, fit_one_step_ls, LinearFitConfig};
use linocs::synth::NoiseSpec;

fn main() -> linocs::Result<()> {
    let seed = 4;
    let bench = LinearBenchmarkSpec::planar().build(seed, &NoiseSpec::gaussian(0.3, seed))?;

    let one = fit_one_step_ls(&bench.observed, true)?;
    let lin = fit_linocs_linear(&bench.observed, &LinearFitConfig::with_order(80))?;
    println!("LINOCS: {} iterations, converged {}", lin.iterations, lin.converged);

    for (name, model) in [("one-step", &one.model), ("linocs", &lin.model)] {
        let err = (&model.a - &bench.truth.a).norm();
        let eig = eigen_match(&model.a, &bench.truth.a)?.iter().cloned().fold(0.0, f64::max);
        let horizon = horizon_until_error(model, &bench.extension, 1.0)?;
        println!("{name:>9}: |A - A_true|_F = {err:.2e}, largest eigenvalue gap {eig:.1e}, tracks truth for {horizon} steps");
    }
    Ok(())
}
