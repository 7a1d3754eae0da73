//! Learn a basis of three operators and time-varying coefficients on
//! the pseudo-switching benchmark, for two lookahead depths.
//!
//! Slow in debug builds:
//!
//! ```text
//! cargo run --release --example decomposed
//! ```

use linocs::benchmarks::DecomposedBenchmarkSpec;
use linocs::metrics::{operator_path_errors, pearson_series};
use linocs::predict::predict_full_lookahead;
use linocs::solvers::{fit_linocs_dlds, DldsFitConfig};
use linocs::synth::NoiseSpec;

fn main() -> linocs::Result<()> {
    let bench = DecomposedBenchmarkSpec::pseudo_switching().build(&NoiseSpec::gaussian(0.0, 0))?;
    let steps = bench.observed.horizon();

    for k_train in [1, 20] {
        let cfg = DldsFitConfig { max_order: k_train - 1, max_iters: 150, restarts: 2, ..DldsFitConfig::default() };
        let fit = fit_linocs_dlds(&bench.observed, &cfg)?;
        let errs = operator_path_errors(&fit.model, &bench.truth, steps)?;
        let roll = predict_full_lookahead(&fit.model, &bench.observed.column(0), steps)?;
        println!(
            "K_train {k_train:>2}: operator MSE {:.2e}, full-lookahead Pearson {:.4}",
            errs.iter().sum::<f64>() / steps as f64,
            pearson_series(&roll.series, &bench.clean)?
        );
    }
    Ok(())
}
