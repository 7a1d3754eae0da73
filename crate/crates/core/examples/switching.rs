//! Recover three switching rotations and their switch points, with and
//! without lookahead in the per-state fits.
//!
//! ```text
//! cargo run --release --example switching
//! ```

use linocs::benchmarks::SwitchingBenchmarkSpec;
use linocs::metrics::matrix_correlation;
use linocs::model::switch_indices;
use linocs::solvers::{fit_linocs_slds, match_models, SldsFitConfig};
use linocs::synth::NoiseSpec;

fn main() -> linocs::Result<()> {
    let seed = 2;
    let bench = SwitchingBenchmarkSpec::default().build(seed, &NoiseSpec::gaussian(0.1, seed))?;
    println!("true switches at {:?}", switch_indices(&bench.truth.state_path));

    let cfg = SldsFitConfig { seed, ..SldsFitConfig::default() };
    for (name, cfg) in [("linocs", cfg.clone()), ("one-step", cfg.one_step())] {
        let fit = fit_linocs_slds(&bench.observed, &cfg)?;
        // Estimated states come back in arbitrary order.
        let pairing = match_models(&fit.model.operators, &bench.truth.operators)?;
        let corr: Vec<f64> = pairing
            .iter()
            .enumerate()
            .map(|(i, &j)| matrix_correlation(&fit.model.operators[j], &bench.truth.operators[i]))
            .collect::<linocs::Result<_>>()?;
        println!(
            "{name:>9}: switches {:?}, operator correlations {corr:.5?}, {} outer iterations",
            switch_indices(&fit.model.state_path),
            fit.outer_iterations
        );
    }
    Ok(())
}
