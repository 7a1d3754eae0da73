//! The three rollout-refit (DAD) variants next to LINOCS and one-step least
//! squares, on the structured sinusoidal-noise benchmark.
//!
//! ```text
//! cargo run --release --example dad_baselines
//! ```

use linocs::benchmarks::LinearBenchmarkSpec;
use linocs::metrics::evaluate_predictions;
use linocs::solvers::{fit_dad, fit_linocs_linear, fit_one_step_ls, DadConfig, DadVariant, LinearFitConfig};
use linocs::synth::NoiseSpec;
use linocs::LinearModel;

fn main() -> linocs::Result<()> {
    let bench = LinearBenchmarkSpec::structured_noise().build(0, &NoiseSpec::sine(0.5, 3.0))?;
    let obs = &bench.observed;

    let mut fits: Vec<(&str, LinearModel)> = vec![
        ("one-step", fit_one_step_ls(obs, true)?.model),
        ("linocs", fit_linocs_linear(obs, &LinearFitConfig::default())?.model),
    ];
    for (name, variant) in [
        ("dad-full", DadVariant::FullUpdate),
        ("dad-reweigh", DadVariant::Reweighted),
        ("dad-reweigh-l2", DadVariant::ReweightedL2),
    ] {
        fits.push((name, fit_dad(obs, &DadConfig::variant(variant))?.model));
    }

    println!("{:>15} {:>10} {:>12} {:>12}", "method", "|dA|_F", "1-step MSE", "full MSE");
    for (name, model) in &fits {
        let r = evaluate_predictions(model, obs, &bench.clean, &[])?;
        let full = match r.full_lookahead_diverged_at {
            Some(t) => format!("diverged@{t}"),
            None => format!("{:.3e}", r.mse_full_lookahead.unwrap_or(f64::NAN)),
        };
        println!(
            "{name:>15} {:>10.2e} {:>12.3e} {full:>12}",
            (&model.a - &bench.truth.a).norm(),
            r.mse_one_step.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
