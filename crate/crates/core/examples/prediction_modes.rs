//! One-step, IMS and full-lookahead prediction from the same model, and the
//! IMS error as the order grows.
//!
//! ```text
//! cargo run --example prediction_modes
//! ```

use linocs::benchmarks::LinearBenchmarkSpec;
use linocs::metrics::mse;
use linocs::predict::{predict, predict_ims_series, HistoryClamp, PredictionMode, PredictionRequest};
use linocs::synth::NoiseSpec;

fn main() -> linocs::Result<()> {
    let spec = LinearBenchmarkSpec { extension: 0, ..LinearBenchmarkSpec::planar() };
    let bench = spec.build(1, &NoiseSpec::gaussian(0.3, 1))?;
    let (truth, obs) = (&bench.truth, &bench.observed);

    for mode in [PredictionMode::OneStep, PredictionMode::Ims(20), PredictionMode::FullLookahead] {
        let roll = predict(truth, obs, PredictionRequest { mode, start_index: 0 })?;
        println!("{mode:?}: MSE against the clean series {:.4}", mse(&roll.series, &bench.clean)?);
    }

    // The true operator here is a pure rotation, so the anchor's noise is
    // carried along without growing or shrinking: every order scores about
    // twice the noise variance against the observations.
    for k in [1, 2, 5, 10, 20, 50] {
        let roll = predict_ims_series(truth, obs, k, HistoryClamp::ClampToStart)?;
        println!("order {k:>2}: MSE against the observations {:.4}", mse(&roll.series, obs)?);
    }
    Ok(())
}
