//! Bring your own data: read a series from CSV, fit it, write predictions.
//!
//! The format is a header `t,x0,x1,...` followed by one row per time point.
//!
//! ```text
//! cargo run --example csv_ingestion
//! ```

use linocs::predict::predict_full_lookahead;
use linocs::solvers::{fit_linocs_linear, LinearFitConfig};
use linocs::TimeSeries;

fn main() -> linocs::Result<()> {
    // A damped oscillation standing in for a recorded signal.
    let mut text = String::from("t,x0,x1\n");
    for t in 0..200 {
        let s = t as f64 * 0.2;
        let noise = 0.02 * ((t * 7919 % 101) as f64 / 50.0 - 1.0);
        text += &format!("{t},{},{}\n", (-0.01 * s).exp() * s.cos() + noise, (-0.01 * s).exp() * s.sin() - noise);
    }
    let obs = TimeSeries::read_csv(text.as_bytes())?;
    println!("read {} points in {} dimensions", obs.len(), obs.dim());

    let fit = fit_linocs_linear(&obs, &LinearFitConfig { with_offset: false, ..LinearFitConfig::with_order(30) })?;
    println!("fitted operator:{}", fit.model.a);

    let roll = predict_full_lookahead(&fit.model, &obs.column(0), obs.horizon())?;
    let mut out = Vec::new();
    roll.series.write_csv(&mut out)?;
    println!("first predicted rows:\n{}", String::from_utf8_lossy(&out).lines().take(4).collect::<Vec<_>>().join("\n"));

    // Malformed input is rejected with the row number.
    let bad = "t,x0,x1\n0,1.0,2.0\n1,oops,2.0\n";
    if let Err(e) = TimeSeries::read_csv(bad.as_bytes()) {
        println!("bad file: {e}");
    }
    Ok(())
}
