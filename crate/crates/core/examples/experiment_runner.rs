//! Run a small sweep from a TOML config and list what it wrote.
//!
//! ```text
//! cargo run --release --example experiment_runner
//! ```

use linocs::experiment::{run_experiment, ExperimentConfig};

const CONFIG: &str = r#"
experiment = "linear2d"
seed = 11

[solver.linear]
max_order = 40

[sweep]
sigma = [0.1, 0.3]
k_pred = [10]
"#;

fn main() -> linocs::Result<()> {
    let mut cfg = ExperimentConfig::from_toml(CONFIG)?;
    cfg.output_dir = std::env::temp_dir().join("linocs-experiment-runner");
    let summary = run_experiment(&cfg, Some(2))?;
    println!("{} cells, {} failed, exit code {}", summary.cells, summary.failures.len(), summary.exit_code());

    let sweep = std::fs::read_to_string(summary.output_dir.join("sweep.csv"))?;
    for line in sweep.lines().filter(|l| l.starts_with("experiment") || l.contains("mse_full_lookahead")) {
        println!("{line}");
    }
    println!("per-cell reports under {}", summary.output_dir.display());
    Ok(())
}
