//! Parallel Monte Carlo sweep with CSV output in a temporary directory.

use stocoap::experiments::{cmd_simulate, ExperimentSpec, ValueSource};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::temp_dir().join("stocoap-simulate-example");
    let spec = ExperimentSpec {
        values: ValueSource::Gaussian,
        losses: vec![0.0, 0.25, 0.5],
        ratios: vec![0.5, 1.0, 2.0],
        trials: 200,
        seed: 1,
        out_dir: out.clone(),
        ..ExperimentSpec::default()
    };
    let report = cmd_simulate(&spec)?;
    println!("loss  ratio  fill (expected)   top-decile full (predicted)");
    for c in &report.cells {
        println!(
            "{:<5} {:<6} {:.3} ({:.3})     {:.3} ({:.3})",
            c.loss,
            c.ratio,
            c.mean_filling_rate,
            c.expected_filling_rate,
            c.full_region_rate,
            c.predicted_full_region
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}
