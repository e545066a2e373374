//! Auditing saved reconstructions against the original image.

use stocoap::experiments::{cmd_metrics, cmd_simulate, ExperimentSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::temp_dir().join("stocoap-metrics-example");
    let spec = ExperimentSpec {
        width: 64,
        height: 64,
        losses: vec![0.4],
        trials: 5,
        save_images: true,
        out_dir: out.clone(),
        ..ExperimentSpec::default()
    };
    let sim = cmd_simulate(&spec)?;
    let audit = ExperimentSpec {
        image: Some(out.join("original.pgm")),
        region: Some(out.join("region.csv")),
        out_dir: out.join("audit"),
        ..spec
    };
    let rows = cmd_metrics(&audit, &out.join("images"))?;
    for (row, run) in rows.iter().zip(&sim.rows) {
        println!(
            "{}: {} blocks, filling rate {:.3}, in-run {:.3}",
            row.file, row.unique_blocks, row.pixel_filling_rate, run.pixel_filling_rate
        );
    }
    Ok(())
}
