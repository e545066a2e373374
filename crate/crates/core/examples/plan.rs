//! Value-weighted plan for a 256x144 image with a centred Gaussian heatmap.

use stocoap::experiments::gaussian_heatmap;
use stocoap::model::{
    plan_transmission, values_from_heatmap, BlockIndexSet, ChannelParams, SizingParams,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (cols, rows) = (32, 18);
    let counts = gaussian_heatmap(cols, rows, 0.12, 1000);
    let values = values_from_heatmap(&counts, 0.01)?;
    let plan = plan_transmission(
        ChannelParams::new(0.25, 64)?,
        SizingParams::from_ratio(64, cols * rows, 1.0),
        values,
        BlockIndexSet::new(cols * rows)?,
    )?;
    println!(
        "N = {}, K = {}, block success = {:.4}, expected filling rate = {:.4}",
        plan.total_transmissions,
        plan.fragments_per_block,
        plan.block_success(),
        plan.expected_filling_rate()
    );
    for id in plan.value_map.top_fraction(0.01) {
        println!(
            "block {id:3}: p = {:.5}, expected sends = {:.2}, arrival = {:.4}",
            plan.probabilities()[id],
            plan.expected_counts[id],
            plan.arrival_probs[id]
        );
    }
    Ok(())
}
