//! Tiling a PPM image and rebuilding it from a subset of blocks.

use std::collections::BTreeSet;

use stocoap::experiments::synthetic_image;
use stocoap::image::{
    encode_pnm, load_image, pixel_filling_rate, reassemble, region_coverage, tile, untile,
    PnmFormat,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let image = synthetic_image(64, 32, 3, 1)?;
    let bytes = encode_pnm(&image);
    let loaded = load_image(&bytes, PnmFormat::Ppm)?;
    let (grid, blocks) = tile(&loaded, 16, 16)?;
    println!("{} blocks of {} bytes", grid.block_count(), grid.block_bytes());
    assert_eq!(untile(&grid, &blocks)?, image);

    let partial = reassemble(&grid, blocks.iter().step_by(3), 0)?;
    let region: BTreeSet<usize> = [0, 3, 6].into();
    let coverage = region_coverage(&partial, &region)?;
    println!(
        "received {} blocks, filling rate {:.3}, region {:?}",
        partial.unique_blocks(),
        pixel_filling_rate(&partial),
        coverage
    );
    Ok(())
}
