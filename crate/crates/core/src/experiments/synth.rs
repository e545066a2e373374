use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::{ImageBuffer, Result};

/// Appearance counts from a discrete 2-D Gaussian centred on a `cols x rows`
/// grid. `sigma` is a fraction of the grid's width and height; the peak count
/// is `peak`.
pub fn gaussian_heatmap(cols: usize, rows: usize, sigma: f64, peak: u64) -> Vec<u64> {
    let (cx, cy) = ((cols as f64 - 1.0) / 2.0, (rows as f64 - 1.0) / 2.0);
    let (sx, sy) = (sigma * cols as f64, sigma * rows as f64);
    (0..rows)
        .flat_map(|y| (0..cols).map(move |x| (x, y)))
        .map(|(x, y)| {
            let dx = (x as f64 - cx) / sx;
            let dy = (y as f64 - cy) / sy;
            (peak as f64 * (-0.5 * (dx * dx + dy * dy)).exp()).round() as u64
        })
        .collect()
}

/// Seeded noise image. Pixels are uniform bytes, so no block of useful size
/// is constant.
pub fn synthetic_image(width: usize, height: usize, channels: usize, seed: u64) -> Result<ImageBuffer> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pixels = vec![0; width * height * channels];
    rng.fill_bytes(&mut pixels);
    ImageBuffer::new(width, height, channels, pixels)
}
