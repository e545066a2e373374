use std::collections::BTreeSet;

use super::{ImageBuffer, ImageError, Result};

/// Geometry of an image split into equal blocks, numbered row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockGrid {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub block_width: usize,
    pub block_height: usize,
    pub cols: usize,
    pub rows: usize,
}

impl BlockGrid {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        block_width: usize,
        block_height: usize,
    ) -> Result<Self> {
        if width == 0 || height == 0 || !(channels == 1 || channels == 3) {
            return Err(ImageError::InvalidDimensions {
                width,
                height,
                channels,
            });
        }
        if block_width == 0
            || block_height == 0
            || !width.is_multiple_of(block_width)
            || !height.is_multiple_of(block_height)
        {
            return Err(ImageError::NonDivisible {
                width,
                height,
                block_width,
                block_height,
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            block_width,
            block_height,
            cols: width / block_width,
            rows: height / block_height,
        })
    }

    pub fn for_image(image: &ImageBuffer, block_width: usize, block_height: usize) -> Result<Self> {
        Self::new(
            image.width(),
            image.height(),
            image.channels(),
            block_width,
            block_height,
        )
    }

    pub fn block_count(&self) -> usize {
        self.cols * self.rows
    }

    /// `s_blk` in bytes.
    pub fn block_bytes(&self) -> usize {
        self.block_width * self.block_height * self.channels
    }

    pub fn block_pixels(&self) -> usize {
        self.block_width * self.block_height
    }

    pub fn image_bytes(&self) -> usize {
        self.width * self.height * self.channels
    }

    /// Grid cell `(col, row)` of a block id.
    pub fn cell(&self, id: usize) -> (usize, usize) {
        (id % self.cols, id / self.cols)
    }

    fn check_id(&self, id: usize) -> Result<()> {
        if id < self.block_count() {
            Ok(())
        } else {
            Err(ImageError::BlockIdOutOfRange {
                id,
                count: self.block_count(),
            })
        }
    }

    /// Byte ranges of each row segment of a block within the image buffer.
    fn row_spans(&self, id: usize) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        let (col, row) = self.cell(id);
        let stride = self.width * self.channels;
        let seg = self.block_width * self.channels;
        let x0 = col * seg;
        let y0 = row * self.block_height;
        (0..self.block_height).map(move |dy| {
            let start = (y0 + dy) * stride + x0;
            start..start + seg
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPayload {
    pub block_id: usize,
    pub bytes: Vec<u8>,
}

/// Cuts an image into row-major blocks. Each payload holds the block's rows
/// top to bottom, interleaved channels.
pub fn tile(
    image: &ImageBuffer,
    block_width: usize,
    block_height: usize,
) -> Result<(BlockGrid, Vec<BlockPayload>)> {
    let grid = BlockGrid::for_image(image, block_width, block_height)?;
    let pixels = image.pixels();
    let blocks = (0..grid.block_count())
        .map(|id| {
            let mut bytes = Vec::with_capacity(grid.block_bytes());
            for span in grid.row_spans(id) {
                bytes.extend_from_slice(&pixels[span]);
            }
            BlockPayload { block_id: id, bytes }
        })
        .collect();
    Ok((grid, blocks))
}

fn write_block(grid: &BlockGrid, pixels: &mut [u8], block: &BlockPayload) -> Result<()> {
    grid.check_id(block.block_id)?;
    if block.bytes.len() != grid.block_bytes() {
        return Err(ImageError::PayloadLength {
            id: block.block_id,
            expected: grid.block_bytes(),
            actual: block.bytes.len(),
        });
    }
    let seg = grid.block_width * grid.channels;
    for (span, chunk) in grid.row_spans(block.block_id).zip(block.bytes.chunks_exact(seg)) {
        pixels[span].copy_from_slice(chunk);
    }
    Ok(())
}

/// Inverse of [`tile`] given the full set of blocks in id order.
pub fn untile(grid: &BlockGrid, blocks: &[BlockPayload]) -> Result<ImageBuffer> {
    if blocks.len() != grid.block_count() {
        return Err(ImageError::BlockCount {
            expected: grid.block_count(),
            actual: blocks.len(),
        });
    }
    let mut pixels = vec![0u8; grid.image_bytes()];
    for block in blocks {
        write_block(grid, &mut pixels, block)?;
    }
    ImageBuffer::new(grid.width, grid.height, grid.channels, pixels)
}

/// An image assembled from whichever blocks arrived; the rest is `fill`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialImage {
    pub grid: BlockGrid,
    pub received: BTreeSet<usize>,
    pub fill: u8,
    image: ImageBuffer,
}

impl PartialImage {
    pub fn image(&self) -> &ImageBuffer {
        &self.image
    }

    pub fn pixels(&self) -> &[u8] {
        self.image.pixels()
    }

    pub fn is_received(&self, id: usize) -> bool {
        self.received.contains(&id)
    }

    pub fn unique_blocks(&self) -> usize {
        self.received.len()
    }
}

/// Paints received blocks over a fill-valued canvas. Repeated ids are
/// accepted; the last copy wins.
pub fn reassemble<'a, I>(grid: &BlockGrid, received: I, fill: u8) -> Result<PartialImage>
where
    I: IntoIterator<Item = &'a BlockPayload>,
{
    let mut pixels = vec![fill; grid.image_bytes()];
    let mut ids = BTreeSet::new();
    for block in received {
        write_block(grid, &mut pixels, block)?;
        ids.insert(block.block_id);
    }
    Ok(PartialImage {
        grid: *grid,
        received: ids,
        fill,
        image: ImageBuffer::new(grid.width, grid.height, grid.channels, pixels)?,
    })
}

/// Fraction of original pixels covered by uniquely received blocks.
pub fn pixel_filling_rate(partial: &PartialImage) -> f64 {
    let grid = &partial.grid;
    (partial.received.len() * grid.block_pixels()) as f64 / (grid.width * grid.height) as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionCoverage {
    pub fraction: f64,
    pub full: bool,
}

pub fn region_coverage(partial: &PartialImage, region: &BTreeSet<usize>) -> Result<RegionCoverage> {
    if region.is_empty() {
        return Err(ImageError::EmptyRegion);
    }
    for &id in region {
        partial.grid.check_id(id)?;
    }
    let hit = region.iter().filter(|id| partial.received.contains(id)).count();
    Ok(RegionCoverage {
        fraction: hit as f64 / region.len() as f64,
        full: hit == region.len(),
    })
}
