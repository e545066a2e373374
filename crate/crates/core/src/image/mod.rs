//! Raw image buffers, binary PGM/PPM I/O, block tiling and reassembly.

mod grid;
mod pnm;

pub use grid::{
    pixel_filling_rate, reassemble, region_coverage, tile, untile, BlockGrid, BlockPayload,
    PartialImage, RegionCoverage,
};
pub use pnm::{encode_pnm, load_image, PnmFormat};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ImageError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unsupported maxval {0} (only 255)")]
    UnsupportedMaxval(u32),
    #[error("truncated payload: expected {expected} bytes, got {actual}")]
    TruncatedPayload { expected: usize, actual: usize },
    #[error("format {found} does not match requested {expected:?}")]
    FormatMismatch { expected: PnmFormat, found: String },
    #[error("invalid dimensions {width}x{height}x{channels}")]
    InvalidDimensions {
        width: usize,
        height: usize,
        channels: usize,
    },
    #[error("pixel buffer holds {actual} bytes, expected {expected}")]
    BufferLength { expected: usize, actual: usize },
    #[error("block {block_width}x{block_height} does not tile {width}x{height}")]
    NonDivisible {
        width: usize,
        height: usize,
        block_width: usize,
        block_height: usize,
    },
    #[error("block id {id} out of range for {count} blocks")]
    BlockIdOutOfRange { id: usize, count: usize },
    #[error("block {id} payload is {actual} bytes, expected {expected}")]
    PayloadLength {
        id: usize,
        expected: usize,
        actual: usize,
    },
    #[error("region is empty")]
    EmptyRegion,
    #[error("expected {expected} blocks, got {actual}")]
    BlockCount { expected: usize, actual: usize },
}

pub type Result<T> = std::result::Result<T, ImageError>;

/// Row-major interleaved pixels, one byte per channel sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || !(channels == 1 || channels == 3) {
            return Err(ImageError::InvalidDimensions {
                width,
                height,
                channels,
            });
        }
        let expected = width * height * channels;
        if pixels.len() != expected {
            return Err(ImageError::BufferLength {
                expected,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn byte_len(&self) -> usize {
        self.pixels.len()
    }

    pub fn format(&self) -> PnmFormat {
        if self.channels == 1 {
            PnmFormat::Pgm
        } else {
            PnmFormat::Ppm
        }
    }
}
