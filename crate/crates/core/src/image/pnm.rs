use super::{ImageBuffer, ImageError, Result};

/// Binary netpbm flavours: P5 (grayscale) and P6 (RGB).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PnmFormat {
    Pgm,
    Ppm,
}

impl PnmFormat {
    fn magic(self) -> &'static str {
        match self {
            PnmFormat::Pgm => "P5",
            PnmFormat::Ppm => "P6",
        }
    }

    fn channels(self) -> usize {
        match self {
            PnmFormat::Pgm => 1,
            PnmFormat::Ppm => 3,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            PnmFormat::Pgm => "pgm",
            PnmFormat::Ppm => "ppm",
        }
    }
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderReader<'a> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<&'a str> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self
            .bytes
            .get(self.pos)
            .is_some_and(|b| !b.is_ascii_whitespace() && *b != b'#')
        {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(ImageError::MalformedHeader("unexpected end of header".into()));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| ImageError::MalformedHeader("non-ascii header token".into()))
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        let tok = self.token()?;
        tok.parse()
            .map_err(|_| ImageError::MalformedHeader(format!("bad {what}: {tok:?}")))
    }
}

/// Parses a binary P5/P6 file with maxval 255.
pub fn load_image(bytes: &[u8], format: PnmFormat) -> Result<ImageBuffer> {
    let mut reader = HeaderReader { bytes, pos: 0 };
    let magic = reader.token()?;
    if magic != "P5" && magic != "P6" {
        return Err(ImageError::MalformedHeader(format!("bad magic {magic:?}")));
    }
    if magic != format.magic() {
        return Err(ImageError::FormatMismatch {
            expected: format,
            found: magic.to_string(),
        });
    }
    let width = reader.number("width")?;
    let height = reader.number("height")?;
    let maxval = reader.number("maxval")?;
    if maxval != 255 {
        return Err(ImageError::UnsupportedMaxval(maxval as u32));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(reader.pos) {
        Some(b) if b.is_ascii_whitespace() => reader.pos += 1,
        _ => {
            return Err(ImageError::MalformedHeader(
                "missing whitespace after maxval".into(),
            ))
        }
    }
    let channels = format.channels();
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| ImageError::MalformedHeader("dimensions overflow".into()))?;
    let raster = &bytes[reader.pos..];
    if raster.len() < expected {
        return Err(ImageError::TruncatedPayload {
            expected,
            actual: raster.len(),
        });
    }
    ImageBuffer::new(width, height, channels, raster[..expected].to_vec())
}

/// Serializes an image as binary P5 or P6 depending on its channel count.
pub fn encode_pnm(image: &ImageBuffer) -> Vec<u8> {
    let header = format!(
        "{}\n{} {}\n255\n",
        image.format().magic(),
        image.width(),
        image.height()
    );
    let mut out = Vec::with_capacity(header.len() + image.byte_len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(image.pixels());
    out
}
