//! Grayscale raster, binary PGM ingestion and pixel bit-depth truncation.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major 8-bit grayscale image. Immutable once built.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "pixel buffer has {} entries, expected {}x{}={}",
                data.len(),
                width,
                height,
                width * height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    /// Pixel read with coordinates clamped into the image (replicated border).
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> u8 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.data[cy * self.width + cx]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.height, self.width, |x, y| self.get(y, x))
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|&p| p as f64).sum::<f64>() / self.data.len() as f64
    }

    /// Binary PGM (P5) encoding.
    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_pgm_bytes())?;
        Ok(())
    }
}

/// Number of most significant bits kept per pixel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QuantSpec {
    pixel_bits: u8,
}

impl QuantSpec {
    pub fn new(pixel_bits: u8) -> Result<Self> {
        if !(1..=8).contains(&pixel_bits) {
            return Err(Error::InvalidArgument(format!(
                "pixel_bits must be in [1, 8], got {pixel_bits}"
            )));
        }
        Ok(Self { pixel_bits })
    }

    pub fn pixel_bits(self) -> u8 {
        self.pixel_bits
    }

    /// Mask keeping the top `pixel_bits` bits.
    #[inline]
    pub fn mask(self) -> u8 {
        0xFFu8 << (8 - self.pixel_bits)
    }

    #[inline]
    pub fn apply(self, pixel: u8) -> u8 {
        pixel & self.mask()
    }
}

impl Default for QuantSpec {
    fn default() -> Self {
        Self { pixel_bits: 8 }
    }
}

/// Clears the low `8 - pixel_bits` bits of every pixel; values stay on the 8-bit scale.
pub fn quantize_pixels(img: &GrayImage, spec: QuantSpec) -> GrayImage {
    let mask = spec.mask();
    GrayImage {
        width: img.width,
        height: img.height,
        data: img.data.iter().map(|&p| p & mask).collect(),
    }
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let bytes = fs::read(path)?;
    parse_pgm(&bytes)
}

/// Parses a binary P5 PGM with maxval <= 255. Pixel bytes are copied verbatim.
pub fn parse_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut cursor = HeaderCursor { bytes, pos: 0 };
    let magic = cursor
        .token()
        .ok_or_else(|| Error::MalformedHeader("missing magic number".into()))?;
    if magic != b"P5" {
        return Err(Error::MalformedHeader(format!(
            "expected magic P5, found {:?}",
            String::from_utf8_lossy(magic)
        )));
    }
    let width = cursor.number("width")?;
    let height = cursor.number("height")?;
    let maxval = cursor.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader(format!(
            "zero dimension {width}x{height}"
        )));
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::UnsupportedMaxval(maxval));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(cursor.pos) {
        Some(b) if b.is_ascii_whitespace() => cursor.pos += 1,
        _ => {
            return Err(Error::MalformedHeader(
                "missing whitespace after maxval".into(),
            ))
        }
    }
    let (w, h) = (width as usize, height as usize);
    let expected = w * h;
    let payload = &bytes[cursor.pos..];
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    GrayImage::new(w, h, payload[..expected].to_vec())
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
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

    fn token(&mut self) -> Option<&'a [u8]> {
        self.skip_space_and_comments();
        let start = self.pos;
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() || b == b'#' {
                break;
            }
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.bytes[start..self.pos])
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        let tok = self
            .token()
            .ok_or_else(|| Error::MalformedHeader(format!("missing {what}")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse::<u32>().ok())
            .ok_or_else(|| {
                Error::MalformedHeader(format!(
                    "invalid {what} {:?}",
                    String::from_utf8_lossy(tok)
                ))
            })
    }
}
