//! Raster file formats.
//!
//! * `FR32`: the native float format. Bytes `"FR32"`, then width and height as
//!   little-endian `u32`, then `width * height` little-endian `f32` samples in
//!   row-major order. Used for every pipeline intermediate.
//! * `P5`: binary 8-bit PGM, for interchange. Export maps `[0, peak]` linearly
//!   onto `[0, 255]`, rounding half up; import rescales `maxval` to 255.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::{Raster, RasterKind};

pub const FR32_MAGIC: &[u8; 4] = b"FR32";
pub const FR32_HEADER_LEN: usize = 12;

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        offset: offset as u64,
        message: message.into(),
    }
}

/// Serializes a raster as FR32.
pub fn encode_fr32(img: &Raster) -> Vec<u8> {
    let mut out = Vec::with_capacity(FR32_HEADER_LEN + 4 * img.data().len());
    out.extend_from_slice(FR32_MAGIC);
    out.extend_from_slice(&(img.width() as u32).to_le_bytes());
    out.extend_from_slice(&(img.height() as u32).to_le_bytes());
    for &v in img.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

/// Parses FR32 bytes. Negative samples yield a [`RasterKind::Transformed`] raster.
pub fn decode_fr32(bytes: &[u8]) -> Result<Raster> {
    if bytes.len() < 4 || &bytes[..4] != FR32_MAGIC {
        return Err(format_err(0, "bad magic, expected \"FR32\""));
    }
    if bytes.len() < FR32_HEADER_LEN {
        return Err(format_err(bytes.len(), "truncated FR32 header"));
    }
    let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if width == 0 || height == 0 {
        return Err(format_err(4, format!("invalid dimensions {width}x{height}")));
    }
    let expected = FR32_HEADER_LEN + 4 * width * height;
    if bytes.len() < expected {
        return Err(format_err(
            bytes.len(),
            format!("truncated FR32 payload, expected {expected} bytes"),
        ));
    }
    if bytes.len() > expected {
        return Err(format_err(expected, "trailing bytes after FR32 payload"));
    }
    let data: Vec<f64> = bytes[FR32_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    if let Some(i) = data.iter().position(|v| v.is_nan()) {
        return Err(format_err(FR32_HEADER_LEN + 4 * i, "NaN sample"));
    }
    let kind = if data.iter().all(|v| *v >= 0.0) {
        RasterKind::Intensity
    } else {
        RasterKind::Transformed
    };
    Raster::new(width, height, data, kind)
}

/// Serializes an intensity raster as 8-bit P5 PGM with `[0, peak] -> [0, 255]`.
pub fn encode_pgm(img: &Raster, peak: f64) -> Result<Vec<u8>> {
    if !(peak > 0.0) {
        return Err(Error::Parameter(format!("peak must be positive, got {peak}")));
    }
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(
        img.data()
            .iter()
            .map(|v| (v / peak * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8),
    );
    Ok(out)
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(format_err(start, format!("expected PGM {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| format_err(start, format!("PGM {what} out of range")))
    }
}

/// Parses binary 8-bit PGM.
pub fn decode_pgm(bytes: &[u8]) -> Result<Raster> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(format_err(0, "bad magic, expected \"P5\""));
    }
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(format_err(
            maxval_at,
            format!("unsupported maxval {maxval}, expected 1..=255"),
        ));
    }
    if width == 0 || height == 0 {
        return Err(format_err(2, format!("invalid dimensions {width}x{height}")));
    }
    if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
        return Err(format_err(cur.pos, "expected whitespace before PGM raster"));
    }
    let start = cur.pos + 1;
    let expected = start + width * height;
    if bytes.len() < expected {
        return Err(format_err(
            bytes.len(),
            format!("truncated PGM raster, expected {expected} bytes"),
        ));
    }
    let scale = 255.0 / maxval as f64;
    let data = bytes[start..expected].iter().map(|&b| b as f64 * scale).collect();
    Raster::intensity(width, height, data)
}

/// Reads a raster, choosing the format from the file's magic bytes.
pub fn read_raster(path: &Path) -> Result<Raster> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(b"P5") {
        decode_pgm(&bytes)
    } else {
        decode_fr32(&bytes)
    }
}

/// Writes PGM for `.pgm` paths and FR32 otherwise.
pub fn write_raster(path: &Path, img: &Raster, peak: f64) -> Result<()> {
    let is_pgm = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    let bytes = if is_pgm {
        encode_pgm(img, peak)?
    } else {
        encode_fr32(img)
    };
    fs::write(path, bytes)?;
    Ok(())
}
