//! Two-dimensional real-valued images.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What the pixel values of a [`Raster`] represent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RasterKind {
    /// Non-negative intensities (clean or speckled).
    Intensity,
    /// Values after the log / power transform; may be negative.
    Transformed,
}

/// A row-major image of `f64` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    data: Vec<f64>,
    kind: RasterKind,
}

impl Raster {
    /// Builds a raster, checking the length and the non-negativity of intensity data.
    pub fn new(width: usize, height: usize, data: Vec<f64>, kind: RasterKind) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Size(format!("raster must be non-empty, got {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::Size(format!(
                "data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        if kind == RasterKind::Intensity {
            if let Some((idx, v)) = data.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
                return Err(Error::Domain(format!(
                    "intensity raster has invalid value {v} at index {idx}"
                )));
            }
        }
        Ok(Self {
            width,
            height,
            data,
            kind,
        })
    }

    pub fn intensity(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(width, height, data, RasterKind::Intensity)
    }

    pub fn transformed(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(width, height, data, RasterKind::Transformed)
    }

    /// A raster filled with a single value.
    pub fn filled(width: usize, height: usize, value: f64, kind: RasterKind) -> Result<Self> {
        Self::new(width, height, vec![value; width * height], kind)
    }

    /// Builds a raster from a function of `(row, col)`.
    pub fn from_fn(
        width: usize,
        height: usize,
        kind: RasterKind,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self::new(width, height, data, kind)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// `(width, height)`.
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn kind(&self) -> RasterKind {
        self.kind
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.width..(row + 1) * self.width]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Applies `f` to every pixel, producing a raster of the given kind.
    pub fn map(&self, kind: RasterKind, mut f: impl FnMut(f64) -> f64) -> Result<Self> {
        Self::new(self.width, self.height, self.data.iter().map(|&v| f(v)).collect(), kind)
    }

    pub(crate) fn ensure_same_dims(&self, other: &Raster) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                left: self.dims(),
                right: other.dims(),
            });
        }
        Ok(())
    }
}
