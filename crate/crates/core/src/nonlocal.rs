//! Non-local patch grouping and aggregation.
//!
//! Patches are `p x p` windows stored as row-major column vectors of length `p^2`.
//! A group stacks the `k` patches closest to a reference patch (squared Euclidean
//! distance) found inside a search window, reference first.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Raster, RasterKind};

/// Top-left `(row, col)` of a patch.
pub type Coord = (usize, usize);

/// A stack of similar patches, one per column.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGroup {
    patch_size: usize,
    patches: DMatrix<f64>,
    coords: Vec<Coord>,
    distances: Vec<f64>,
    sigmas: Vec<f64>,
    padded: usize,
}

impl PatchGroup {
    /// Assembles a group; `padded` counts trailing columns that repeat the reference.
    pub fn from_parts(
        patch_size: usize,
        patches: DMatrix<f64>,
        coords: Vec<Coord>,
        distances: Vec<f64>,
        padded: usize,
    ) -> Result<Self> {
        let k = patches.ncols();
        if k == 0 {
            return Err(Error::Size("patch group must hold at least one patch".into()));
        }
        if patches.nrows() != patch_size * patch_size {
            return Err(Error::Size(format!(
                "patch vectors have length {}, expected {}",
                patches.nrows(),
                patch_size * patch_size
            )));
        }
        if coords.len() != k || distances.len() != k || padded >= k {
            return Err(Error::Size("group metadata does not match patch count".into()));
        }
        Ok(Self {
            patch_size,
            patches,
            coords,
            distances,
            sigmas: Vec::new(),
            padded,
        })
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    /// Number of stacked patches `k`.
    pub fn len(&self) -> usize {
        self.patches.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `p^2 x k` matrix of patch vectors.
    pub fn patches(&self) -> &DMatrix<f64> {
        &self.patches
    }

    pub fn coords(&self) -> &[Coord] {
        &self.coords
    }

    pub fn reference(&self) -> Coord {
        self.coords[0]
    }

    /// Squared distances to the reference, non-decreasing.
    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    /// Per-patch noise scales; empty until [`PatchGroup::set_sigmas`] is called.
    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn set_sigmas(&mut self, sigmas: Vec<f64>) -> Result<()> {
        if sigmas.len() != self.len() {
            return Err(Error::Size(format!(
                "{} sigmas for a group of {}",
                sigmas.len(),
                self.len()
            )));
        }
        self.sigmas = sigmas;
        Ok(())
    }

    /// How many trailing columns are copies of the reference added to reach `k`.
    pub fn padded(&self) -> usize {
        self.padded
    }
}

/// Copies the `p x p` patch at `(row, col)` into `out` (row-major).
fn read_patch(img: &Raster, (row, col): Coord, p: usize, out: &mut [f64]) {
    for dr in 0..p {
        let src = &img.row(row + dr)[col..col + p];
        out[dr * p..(dr + 1) * p].copy_from_slice(src);
    }
}

fn axis_positions(len: usize, p: usize, stride: usize) -> Vec<usize> {
    let last = len - p;
    let mut v: Vec<usize> = (0..=last).step_by(stride).collect();
    if *v.last().unwrap() != last {
        v.push(last);
    }
    v
}

/// Reference patch positions on a `stride` grid, always including the last
/// row/column so the image is fully covered.
pub fn extract_references(img: &Raster, p: usize, stride: usize) -> Result<Vec<Coord>> {
    if p == 0 || stride == 0 {
        return Err(Error::Parameter("patch size and stride must be at least 1".into()));
    }
    if p > img.width().min(img.height()) {
        return Err(Error::Size(format!(
            "patch size {p} exceeds image dimensions {}x{}",
            img.width(),
            img.height()
        )));
    }
    let rows = axis_positions(img.height(), p, stride);
    let cols = axis_positions(img.width(), p, stride);
    Ok(rows.iter().flat_map(|&r| cols.iter().map(move |&c| (r, c))).collect())
}

/// Range of candidate top-left positions along one axis.
///
/// The window spans `window` pixels (or the whole axis if shorter) around the
/// reference patch, shifted to stay inside the image.
fn candidate_span(len: usize, reference: usize, p: usize, window: usize) -> (usize, usize) {
    let w = window.min(len);
    let half = (w - p) / 2;
    let start = reference.saturating_sub(half).min(len - w);
    (start, start + (w - p))
}

/// Finds the `k` patches most similar to the one at `reference`.
///
/// Candidates are every patch fully inside the search window. The reference comes
/// first; the rest are ordered by squared distance, ties broken by row-major
/// position. If the window holds fewer than `k` patches the group is padded with
/// copies of the reference.
pub fn block_match(img: &Raster, reference: Coord, p: usize, k: usize, window: usize) -> Result<PatchGroup> {
    if k == 0 {
        return Err(Error::Parameter("stack count must be at least 1".into()));
    }
    if p == 0 || window < p {
        return Err(Error::Parameter(format!(
            "search window {window} must be at least the patch size {p}"
        )));
    }
    if p > img.width().min(img.height()) {
        return Err(Error::Size(format!("patch size {p} exceeds image dimensions")));
    }
    let (r0, c0) = reference;
    if r0 + p > img.height() || c0 + p > img.width() {
        return Err(Error::Size(format!("reference {reference:?} out of bounds")));
    }

    let n = p * p;
    let mut ref_patch = vec![0.0; n];
    read_patch(img, reference, p, &mut ref_patch);

    let (rs, re) = candidate_span(img.height(), r0, p, window);
    let (cs, ce) = candidate_span(img.width(), c0, p, window);

    let mut scored: Vec<(f64, Coord)> = Vec::with_capacity((re - rs + 1) * (ce - cs + 1));
    for r in rs..=re {
        for c in cs..=ce {
            if (r, c) == reference {
                continue;
            }
            let mut d = 0.0;
            for dr in 0..p {
                let row = &img.row(r + dr)[c..c + p];
                let rrow = &ref_patch[dr * p..(dr + 1) * p];
                for (a, b) in row.iter().zip(rrow) {
                    let t = a - b;
                    d += t * t;
                }
            }
            scored.push((d, (r, c)));
        }
    }
    // Candidates were generated in row-major order, so a stable sort keeps that
    // order among equal distances.
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));

    let found = 1 + scored.len().min(k - 1);
    let padded = k - found;

    let mut patches = DMatrix::zeros(n, k);
    let mut coords = Vec::with_capacity(k);
    let mut distances = Vec::with_capacity(k);

    patches.column_mut(0).copy_from_slice(&ref_patch);
    coords.push(reference);
    distances.push(0.0);
    let mut buf = vec![0.0; n];
    for (j, &(d, pos)) in scored.iter().take(found - 1).enumerate() {
        read_patch(img, pos, p, &mut buf);
        patches.column_mut(j + 1).copy_from_slice(&buf);
        coords.push(pos);
        distances.push(d);
    }
    for j in found..k {
        patches.column_mut(j).copy_from_slice(&ref_patch);
        coords.push(reference);
        distances.push(0.0);
    }
    PatchGroup::from_parts(p, patches, coords, distances, padded)
}

/// Pixels that received no patch estimate during aggregation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub total_pixels: usize,
    pub uncovered_pixels: usize,
}

/// Running sums of patch estimates and their weights.
#[derive(Debug, Clone)]
pub struct WeightMap {
    width: usize,
    height: usize,
    accumulator: Vec<f64>,
    weight: Vec<f64>,
}

impl WeightMap {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            accumulator: vec![0.0; width * height],
            weight: vec![0.0; width * height],
        }
    }

    /// Adds one patch estimate with the given weight.
    pub fn add_patch(&mut self, (row, col): Coord, p: usize, values: &[f64], weight: f64) {
        debug_assert_eq!(values.len(), p * p);
        for dr in 0..p {
            let base = (row + dr) * self.width + col;
            for dc in 0..p {
                self.accumulator[base + dc] += weight * values[dr * p + dc];
                self.weight[base + dc] += weight;
            }
        }
    }

    /// Adds every non-padding column of a denoised group with unit weight.
    pub fn add_group(&mut self, group: &PatchGroup, estimate: &DMatrix<f64>) -> Result<()> {
        let p = group.patch_size();
        if estimate.nrows() != p * p || estimate.ncols() != group.len() {
            return Err(Error::Size("estimate shape does not match its group".into()));
        }
        for (j, &pos) in group.coords().iter().enumerate().take(group.len() - group.padded()) {
            if pos.0 + p > self.height || pos.1 + p > self.width {
                return Err(Error::Size(format!("patch at {pos:?} out of bounds")));
            }
            self.add_patch(pos, p, estimate.column(j).as_slice(), 1.0);
        }
        Ok(())
    }

    pub fn weights(&self) -> &[f64] {
        &self.weight
    }

    /// Normalizes the sums; uncovered pixels are copied from `fallback`.
    pub fn finish(&self, fallback: &Raster, kind: RasterKind) -> Result<(Raster, CoverageReport)> {
        if fallback.dims() != (self.width, self.height) {
            return Err(Error::DimensionMismatch {
                left: (self.width, self.height),
                right: fallback.dims(),
            });
        }
        let mut uncovered = 0;
        let data = self
            .accumulator
            .iter()
            .zip(&self.weight)
            .zip(fallback.data())
            .map(|((a, w), f)| {
                if *w > 0.0 {
                    a / w
                } else {
                    uncovered += 1;
                    *f
                }
            })
            .collect();
        let img = Raster::new(self.width, self.height, data, kind)?;
        Ok((
            img,
            CoverageReport {
                total_pixels: self.width * self.height,
                uncovered_pixels: uncovered,
            },
        ))
    }
}

/// Fuses denoised groups into an image by averaging overlapping estimates.
///
/// Groups are committed sorted by reference position, so the result does not
/// depend on the order they are supplied in. Pixels no patch touches keep their
/// value from `fallback`.
pub fn aggregate(groups: &[(PatchGroup, DMatrix<f64>)], fallback: &Raster) -> Result<(Raster, CoverageReport)> {
    if groups.is_empty() {
        return Err(Error::EmptyAggregation);
    }
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.sort_by(|&a, &b| groups[a].0.coords().cmp(groups[b].0.coords()));
    let mut map = WeightMap::new(fallback.width(), fallback.height());
    for i in order {
        let (group, estimate) = &groups[i];
        map.add_group(group, estimate)?;
    }
    map.finish(fallback, fallback.kind())
}
