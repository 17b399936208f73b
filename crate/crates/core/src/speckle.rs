//! Multiplicative gamma speckle: simulation and per-patch noise scale estimation.
//!
//! Fully developed speckle with `L` looks is modeled as a unit-mean gamma field,
//! `n ~ Gamma(shape = L, rate = L)`, multiplying the clean intensity pixel-wise.
//! The field has mean 1 and variance `1 / L`.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nonlocal::PatchGroup;
use crate::raster::{Raster, RasterKind};

/// Gaussian consistency constant for the median absolute deviation.
pub const MAD_SCALE: f64 = 1.4826;

/// Lower bound on estimated per-patch noise scales.
pub const SIGMA_FLOOR: f64 = 1e-6;

/// Equivalent number of looks.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Looks(f64);

impl Looks {
    pub fn new(looks: f64) -> Result<Self> {
        if !(looks > 0.0) || !looks.is_finite() {
            return Err(Error::Parameter(format!(
                "number of looks must be positive and finite, got {looks}"
            )));
        }
        Ok(Self(looks))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

fn gamma_for(looks: Looks) -> Gamma<f64> {
    // rand_distr parameterizes by scale; rate L is scale 1/L.
    Gamma::new(looks.get(), 1.0 / looks.get()).expect("looks validated positive")
}

/// Draws `n_samples` i.i.d. `Gamma(L, L)` variates. Bit-deterministic for a fixed seed.
pub fn sample_gamma_noise(looks: Looks, n_samples: usize, seed: u64) -> Result<Vec<f64>> {
    if n_samples == 0 {
        return Err(Error::Parameter("n_samples must be at least 1".into()));
    }
    let dist = gamma_for(looks);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    Ok((0..n_samples).map(|_| dist.sample(&mut rng)).collect())
}

/// Multiplies a clean intensity image by a seeded speckle field.
pub fn apply_speckle(clean: &Raster, looks: Looks, seed: u64) -> Result<Raster> {
    if clean.kind() != RasterKind::Intensity {
        return Err(Error::Domain("speckle applies to intensity rasters".into()));
    }
    if let Some(v) = clean.data().iter().find(|v| **v < 0.0) {
        return Err(Error::Domain(format!("negative input pixel {v}")));
    }
    let noise = sample_gamma_noise(looks, clean.data().len(), seed)?;
    let data = clean.data().iter().zip(&noise).map(|(x, n)| x * n).collect();
    Raster::intensity(clean.width(), clean.height(), data)
}

/// Median of a slice; sorts the slice in place. Returns NaN for an empty slice.
pub(crate) fn median_in_place(values: &mut [f64]) -> f64 {
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    values.sort_unstable_by(f64::total_cmp);
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Robust noise scale for every patch of a group.
///
/// Each patch is compared against the elementwise median patch of the group; the
/// residual's median absolute deviation, scaled by [`MAD_SCALE`], estimates that
/// patch's noise standard deviation. Estimates are floored at [`SIGMA_FLOOR`].
pub fn estimate_patch_sigma(group: &PatchGroup) -> Result<Vec<f64>> {
    let k = group.len();
    if k < 2 {
        return Err(Error::InsufficientGroup { needed: 2, got: k });
    }
    let patches = group.patches();
    let n = patches.nrows();

    let mut row = vec![0.0; k];
    let center: Vec<f64> = (0..n)
        .map(|i| {
            for (j, slot) in row.iter_mut().enumerate() {
                *slot = patches[(i, j)];
            }
            median_in_place(&mut row)
        })
        .collect();

    let mut residual = vec![0.0; n];
    let sigmas = (0..k)
        .map(|j| {
            let col = patches.column(j);
            for (i, r) in residual.iter_mut().enumerate() {
                *r = col[i] - center[i];
            }
            let m = median_in_place(&mut residual);
            for r in residual.iter_mut() {
                *r = (*r - m).abs();
            }
            (MAD_SCALE * median_in_place(&mut residual)).max(SIGMA_FLOOR)
        })
        .collect();
    Ok(sigmas)
}
