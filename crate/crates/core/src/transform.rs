//! Log-Yeo-Johnson Gaussianization of speckled intensities.
//!
//! A logarithm turns multiplicative speckle into additive noise; the Yeo-Johnson
//! power transform then reshapes the (skewed) log-noise toward a Gaussian. The
//! shape parameter is picked by exhaustive grid search, minimizing the squared
//! skewness plus squared excess kurtosis of the transformed samples.
//!
//! Both stages invert exactly, so the denoised estimate can be mapped back to
//! intensities.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Raster, RasterKind};

/// Minimum number of samples accepted by [`select_lambda`].
pub const MIN_LAMBDA_SAMPLES: usize = 100;

/// Relative size of the log guard: `epsilon = LOG_EPSILON_FACTOR * max(image)`.
pub const LOG_EPSILON_FACTOR: f64 = 1e-3;

/// `out = ln(y + epsilon)`.
pub fn log_forward(y: &Raster, epsilon: f64) -> Result<Raster> {
    if y.kind() != RasterKind::Intensity {
        return Err(Error::Domain("log_forward expects an intensity raster".into()));
    }
    if !(epsilon > 0.0) {
        return Err(Error::Parameter(format!("epsilon must be positive, got {epsilon}")));
    }
    y.map(RasterKind::Transformed, |v| (v + epsilon).ln())
}

/// `out = max(exp(z) - epsilon, 0)`.
pub fn log_inverse(z: &Raster, epsilon: f64) -> Result<Raster> {
    z.map(RasterKind::Intensity, |v| (v.exp() - epsilon).max(0.0))
}

/// Default log guard for an image: a thousandth of its maximum, or `1e-3` for an all-zero image.
pub fn default_log_epsilon(y: &Raster) -> f64 {
    let max = y.max();
    LOG_EPSILON_FACTOR * if max > 0.0 { max } else { 1.0 }
}

/// Yeo-Johnson shape parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YeoJohnson {
    pub lambda: f64,
}

impl YeoJohnson {
    pub const IDENTITY: YeoJohnson = YeoJohnson { lambda: 1.0 };

    pub fn new(lambda: f64) -> Result<Self> {
        if !lambda.is_finite() {
            return Err(Error::Parameter(format!("lambda must be finite, got {lambda}")));
        }
        Ok(Self { lambda })
    }

    pub fn forward(self, x: f64) -> f64 {
        yeo_johnson(x, self.lambda)
    }

    pub fn inverse(self, v: f64) -> Result<f64> {
        yeo_johnson_inverse(v, self.lambda)
    }

    /// Elementwise forward transform.
    pub fn forward_raster(self, img: &Raster) -> Result<Raster> {
        img.map(RasterKind::Transformed, |x| self.forward(x))
    }

    /// Elementwise inverse; fails on the first value outside the attainable range.
    pub fn inverse_raster(self, img: &Raster) -> Result<Raster> {
        let data = img
            .data()
            .iter()
            .map(|&v| self.inverse(v))
            .collect::<Result<Vec<_>>>()?;
        Raster::transformed(img.width(), img.height(), data)
    }

    /// Open interval of values the forward map can produce.
    pub fn range(self) -> (f64, f64) {
        let lambda = self.lambda;
        let upper = if lambda < 0.0 { -1.0 / lambda } else { f64::INFINITY };
        let lower = if lambda > 2.0 {
            1.0 / (2.0 - lambda)
        } else {
            f64::NEG_INFINITY
        };
        (lower, upper)
    }
}

/// Forward Yeo-Johnson transform.
///
/// For `x < 0` the `2 - lambda` branch applies, with `-ln(1 - x)` at `lambda = 2`.
/// The power branches are evaluated through `expm1`/`ln_1p` so that they pass
/// continuously into the logarithmic ones as `lambda -> 0` or `lambda -> 2`.
pub fn yeo_johnson(x: f64, lambda: f64) -> f64 {
    if x >= 0.0 {
        if lambda == 0.0 {
            x.ln_1p()
        } else {
            (lambda * x.ln_1p()).exp_m1() / lambda
        }
    } else {
        let mu = 2.0 - lambda;
        if mu == 0.0 {
            -(-x).ln_1p()
        } else {
            -(mu * (-x).ln_1p()).exp_m1() / mu
        }
    }
}

/// Exact inverse of [`yeo_johnson`].
///
/// Errors when `v` lies outside the range of the forward map (only possible for
/// `lambda < 0` with large positive `v`, or `lambda > 2` with large negative `v`).
pub fn yeo_johnson_inverse(v: f64, lambda: f64) -> Result<f64> {
    if v >= 0.0 {
        if lambda == 0.0 {
            return Ok(v.exp_m1());
        }
        let t = lambda * v;
        if !(t > -1.0) {
            return Err(Error::Domain(format!(
                "value {v} is outside the range of Yeo-Johnson with lambda {lambda}"
            )));
        }
        Ok((t.ln_1p() / lambda).exp_m1())
    } else {
        let mu = 2.0 - lambda;
        if mu == 0.0 {
            return Ok(-(-v).exp_m1());
        }
        let t = -mu * v;
        if !(t > -1.0) {
            return Err(Error::Domain(format!(
                "value {v} is outside the range of Yeo-Johnson with lambda {lambda}"
            )));
        }
        Ok(-(t.ln_1p() / mu).exp_m1())
    }
}

/// Sample moments used by the Gaussianity objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentStats {
    pub mean: f64,
    /// Unbiased (n - 1) variance.
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

impl MomentStats {
    /// `skewness^2 + excess_kurtosis^2`.
    pub fn gaussianity_cost(&self) -> f64 {
        self.skewness * self.skewness + self.excess_kurtosis * self.excess_kurtosis
    }
}

/// Mean, unbiased variance, and the third and fourth central moments
/// standardized by the unbiased variance.
pub fn moments(samples: &[f64]) -> Result<MomentStats> {
    let n = samples.len();
    if n < 4 {
        return Err(Error::Degenerate(format!("need at least 4 samples, got {n}")));
    }
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in samples {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let variance = m2 / (nf - 1.0);
    if !(variance > 0.0) || !variance.is_finite() {
        return Err(Error::Degenerate("samples have zero (or non-finite) variance".into()));
    }
    let skewness = (m3 / nf) / variance.powf(1.5);
    let excess_kurtosis = (m4 / nf) / (variance * variance) - 3.0;
    Ok(MomentStats {
        mean,
        variance,
        skewness,
        excess_kurtosis,
    })
}

/// An evenly spaced set of candidate shape parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Default for LambdaGrid {
    fn default() -> Self {
        Self {
            min: -2.0,
            max: 4.0,
            step: 0.01,
        }
    }
}

impl LambdaGrid {
    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0) || !(self.max >= self.min) || !self.min.is_finite() || !self.max.is_finite() {
            return Err(Error::Parameter(format!("invalid lambda grid {self:?}")));
        }
        let n = ((self.max - self.min) / self.step + 1e-9).floor() as usize;
        // Snap to 1e-9 so that round values such as 1.0 land exactly on the grid.
        Ok((0..=n)
            .map(|i| ((self.min + i as f64 * self.step) * 1e9).round() / 1e9)
            .collect())
    }
}

/// Gaussianity cost of the Yeo-Johnson transformed samples; `+inf` when undefined.
pub fn gaussianity_cost(samples: &[f64], lambda: f64) -> f64 {
    let transformed: Vec<f64> = samples.iter().map(|&x| yeo_johnson(x, lambda)).collect();
    match moments(&transformed) {
        Ok(m) if m.gaussianity_cost().is_finite() => m.gaussianity_cost(),
        _ => f64::INFINITY,
    }
}

/// Exhaustive search for the shape parameter that makes `samples` most Gaussian.
///
/// Ties on the cost go to the candidate closest to the identity (`lambda = 1`).
pub fn select_lambda(samples: &[f64], grid: &[f64]) -> Result<YeoJohnson> {
    if samples.len() < MIN_LAMBDA_SAMPLES {
        return Err(Error::Parameter(format!(
            "lambda selection needs at least {MIN_LAMBDA_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if grid.is_empty() {
        return Err(Error::Parameter("lambda grid is empty".into()));
    }
    if let Some(l) = grid.iter().find(|l| !l.is_finite()) {
        return Err(Error::Parameter(format!("non-finite lambda candidate {l}")));
    }
    // Rejects constant input up front.
    moments(samples)?;
    // A canonical order makes the floating-point sums independent of input order.
    let mut sorted = samples.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let samples = &sorted[..];

    let costs: Vec<f64> = grid
        .par_iter()
        .map(|&lambda| gaussianity_cost(samples, lambda))
        .collect();

    let mut best = 0;
    for i in 1..grid.len() {
        let better =
            costs[i] < costs[best] || (costs[i] == costs[best] && (grid[i] - 1.0).abs() < (grid[best] - 1.0).abs());
        if better {
            best = i;
        }
    }
    YeoJohnson::new(grid[best])
}
