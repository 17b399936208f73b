//! Despeckling of images corrupted by multiplicative gamma (SAR-style) speckle.
//!
//! The noisy intensity image is moved to a domain where the noise is close to
//! additive Gaussian (logarithm followed by a fitted Yeo-Johnson power
//! transform). There, similar patches are stacked into groups, each group is
//! coded in the basis of its own singular vectors, and the code is shrunk by a
//! weighted Lasso whose data term trusts clean patches more (`w1 = 1/sigma_k`)
//! and whose penalty spares strong atoms (`w2 = 1/S_i`). Overlapping patch
//! estimates are averaged and the transforms are inverted.
//!
//! ```
//! use despeckle::{apply_speckle, despeckle, metrics, Looks, PipelineConfig, Raster, RasterKind};
//!
//! let clean = Raster::from_fn(48, 48, RasterKind::Intensity, |r, c| {
//!     if (r / 12 + c / 12) % 2 == 0 { 60.0 } else { 180.0 }
//! })?;
//! let noisy = apply_speckle(&clean, Looks::new(4.0)?, 7)?;
//! let cfg = PipelineConfig { patch_size: 8, stack_count: 8, ..PipelineConfig::default() };
//! let (restored, manifest) = despeckle(&noisy, &cfg)?;
//!
//! let before = metrics::psnr(&clean, &noisy, 255.0)?;
//! let after = metrics::psnr(&clean, &restored, 255.0)?;
//! assert!(after > before);
//! assert_eq!(manifest.coverage.uncovered_pixels, 0);
//! # Ok::<(), despeckle::Error>(())
//! ```
//!
//! A guide with one chapter per stage lives in the `book/` directory of the
//! repository.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod io;
pub mod metrics;
pub mod nonlocal;
pub mod pipeline;
pub mod raster;
pub mod sparse;
pub mod speckle;
pub mod transform;

pub use config::{LogEpsilon, PipelineConfig};
pub use error::{Error, Result};
pub use nonlocal::{aggregate, block_match, extract_references, PatchGroup};
pub use pipeline::{despeckle, despeckle_with_threads, run_ablation, RunManifest};
pub use raster::{Raster, RasterKind};
pub use sparse::{
    build_weights, closed_form_solution, reconstruct, solve_weighted_lasso_admm, svd_dictionary, AdmmControls,
    Dictionary, SparseCode, Weights,
};
pub use speckle::{apply_speckle, estimate_patch_sigma, sample_gamma_noise, Looks};
pub use transform::{select_lambda, yeo_johnson, yeo_johnson_inverse, YeoJohnson};

// The guide's code blocks run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/speckle.md")]
    mod speckle {}
    #[doc = include_str!("../../../book/src/transform.md")]
    mod transform {}
    #[doc = include_str!("../../../book/src/grouping.md")]
    mod grouping {}
    #[doc = include_str!("../../../book/src/sparse.md")]
    mod sparse {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/ablation.md")]
    mod ablation {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}
