//! Doubly weighted sparse coding of patch groups.
//!
//! A group matrix `Y` (`p^2 x k`, one patch per column) is coded in the basis of
//! its own left singular vectors `D = U`. The code `A` minimizes
//!
//! ```text
//! F(A) = sum_k w1_k^2 * ||y_k - D a_k||^2  +  c * sum_{i,k} w2_i * |a_ik|
//! ```
//!
//! where `w1_k = 1 / sigma_k` down-weights noisy patches and `w2_i = 1 / S~_i`
//! penalizes atoms with small (normalized) singular values more strongly. This is
//! the MAP estimate under per-patch Gaussian noise and a per-atom Laplace prior.
//!
//! [`solve_weighted_lasso_admm`] is the production solver; [`closed_form_solution`]
//! exploits orthonormality of `D` and serves as its oracle.

mod admm;
mod svd;

pub use admm::{solve_weighted_lasso_admm, AdmmControls, AdmmReport, AdmmSolution};
pub use svd::{thin_svd, ThinSvd};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nonlocal::PatchGroup;

/// Default floor for normalized singular values.
pub const DEFAULT_S_FLOOR: f64 = 1e-6;

/// Orthonormal basis of a patch group with its singular values.
#[derive(Debug, Clone)]
pub struct Dictionary {
    /// `p^2 x r` with orthonormal columns.
    pub u: DMatrix<f64>,
    /// Non-increasing, length `r`.
    pub s: Vec<f64>,
    /// Set when the group was numerically zero and `u` is a canonical basis.
    pub degenerate: bool,
}

impl Dictionary {
    pub fn atoms(&self) -> usize {
        self.u.ncols()
    }
}

/// Dictionary from the thin SVD of the group matrix, `r = min(p^2, k)` atoms.
pub fn svd_dictionary(group: &PatchGroup) -> Result<Dictionary> {
    dictionary_from_matrix(group.patches())
}

pub(crate) fn dictionary_from_matrix(y: &DMatrix<f64>) -> Result<Dictionary> {
    if y.is_empty() {
        return Err(Error::Size("cannot build a dictionary from an empty group".into()));
    }
    let svd = thin_svd(y);
    let degenerate = svd.s[0] == 0.0;
    Ok(Dictionary {
        u: svd.u,
        s: svd.s,
        degenerate,
    })
}

/// Column weights `w1` (one per patch) and row weights `w2` (one per atom).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
}

impl Weights {
    /// All-ones weights: the plain Lasso.
    pub fn unit(patches: usize, atoms: usize) -> Self {
        Self {
            w1: vec![1.0; patches],
            w2: vec![1.0; atoms],
        }
    }
}

/// `w1_k = 1 / sigma_k`; `w2_i = 1 / max(S_i / S_1, s_floor)`.
pub fn build_weights(group: &PatchGroup, dict: &Dictionary, s_floor: f64) -> Result<Weights> {
    let sigmas = group.sigmas();
    if sigmas.len() != group.len() {
        return Err(Error::Parameter("group sigmas have not been estimated".into()));
    }
    weights_from_parts(sigmas, &dict.s, s_floor)
}

/// [`build_weights`] from raw noise scales and singular values.
pub fn weights_from_parts(sigmas: &[f64], s: &[f64], s_floor: f64) -> Result<Weights> {
    if let Some(sig) = sigmas.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::Parameter(format!("noise scales must be positive, got {sig}")));
    }
    if !(s_floor > 0.0) {
        return Err(Error::Parameter(format!("s_floor must be positive, got {s_floor}")));
    }
    let s1 = s.first().copied().unwrap_or(0.0);
    let w2 = s
        .iter()
        .map(|&si| {
            let normalized = if s1 > 0.0 { (si / s1).max(s_floor) } else { s_floor };
            1.0 / normalized
        })
        .collect();
    Ok(Weights {
        w1: sigmas.iter().map(|s| 1.0 / s).collect(),
        w2,
    })
}

/// Coefficient matrix, `r x k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    pub alpha: DMatrix<f64>,
}

#[inline]
pub fn soft_threshold(b: f64, tau: f64) -> f64 {
    b.signum() * (b.abs() - tau).max(0.0)
}

pub(crate) fn check_shapes(y: &DMatrix<f64>, dict: &Dictionary, w: &Weights) -> Result<()> {
    if dict.u.nrows() != y.nrows() {
        return Err(Error::Size(format!(
            "dictionary rows {} do not match patch length {}",
            dict.u.nrows(),
            y.nrows()
        )));
    }
    if w.w1.len() != y.ncols() || w.w2.len() != dict.atoms() {
        return Err(Error::Size("weight lengths do not match the group".into()));
    }
    Ok(())
}

/// Value of the weighted objective `F(A)`.
pub fn objective(y: &DMatrix<f64>, dict: &Dictionary, w: &Weights, c: f64, alpha: &DMatrix<f64>) -> f64 {
    let residual = y - &dict.u * alpha;
    let data: f64 = residual
        .column_iter()
        .zip(&w.w1)
        .map(|(col, w1)| w1 * w1 * col.norm_squared())
        .sum();
    let penalty: f64 = alpha
        .row_iter()
        .zip(&w.w2)
        .map(|(row, w2)| w2 * row.iter().map(|a| a.abs()).sum::<f64>())
        .sum();
    data + c * penalty
}

/// Exact minimizer of `F` for orthonormal `D`: soft thresholding of `D^T Y`.
///
/// The problem separates per coefficient into `w1_k^2 (b - a)^2 + c w2_i |a|`,
/// whose minimizer is `soft(b, c * w2_i / (2 * w1_k^2))`.
pub fn closed_form_solution(y: &DMatrix<f64>, dict: &Dictionary, w: &Weights, c: f64) -> Result<SparseCode> {
    check_shapes(y, dict, w)?;
    let beta = dict.u.transpose() * y;
    let alpha = DMatrix::from_fn(beta.nrows(), beta.ncols(), |i, k| {
        let tau = c * w.w2[i] / (2.0 * w.w1[k] * w.w1[k]);
        soft_threshold(beta[(i, k)], tau)
    });
    Ok(SparseCode { alpha })
}

/// Denoised group `D A`.
pub fn reconstruct(dict: &Dictionary, code: &SparseCode) -> Result<DMatrix<f64>> {
    if dict.atoms() != code.alpha.nrows() {
        return Err(Error::Size("code rows do not match dictionary atoms".into()));
    }
    Ok(&dict.u * &code.alpha)
}
