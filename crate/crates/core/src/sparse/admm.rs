use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::{check_shapes, objective, soft_threshold, Dictionary, SparseCode, Weights};
use crate::error::{Error, Result};

/// ADMM penalty and stopping rules.
///
/// `rho` is relative to each column's data-term curvature `2 * w1_k^2`, so one
/// value works for groups whose noise scales differ by orders of magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmmControls {
    pub rho: f64,
    pub max_iters: usize,
    pub tol_primal: f64,
    pub tol_dual: f64,
}

impl Default for AdmmControls {
    fn default() -> Self {
        Self {
            rho: 1.0,
            max_iters: 200,
            tol_primal: 1e-8,
            tol_dual: 1e-8,
        }
    }
}

impl AdmmControls {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) || !(self.tol_primal > 0.0) || !(self.tol_dual > 0.0) || self.max_iters == 0 {
            return Err(Error::Parameter(format!("invalid ADMM controls {self:?}")));
        }
        Ok(())
    }
}

/// How an ADMM run ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmmReport {
    pub iterations: usize,
    pub converged: bool,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Objective at the sparse iterate after each iteration.
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct AdmmSolution {
    pub code: SparseCode,
    pub report: AdmmReport,
}

/// Minimizes `sum_k w1_k^2 ||y_k - D a_k||^2 + c sum_ik w2_i |a_ik|` by ADMM.
///
/// The split is `A = Z`: the `A` step solves a small ridge system per column, the
/// `Z` step soft-thresholds, and `U` accumulates the scaled constraint residual.
/// With `c = 0` the problem is plain least squares and is solved directly.
///
/// Hitting `max_iters` is reported through [`AdmmReport::converged`] rather than
/// as an error; the last sparse iterate is returned.
pub fn solve_weighted_lasso_admm(
    y: &DMatrix<f64>,
    dict: &Dictionary,
    w: &Weights,
    c: f64,
    ctrl: &AdmmControls,
) -> Result<AdmmSolution> {
    check_shapes(y, dict, w)?;
    ctrl.validate()?;
    if !(c >= 0.0) {
        return Err(Error::Parameter(format!(
            "regularization c must be non-negative, got {c}"
        )));
    }
    let d = &dict.u;
    let r = d.ncols();
    let k = y.ncols();
    let gram = d.transpose() * d;
    let dty = d.transpose() * y;

    if c == 0.0 {
        let chol = Cholesky::new(gram).ok_or_else(|| Error::Degenerate("dictionary is rank deficient".into()))?;
        let alpha = chol.solve(&dty);
        let obj = objective(y, dict, w, c, &alpha);
        return Ok(AdmmSolution {
            code: SparseCode { alpha },
            report: AdmmReport {
                iterations: 0,
                converged: true,
                primal_residual: 0.0,
                dual_residual: 0.0,
                objective_trace: vec![obj],
            },
        });
    }

    // Per-column penalty and factorization of (2 w1^2 G + rho_k I).
    let rhos: Vec<f64> = w.w1.iter().map(|w1| ctrl.rho * 2.0 * w1 * w1).collect();
    let factors: Vec<Cholesky<f64, Dyn>> = (0..k)
        .map(|j| {
            let curvature = 2.0 * w.w1[j] * w.w1[j];
            let mut m = &gram * curvature;
            for i in 0..r {
                m[(i, i)] += rhos[j];
            }
            Cholesky::new(m).ok_or_else(|| Error::Degenerate("ADMM system is not positive definite".into()))
        })
        .collect::<Result<_>>()?;

    let scale = dty.norm().max(f64::MIN_POSITIVE);
    let mut alpha = DMatrix::<f64>::zeros(r, k);
    let mut z = DMatrix::<f64>::zeros(r, k);
    let mut u = DMatrix::<f64>::zeros(r, k);
    let mut rhs = DVector::<f64>::zeros(r);
    let mut trace = Vec::new();
    let mut primal = f64::INFINITY;
    let mut dual = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < ctrl.max_iters {
        iterations += 1;
        let mut primal_sq = 0.0;
        let mut dual_sq = 0.0;
        let mut dual_scale_sq = 0.0;
        for j in 0..k {
            let curvature = 2.0 * w.w1[j] * w.w1[j];
            let rho = rhos[j];
            for i in 0..r {
                rhs[i] = curvature * dty[(i, j)] + rho * (z[(i, j)] - u[(i, j)]);
            }
            let a = factors[j].solve(&rhs);
            for i in 0..r {
                alpha[(i, j)] = a[i];
                let z_new = soft_threshold(a[i] + u[(i, j)], c * w.w2[i] / rho);
                let dz = z_new - z[(i, j)];
                z[(i, j)] = z_new;
                let res = a[i] - z_new;
                u[(i, j)] += res;
                // Residuals in normalized units (divided by the column curvature).
                let norm = rho / curvature;
                primal_sq += res * res;
                dual_sq += (norm * dz) * (norm * dz);
                dual_scale_sq += (norm * u[(i, j)]) * (norm * u[(i, j)]);
            }
        }
        primal = primal_sq.sqrt();
        dual = dual_sq.sqrt();
        trace.push(objective(y, dict, w, c, &z));

        let primal_scale = alpha.norm().max(z.norm()).max(scale);
        let dual_scale = dual_scale_sq.sqrt().max(scale);
        if primal <= ctrl.tol_primal * primal_scale && dual <= ctrl.tol_dual * dual_scale {
            converged = true;
            break;
        }
    }

    Ok(AdmmSolution {
        code: SparseCode { alpha: z },
        report: AdmmReport {
            iterations,
            converged,
            primal_residual: primal,
            dual_residual: dual,
            objective_trace: trace,
        },
    })
}
