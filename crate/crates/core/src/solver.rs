//! Dense linear algebra: Newton correction, determinant signs, condition
//! numbers and near-kernels.

use faer::linalg::solvers::PartialPivLu;
use faer::prelude::*;
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{ChoreoError, Result};

/// Square nonlinear system with a dense Jacobian.
pub trait NonlinearSystem {
    fn residual(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn jacobian(&self, x: &[f64]) -> Result<Mat<f64>>;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonSettings {
    pub tol_residual: f64,
    pub tol_step: f64,
    pub max_iterations: usize,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self { tol_residual: 1e-10, tol_step: 1e-12, max_iterations: 20 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonReport {
    pub converged: bool,
    pub iterations: usize,
    /// Sup norm of the residual at the returned point.
    pub final_residual: f64,
    /// Sup norm of the last update.
    pub final_step: f64,
    /// Sup norm of the residual before each iteration and at the end.
    pub residuals: Vec<f64>,
    pub failure: Option<String>,
}

pub fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Full (undamped) Newton iteration from `x0`.
///
/// Stops with success once the residual sup norm drops below
/// `tol_residual`; a step smaller than `tol_step` ends the iteration early.
/// A singular linear solve, three consecutive residual increases or running
/// out of iterations are reported as non-convergence, not as errors.
pub fn newton_correct<S: NonlinearSystem>(
    system: &S,
    x0: &[f64],
    settings: &NewtonSettings,
) -> Result<(Vec<f64>, NewtonReport)> {
    let mut x = x0.to_vec();
    let mut residuals = Vec::new();
    let mut final_step = 0.0;
    let mut growth = 0;
    let mut iterations = 0;
    let fail = |x: Vec<f64>, residuals: Vec<f64>, iterations, final_step, why: String| {
        let final_residual = *residuals.last().unwrap_or(&f64::INFINITY);
        Ok((
            x,
            NewtonReport {
                converged: false,
                iterations,
                final_residual,
                final_step,
                residuals,
                failure: Some(why),
            },
        ))
    };
    loop {
        let r = system.residual(&x)?;
        let norm = sup_norm(&r);
        if !norm.is_finite() {
            residuals.push(norm);
            return fail(x, residuals, iterations, final_step, "non-finite residual".into());
        }
        if let Some(&prev) = residuals.last() {
            growth = if norm > prev { growth + 1 } else { 0 };
        }
        residuals.push(norm);
        if norm < settings.tol_residual {
            return Ok((
                x,
                NewtonReport {
                    converged: true,
                    iterations,
                    final_residual: norm,
                    final_step,
                    residuals,
                    failure: None,
                },
            ));
        }
        if growth >= 3 {
            return fail(x, residuals, iterations, final_step, "residual grew three times in a row".into());
        }
        if final_step != 0.0 && final_step < settings.tol_step {
            return fail(x, residuals, iterations, final_step, "stagnated above the residual tolerance".into());
        }
        if iterations >= settings.max_iterations {
            return fail(x, residuals, iterations, final_step, "iteration limit reached".into());
        }
        let jac = system.jacobian(&x)?;
        let lu = jac.partial_piv_lu();
        if lu_det_sign(&lu) == 0 {
            return fail(x, residuals, iterations, final_step, "singular Jacobian".into());
        }
        let rhs = Mat::<f64>::from_fn(r.len(), 1, |i, _| r[i]);
        let delta = lu.solve(&rhs);
        final_step = (0..x.len()).fold(0.0f64, |a, i| a.max(delta[(i, 0)].abs()));
        if !final_step.is_finite() {
            return fail(x, residuals, iterations, final_step, "non-finite update".into());
        }
        for (i, xi) in x.iter_mut().enumerate() {
            *xi -= delta[(i, 0)];
        }
        iterations += 1;
    }
}

/// Relative pivot size below which a factorization is treated as singular.
const PIVOT_TOL: f64 = 1e-14;

fn permutation_parity(forward: &[usize]) -> i32 {
    let mut seen = vec![false; forward.len()];
    let mut sign = 1;
    for start in 0..forward.len() {
        if seen[start] {
            continue;
        }
        let mut len = 0;
        let mut i = start;
        while !seen[i] {
            seen[i] = true;
            i = forward[i];
            len += 1;
        }
        if len % 2 == 0 {
            sign = -sign;
        }
    }
    sign
}

/// Determinant sign from an existing factorization.
pub fn lu_det_sign(lu: &PartialPivLu<f64>) -> i32 {
    let u = lu.U();
    let n = u.nrows().min(u.ncols());
    let max_pivot = (0..n).fold(0.0f64, |a, i| a.max(u[(i, i)].abs()));
    if max_pivot == 0.0 || !max_pivot.is_finite() {
        return 0;
    }
    let mut sign = 1;
    for i in 0..n {
        let p = u[(i, i)];
        if p.abs() < PIVOT_TOL * max_pivot || !p.is_finite() {
            return 0;
        }
        if p < 0.0 {
            sign = -sign;
        }
    }
    let (forward, _) = lu.P().arrays();
    sign * permutation_parity(forward)
}

/// Sign of `det A` via partial-pivoting LU; `0` for numerically singular `A`.
pub fn det_sign(a: &Mat<f64>) -> i32 {
    assert_eq!(a.nrows(), a.ncols(), "det_sign needs a square matrix");
    lu_det_sign(&a.partial_piv_lu())
}

/// `σ_max / σ_min` from the singular values; `1e300` when `σ_min < 1e-300`.
pub fn condition_estimate(a: &Mat<f64>) -> f64 {
    assert_eq!(a.nrows(), a.ncols(), "condition_estimate needs a square matrix");
    let sv = match a.singular_values() {
        Ok(sv) => sv,
        Err(_) => return 1e300,
    };
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < 1e-300 {
        1e300
    } else {
        max / min
    }
}

/// Near-kernel of an `N × (N+1)` matrix.
#[derive(Clone, Debug)]
pub struct KernelBasis {
    /// Unit right singular vectors, smallest singular value first.
    pub vectors: Vec<Vec<f64>>,
    /// All `N + 1` singular values in decreasing order (the last is the
    /// structural zero of the wide matrix).
    pub singular_values: Vec<f64>,
}

/// Relative size below which a singular value counts as zero.
pub const KERNEL_SMALL: f64 = 1e-6;
/// Relative size above which the next singular value must stay.
pub const KERNEL_GAP: f64 = 1e-3;

/// Right singular vectors of the `count ∈ {1, 2}` smallest singular values.
///
/// For `count = 2` the numerical rank deficiency must be exactly two: both
/// small singular values below [`KERNEL_SMALL`]`·σ_max` and the next one above
/// [`KERNEL_GAP`]`·σ_max`.
pub fn kernel_basis(a: &Mat<f64>, count: usize) -> Result<KernelBasis> {
    if !(1..=2).contains(&count) {
        return Err(ChoreoError::InvalidInput(format!("kernel count {count} not in {{1, 2}}")));
    }
    let (rows, cols) = (a.nrows(), a.ncols());
    if cols != rows + 1 {
        return Err(ChoreoError::InvalidInput(format!(
            "kernel_basis expects an N × (N+1) matrix, got {rows} × {cols}"
        )));
    }
    let svd = a
        .svd()
        .map_err(|e| ChoreoError::InvalidInput(format!("SVD did not converge: {e:?}")))?;
    let s = svd.S();
    let mut singular_values: Vec<f64> = (0..rows).map(|i| s[i]).collect();
    singular_values.push(0.0);
    let v = svd.V();
    let vectors: Vec<Vec<f64>> = (0..count)
        .map(|k| {
            let col = cols - 1 - k;
            (0..cols).map(|i| v[(i, col)]).collect()
        })
        .collect();
    if count == 2 {
        let max = singular_values[0];
        let small = singular_values[cols - 2];
        let next = singular_values[cols - 3];
        if small >= KERNEL_SMALL * max || next <= KERNEL_GAP * max {
            return Err(ChoreoError::NotSimpleBranchPoint(format!(
                "trailing singular values {next:.3e}, {small:.3e} relative to σ_max {max:.3e}"
            )));
        }
    }
    Ok(KernelBasis { vectors, singular_values })
}

/// Dense matrix-vector product.
pub fn mat_vec(a: &Mat<f64>, x: &[f64]) -> Vec<f64> {
    let xm = Mat::<f64>::from_fn(x.len(), 1, |i, _| x[i]);
    let y = a * &xm;
    (0..a.nrows()).map(|i| y[(i, 0)]).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
