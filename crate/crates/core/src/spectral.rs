//! Perron vector, pi-weighted norms, the contraction factor `sigma_B`, and
//! the graph-dependent constants that enter every convergence bound.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::digraph::WeightMatrix;
use crate::error::{Error, Result};

pub const PERRON_TOL: f64 = 1e-12;
pub const PERRON_MAX_ITER: usize = 1_000_000;
pub const CONSTANTS_TOL: f64 = 1e-12;

/// Stationary data of a primitive column-stochastic matrix.
#[derive(Debug, Clone)]
pub struct PerronData {
    /// Right Perron vector, positive and summing to one.
    pub pi: DVector<f64>,
    /// `pi * 1^T`.
    pub b_inf: DMatrix<f64>,
    /// `|||B - B_inf|||_pi`.
    pub sigma_b: f64,
    pub pi_max: f64,
    pub pi_min: f64,
    /// `max_i |(B pi - pi)_i|` at termination.
    pub residual: f64,
}

impl PerronData {
    pub fn n(&self) -> usize {
        self.pi.len()
    }
}

/// Graph constants used by the step-size and residual bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GraphConstants {
    /// `pi_max / pi_min`.
    pub h: f64,
    /// `sqrt(h) * ||1 - n pi||_2`.
    pub beta: f64,
    /// `sup_k ||Y_k||_2`.
    pub y_sup: f64,
    /// `sup_k ||Y_k^{-1}||_2`.
    pub y_minus: f64,
    /// Directivity constant `y_-^6 y^2 h (1 + beta)`.
    pub tau: f64,
}

/// Power iteration for the right Perron vector of `B`.
pub fn perron_vector(b: &WeightMatrix, tol: f64, max_iter: usize) -> Result<PerronData> {
    let bm = b.matrix();
    let n = b.n();
    let mut pi = DVector::from_element(n, 1.0 / n as f64);
    let mut residual = f64::INFINITY;
    let mut converged = false;
    for _ in 0..max_iter {
        let mut next = bm * &pi;
        let s = next.sum();
        next /= s;
        residual = (&next - &pi).amax();
        pi = next;
        if residual <= tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::PerronNotConverged {
            iterations: max_iter,
            residual,
        });
    }
    pi = polish(bm, pi);
    residual = (bm * &pi - &pi).amax();
    if pi.iter().any(|&p| p <= 0.0) {
        return Err(Error::InvalidGraph("Perron vector has non-positive entries; B is not primitive".into()));
    }
    let b_inf = &pi * DVector::from_element(n, 1.0).transpose();
    let sigma_b = pi_matrix_norm(&(bm - &b_inf), &pi)?;
    Ok(PerronData {
        pi_max: pi.max(),
        pi_min: pi.min(),
        pi,
        b_inf,
        sigma_b,
        residual,
    })
}

// Power iteration stops with an error of roughly residual / (1 - |lambda_2|);
// one direct solve of (I - B) pi = 0, sum(pi) = 1 brings it to rounding level.
fn polish(bm: &DMatrix<f64>, pi: DVector<f64>) -> DVector<f64> {
    let n = bm.nrows();
    let mut system = DMatrix::identity(n, n) - bm;
    system.row_mut(n - 1).fill(1.0);
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    match system.lu().solve(&rhs) {
        Some(solved) if solved.iter().all(|&v| v > 0.0)
            && (bm * &solved - &solved).amax() <= (bm * &pi - &pi).amax() =>
        {
            solved
        }
        _ => pi,
    }
}

/// Perron data with the default tolerance and iteration cap.
pub fn perron(b: &WeightMatrix) -> Result<PerronData> {
    perron_vector(b, PERRON_TOL, PERRON_MAX_ITER)
}

/// `||x||_pi = sqrt(sum_i x_i^2 / pi_i)`.
pub fn pi_norm(x: &DVector<f64>, pi: &DVector<f64>) -> Result<f64> {
    check_len(pi.len(), x.len())?;
    Ok(x.iter().zip(pi.iter()).map(|(v, p)| v * v / p).sum::<f64>().sqrt())
}

/// Squared blockwise pi-norm of an `n x p` stack: row `i` is weighted by
/// `1/pi_i`, Euclidean within the row.
pub fn pi_norm2_rows(x: &DMatrix<f64>, pi: &DVector<f64>) -> f64 {
    x.row_iter()
        .zip(pi.iter())
        .map(|(row, p)| row.norm_squared() / p)
        .sum()
}

/// Spectral norm of `diag(sqrt pi)^-1 X diag(sqrt pi)`.
pub fn pi_matrix_norm(x: &DMatrix<f64>, pi: &DVector<f64>) -> Result<f64> {
    let n = pi.len();
    if x.nrows() != n || x.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: if x.nrows() != n { x.nrows() } else { x.ncols() },
        });
    }
    let sq: Vec<f64> = pi.iter().map(|p| p.sqrt()).collect();
    let scaled = DMatrix::from_fn(n, n, |i, j| x[(i, j)] * sq[j] / sq[i]);
    Ok(scaled.singular_values().max())
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Computes `h`, `beta`, `y`, `y_-` and `tau`.
///
/// `y` and `y_-` are suprema over the push-sum weights `y_k = B^k 1`; the
/// sequence is followed until it is within `tol` of its limit `n pi` and the
/// limit itself is included in the supremum.
pub fn graph_constants(pd: &PerronData, b: &WeightMatrix, tol: f64) -> GraphConstants {
    let n = pd.n();
    let limit = &pd.pi * n as f64;
    let h = pd.pi_max / pd.pi_min;
    let beta = h.sqrt() * limit.map(|v| 1.0 - v).norm();

    let mut y_sup = limit.max();
    let mut y_minus = 1.0 / limit.min();
    let mut y = DVector::from_element(n, 1.0);
    // Geometric convergence at rate sigma_B; the cap only guards against
    // tolerances below the floating-point floor.
    for _ in 0..10_000_000 {
        y_sup = y_sup.max(y.max());
        y_minus = y_minus.max(1.0 / y.min());
        if (&y - &limit).norm() <= tol {
            break;
        }
        y = b.matrix() * &y;
    }
    let tau = y_minus.powi(6) * y_sup * y_sup * h * (1.0 + beta);
    GraphConstants {
        h,
        beta,
        y_sup,
        y_minus,
        tau,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopeReport {
    pub pass: bool,
    /// Smallest `beta sigma_B^k + 1e-12 - ||Y_k - Y_inf||_2` seen.
    pub min_slack: f64,
}

/// Checks `||Y_k - Y_inf||_2 <= beta sigma_B^k` for `k = 0..=k_max`.
pub fn lemma1_envelope_check(
    b: &WeightMatrix,
    pd: &PerronData,
    gc: &GraphConstants,
    k_max: usize,
) -> EnvelopeReport {
    let n = pd.n();
    let limit = &pd.pi * n as f64;
    let mut y = DVector::from_element(n, 1.0);
    let mut min_slack = f64::INFINITY;
    for k in 0..=k_max {
        // Y_k - Y_inf is diagonal, so its spectral norm is the largest entry.
        let dev = (&y - &limit).amax();
        let slack = gc.beta * pd.sigma_b.powi(k as i32) + 1e-12 - dev;
        min_slack = min_slack.min(slack);
        y = b.matrix() * &y;
    }
    EnvelopeReport {
        pass: min_slack >= 0.0,
        min_slack,
    }
}
