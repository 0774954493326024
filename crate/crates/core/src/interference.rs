//! Linear algebra of the four-cell spillover design.
//!
//! In the split layout the four test-set means Y = (Y11, Y12, Y21, Y22) have
//! expected value C(gamma) * A, where A = (lam1, lamc1, lamc2, lam2) stacks
//! the two agents' seed rates and C mixes them with the cross-influence
//! discount gamma. The statistic T = B C^{-1} Y then unmixes the cells and
//! estimates the per-agent performances B A = (lam1 + lamc1, lam2 + lamc2),
//! with covariance B C^{-1} D_A (C^{-1})' B' for D_A = diag(C A).

use crate::linalg::{LinalgError, Matrix};
use crate::outcome_models::{Action, ActionProfile};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum InterferenceError {
    #[error("C(gamma) is singular at gamma = {0} (requires gamma < 1)")]
    SingularC(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Cached matrices of the four-cell design for one value of gamma.
#[derive(Clone, Debug)]
pub struct InterferenceAlgebra {
    gamma: f64,
    b: Matrix,
    c: Matrix,
    c_inv: Matrix,
}

/// Build the aggregation matrix B, the rate-mixing matrix C(gamma) and its
/// numeric inverse (Gauss-Jordan with partial pivoting).
///
/// ```
/// use icx_core::build_algebra;
///
/// // noiseless cell means at gamma = 0.3 for rates (3, 1) and (2, 4)
/// let alg = build_algebra(0.3).unwrap();
/// let cells = [3.0 + 0.3 * 4.0, 4.0 + 0.3 * 3.0, 1.0 + 0.3 * 2.0, 2.0 + 0.3 * 1.0];
/// let t = alg.compute_t(cells);
/// assert!((t[0] - 4.0).abs() < 1e-12 && (t[1] - 6.0).abs() < 1e-12);
/// ```
pub fn build_algebra(gamma: f64) -> Result<InterferenceAlgebra, InterferenceError> {
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(InterferenceError::InvalidParameter(format!(
            "gamma must be a finite nonnegative real, got {gamma}"
        )));
    }
    if gamma >= 1.0 {
        return Err(InterferenceError::SingularC(gamma));
    }
    let b = Matrix::from_rows(&[&[1.0, 1.0, 0.0, 0.0], &[0.0, 0.0, 1.0, 1.0]]);
    let c = Matrix::from_rows(&[
        &[1.0, 0.0, gamma, 0.0],
        &[gamma, 0.0, 1.0, 0.0],
        &[0.0, 1.0, 0.0, gamma],
        &[0.0, gamma, 0.0, 1.0],
    ]);
    let c_inv = c.inverse().map_err(|e| match e {
        LinalgError::Singular { .. } => InterferenceError::SingularC(gamma),
        LinalgError::Dimension(d) => InterferenceError::InvalidParameter(d),
    })?;
    Ok(InterferenceAlgebra { gamma, b, c, c_inv })
}

impl InterferenceAlgebra {
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn c(&self) -> &Matrix {
        &self.c
    }

    pub fn c_inv(&self) -> &Matrix {
        &self.c_inv
    }

    /// Stack a two-agent profile into the rate vector (lam1, lamc1, lamc2, lam2).
    pub fn rate_vector(&self, profile: &ActionProfile) -> Result<[f64; 4], InterferenceError> {
        if profile.len() != 2 {
            return Err(InterferenceError::InvalidParameter(format!(
                "four-cell design takes exactly 2 agents, got {}",
                profile.len()
            )));
        }
        let mut pairs = [(0.0, 0.0); 2];
        for (slot, action) in pairs.iter_mut().zip(&profile.actions) {
            match *action {
                Action::InterferencePair { lam, lamc } => *slot = (lam, lamc),
                _ => {
                    return Err(InterferenceError::InvalidParameter(
                        "profile actions must be seed-rate pairs".into(),
                    ))
                }
            }
        }
        Ok([pairs[0].0, pairs[0].1, pairs[1].1, pairs[1].0])
    }

    /// The identifying statistic T = B C^{-1} Y from the four cell means.
    pub fn compute_t(&self, cell_means: [f64; 4]) -> [f64; 2] {
        let unmixed = self.c_inv.matvec(&cell_means);
        let t = self.b.matvec(&unmixed);
        [t[0], t[1]]
    }

    /// Covariance of T under the cell-count normalization: B C^{-1} D_A (C^{-1})' B'.
    pub fn statistic_covariance(
        &self,
        profile: &ActionProfile,
    ) -> Result<Matrix, InterferenceError> {
        let a = self.rate_vector(profile)?;
        let d = self.c.matvec(&a);
        let m = self.b.matmul(&self.c_inv);
        let mut sigma = Matrix::zeros(2, 2);
        for i in 0..2 {
            for j in 0..2 {
                sigma[(i, j)] = (0..4).map(|r| m[(i, r)] * d[r] * m[(j, r)]).sum();
            }
        }
        Ok(sigma)
    }

    /// Closed form of the score-difference variance under the identity
    /// transform: (1 + gamma) (chi_1 + chi_2) / (1 - gamma)^2.
    ///
    /// Derivation: T1 - T2 = (y1 + y3 - y2 - y4) / (1 - gamma), so its
    /// variance is sum(d_i) / (1 - gamma)^2 with sum(d_i) =
    /// (1 + gamma)(chi_1 + chi_2).
    pub fn pairwise_variance_closed_form(
        &self,
        profile: &ActionProfile,
    ) -> Result<f64, InterferenceError> {
        let a = self.rate_vector(profile)?;
        let chi_sum = a.iter().sum::<f64>();
        Ok((1.0 + self.gamma) * chi_sum / ((1.0 - self.gamma) * (1.0 - self.gamma)))
    }
}
