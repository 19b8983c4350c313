//! A-posteriori regularization updates.
//!
//! When the optimizer stops early, `z*` is not a stationary point and the
//! implicit-function argument behind the sensitivities does not apply. The
//! first-order update `R̃` is the minimum-norm nonnegative convex quadratic
//! whose gradient cancels the residual gradient `g` at `z*`; adding it makes
//! `z*` stationary for `J + R̃`. The second-order update shifts generalized
//! eigenvalues `λᵢ ≤ −1` so the Hessian becomes positive definite without
//! touching the remaining eigenpairs.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linops::{LinearOperator, ParamVector, RankOne};

/// Default `ε` in the second-order shift `δᵢ = −1 − λᵢ + ε`.
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// Half the range of `z*`, or 1.0 (with a warning) if `z*` is constant.
pub fn default_alpha(z_star: &ParamVector) -> f64 {
    if z_star.is_empty() {
        log::warn!("default_alpha: empty z*, using 1.0");
        return 1.0;
    }
    let range = z_star.max() - z_star.min();
    if range > 0.0 && range.is_finite() {
        0.5 * range
    } else {
        log::warn!("default_alpha: z* has no spread, using 1.0");
        1.0
    }
}

/// `R̃(z) = (α/2)‖g‖ − (z−z*)ᵀg + ((z−z*)ᵀg)² / (2α‖g‖)`.
///
/// Equivalently `½(z−z*)ᵀH_R̃(z−z*) − zᵀg + C` with
/// `H_R̃ = ggᵀ/(α‖g‖)` and `C = α‖g‖/2 + z*ᵀg`. With `g = 0` the update is
/// the zero function.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FirstOrderUpdate {
    pub g: ParamVector,
    pub alpha: f64,
    pub z_star: ParamVector,
}

impl FirstOrderUpdate {
    pub fn new(g: ParamVector, alpha: f64, z_star: ParamVector) -> Result<Self> {
        check_dim("first-order update", z_star.len(), g.len())?;
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::violation(format!("alpha must be positive, got {alpha}")));
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::violation("non-finite gradient in first-order update"));
        }
        Ok(Self { g, alpha, z_star })
    }

    pub fn g_norm(&self) -> f64 {
        self.g.norm()
    }

    pub fn is_trivial(&self) -> bool {
        self.g_norm() == 0.0
    }

    pub fn constant(&self) -> f64 {
        if self.is_trivial() {
            return 0.0;
        }
        0.5 * self.alpha * self.g_norm() + self.z_star.dot(&self.g)
    }

    pub fn value(&self, z: &ParamVector) -> f64 {
        if self.is_trivial() {
            return 0.0;
        }
        let gn = self.g_norm();
        let t = (z - &self.z_star).dot(&self.g);
        0.5 * self.alpha * gn - t + 0.5 * t * t / (self.alpha * gn)
    }

    /// `∇R̃(z) = −g + g (z−z*)ᵀg / (α‖g‖)`.
    pub fn gradient(&self, z: &ParamVector) -> ParamVector {
        if self.is_trivial() {
            return DVector::zeros(self.g.len());
        }
        let t = (z - &self.z_star).dot(&self.g);
        &self.g * (t / (self.alpha * self.g_norm()) - 1.0)
    }

    /// `H_R̃ = ggᵀ/(α‖g‖)` as an operator (zero when trivial).
    pub fn hessian(&self) -> RankOne {
        let coef = if self.is_trivial() {
            0.0
        } else {
            1.0 / (self.alpha * self.g_norm())
        };
        RankOne {
            u: self.g.clone(),
            coef,
        }
    }

    pub fn hess_vec(&self, v: &ParamVector) -> Result<ParamVector> {
        self.hessian().apply(v)
    }

    /// Any minimizer of `R̃`: `z* + α g/‖g‖`.
    pub fn argmin(&self) -> ParamVector {
        if self.is_trivial() {
            return self.z_star.clone();
        }
        &self.z_star + &self.g * (self.alpha / self.g_norm())
    }
}

/// `‖R̃‖` in `L¹` of the Gaussian with mean `z*` and covariance `α²I`,
/// which equals `α‖g‖₂`.
pub fn update_norm(update: &FirstOrderUpdate) -> f64 {
    update.alpha * update.g_norm()
}

/// Whether `H_M + H_R` is positive definite given the generalized
/// eigenvalues of `(H_M, H_R)`: all must exceed −1.
pub fn is_second_order_satisfied(lambda: &[f64]) -> bool {
    lambda.iter().all(|&l| l > -1.0)
}

/// Rank-one shifts `Uᵢ = δᵢ H_R vᵢ vᵢᵀ H_R`, `δᵢ = −1 − λᵢ + ε`, for every
/// eigenvalue `λᵢ ≤ −1`. Recorded only; the sensitivity computation never
/// needs them applied.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SecondOrderShift {
    pub indices: Vec<usize>,
    pub shifts: Vec<f64>,
    pub epsilon: f64,
}

impl SecondOrderShift {
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Dense `Σ Uᵢ`. `vectors` holds the `H_R`-normalized eigenvectors as
    /// columns, aligned with the eigenvalue list the shift was built from.
    pub fn dense_update(&self, hr: &DMatrix<f64>, vectors: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let m = hr.nrows();
        check_dim("second-order shift vectors", m, vectors.nrows())?;
        let mut u = DMatrix::zeros(m, m);
        for (&i, &delta) in self.indices.iter().zip(&self.shifts) {
            if i >= vectors.ncols() {
                return Err(Error::violation(format!("shift index {i} has no eigenvector")));
            }
            let w = hr * vectors.column(i);
            u += &w * w.transpose() * delta;
        }
        Ok(u)
    }

    /// `R̃̃(z) = ½ (z−z*)ᵀ (Σ Uᵢ) (z−z*)`.
    pub fn value(
        &self,
        z: &ParamVector,
        z_star: &ParamVector,
        hr: &DMatrix<f64>,
        vectors: &DMatrix<f64>,
    ) -> Result<f64> {
        let d = z - z_star;
        Ok(0.5 * d.dot(&(self.dense_update(hr, vectors)? * &d)))
    }
}

pub fn second_order_shift(lambda: &[f64], epsilon: f64) -> SecondOrderShift {
    let mut out = SecondOrderShift {
        epsilon,
        ..Default::default()
    };
    for (i, &l) in lambda.iter().enumerate() {
        if l <= -1.0 {
            out.indices.push(i);
            out.shifts.push(-1.0 - l + epsilon);
        }
    }
    out
}
