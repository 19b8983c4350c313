//! The inverse-problem contract.
//!
//! A problem minimizes `J(z; θ) = M(z, θ) + R(z)` over `z` with the
//! auxiliary parameters `θ` held fixed. Everything downstream only needs
//! derivative information at one point `(z*, θ̄)`, which a problem exposes
//! through [`InverseProblem::linearize`]: PDE-backed models solve the state
//! and adjoint equations once there and reuse them for every Hessian-vector
//! product and mixed-Jacobian column.

mod quadratic;

pub use quadratic::{
    MatrixSource, QuadraticConfig, QuadraticModel, QuadraticSetup, RandomQuadratic, VectorSource,
};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linops::{AuxVector, LinearOperator, ParamVector};

/// Name of one auxiliary parameter, grouped by the physical quantity it
/// perturbs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuxLabel {
    pub group: String,
    pub index: usize,
}

impl AuxLabel {
    pub fn new(group: impl Into<String>, index: usize) -> Self {
        Self {
            group: group.into(),
            index,
        }
    }
}

impl std::fmt::Display for AuxLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}[{}]", self.group, self.index)
    }
}

/// Derivative information of `J` frozen at one `(z, θ)`.
pub trait Linearization: Send + Sync {
    fn dim_z(&self) -> usize;
    fn dim_theta(&self) -> usize;
    fn objective(&self) -> f64;
    /// `∇_z J(z; θ)`.
    fn gradient(&self) -> &ParamVector;
    /// `H_M v`, the misfit Hessian applied to `v`.
    fn hess_misfit_vec(&self, v: &ParamVector) -> Result<ParamVector>;
    /// `H_R v`, the regularization Hessian applied to `v`.
    fn hess_reg_vec(&self, v: &ParamVector) -> Result<ParamVector>;
    /// `B eᵢ` with `B = ∇_{z,θ} J`.
    fn mixed_jacobian_col(&self, i: usize) -> Result<ParamVector>;

    fn hess_vec(&self, v: &ParamVector) -> Result<ParamVector> {
        Ok(self.hess_misfit_vec(v)? + self.hess_reg_vec(v)?)
    }
}

pub trait InverseProblem: Send + Sync {
    fn dim_z(&self) -> usize;
    fn dim_theta(&self) -> usize;
    fn objective(&self, z: &ParamVector, theta: &AuxVector) -> Result<f64>;
    fn linearize(&self, z: &ParamVector, theta: &AuxVector) -> Result<Box<dyn Linearization + '_>>;
    /// The SPD metric `W_z` used to measure changes in `z`.
    fn metric(&self) -> &dyn LinearOperator;

    /// Exact inverse of the regularization Hessian, when cheaply available.
    /// Used to precondition solves with `H_R + H_R̃`.
    fn reg_hessian_inverse(&self) -> Option<&dyn LinearOperator> {
        None
    }

    fn aux_labels(&self) -> Vec<AuxLabel> {
        (0..self.dim_theta()).map(|i| AuxLabel::new("theta", i)).collect()
    }

    fn gradient_z(&self, z: &ParamVector, theta: &AuxVector) -> Result<ParamVector> {
        Ok(self.linearize(z, theta)?.gradient().clone())
    }

    fn hess_misfit_vec(&self, z: &ParamVector, theta: &AuxVector, v: &ParamVector) -> Result<ParamVector> {
        self.linearize(z, theta)?.hess_misfit_vec(v)
    }

    fn hess_reg_vec(&self, z: &ParamVector, v: &ParamVector) -> Result<ParamVector> {
        let theta = DVector::zeros(self.dim_theta());
        self.linearize(z, &theta)?.hess_reg_vec(v)
    }

    fn mixed_jacobian_col(&self, z: &ParamVector, theta: &AuxVector, i: usize) -> Result<ParamVector> {
        if i >= self.dim_theta() {
            return Err(Error::violation(format!(
                "auxiliary index {i} out of range (n = {})",
                self.dim_theta()
            )));
        }
        self.linearize(z, theta)?.mixed_jacobian_col(i)
    }
}

pub(crate) fn check_point(p: &dyn InverseProblem, z: &ParamVector, theta: &AuxVector) -> Result<()> {
    check_dim("z", p.dim_z(), z.len())?;
    check_dim("theta", p.dim_theta(), theta.len())
}

/// `H_M` of a linearization as an operator.
pub struct MisfitHessian<'a>(pub &'a dyn Linearization);
/// `H_R` of a linearization as an operator.
pub struct RegHessian<'a>(pub &'a dyn Linearization);
/// `H = H_M + H_R` of a linearization as an operator.
pub struct FullHessian<'a>(pub &'a dyn Linearization);

macro_rules! hessian_operator {
    ($ty:ident, $method:ident) => {
        impl LinearOperator for $ty<'_> {
            fn dim_in(&self) -> usize {
                self.0.dim_z()
            }
            fn dim_out(&self) -> usize {
                self.0.dim_z()
            }
            fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
                check_dim(stringify!($ty), self.0.dim_z(), x.len())?;
                self.0.$method(x)
            }
        }
    };
}

hessian_operator!(MisfitHessian, hess_misfit_vec);
hessian_operator!(RegHessian, hess_reg_vec);
hessian_operator!(FullHessian, hess_vec);

/// Central-difference derivative checks against a problem's analytic
/// derivatives. Each returns the relative error
/// `|analytic − fd| / max(|analytic|, |fd|, floor)`.
pub mod fd {
    use super::*;

    /// Directional derivative of the objective along `dir` vs `⟨∇J, dir⟩`.
    pub fn gradient_check(
        p: &dyn InverseProblem,
        z: &ParamVector,
        theta: &AuxVector,
        dir: &ParamVector,
        h: f64,
    ) -> Result<f64> {
        let g = p.gradient_z(z, theta)?;
        let fp = p.objective(&(z + dir * h), theta)?;
        let fm = p.objective(&(z - dir * h), theta)?;
        let fd = (fp - fm) / (2.0 * h);
        let an = g.dot(dir);
        Ok((an - fd).abs() / an.abs().max(fd.abs()).max(1e-300))
    }

    /// `H_M v` vs the central difference of the gradient along `v`, with the
    /// regularization Hessian removed from the difference.
    pub fn hessian_check(
        p: &dyn InverseProblem,
        z: &ParamVector,
        theta: &AuxVector,
        v: &ParamVector,
        h: f64,
    ) -> Result<f64> {
        let lin = p.linearize(z, theta)?;
        let hv = lin.hess_misfit_vec(v)?;
        let gp = p.gradient_z(&(z + v * h), theta)?;
        let gm = p.gradient_z(&(z - v * h), theta)?;
        let fd = (gp - gm) / (2.0 * h) - lin.hess_reg_vec(v)?;
        Ok((&hv - &fd).norm() / hv.norm().max(fd.norm()).max(1e-300))
    }

    /// `B eᵢ` vs `(∇_z J(z, θ+h eᵢ) − ∇_z J(z, θ−h eᵢ)) / 2h` with
    /// `h = rel_step·(1 + |θᵢ|)`.
    pub fn mixed_check(
        p: &dyn InverseProblem,
        z: &ParamVector,
        theta: &AuxVector,
        i: usize,
        rel_step: f64,
    ) -> Result<f64> {
        let col = p.mixed_jacobian_col(z, theta, i)?;
        let h = rel_step * (1.0 + theta[i].abs());
        let mut tp = theta.clone();
        tp[i] += h;
        let mut tm = theta.clone();
        tm[i] -= h;
        let fd = (p.gradient_z(z, &tp)? - p.gradient_z(z, &tm)?) / (2.0 * h);
        Ok((&col - &fd).norm() / col.norm().max(fd.norm()).max(1e-300))
    }
}
