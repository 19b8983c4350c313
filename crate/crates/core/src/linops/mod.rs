//! Vector and operator substrate: metric-weighted inner products, the
//! matrix-free operator contract, CG solves, B-orthonormalization and small
//! dense eigendecompositions.

mod cg;
pub mod csv;
mod dense;
mod operator;
mod ortho;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

pub use cg::{cg_solve, pcg_solve, CgInverse, CgOutcome, DEFAULT_CG_TOL};
pub use dense::{dense_gevp, dense_sym_eig, relative_skew, DensePair};
pub use operator::{
    apply_columns, materialize, Counting, Diagonal, FnOperator, Identity, LinearOperator, RankOne,
    Scaled, Sum, DENSE_CAP,
};
pub use ortho::{b_orthonormalize, BOrthoBasis, Extension, DROP_TOL};

use crate::error::{check_dim, Result};

/// Discretized inversion parameter `z ∈ ℝᵐ`.
pub type ParamVector = DVector<f64>;
/// Discretized auxiliary parameter `θ ∈ ℝⁿ`.
pub type AuxVector = DVector<f64>;

/// `uᵀ W v` for an SPD metric `W`.
pub fn weighted_inner(u: &DVector<f64>, v: &DVector<f64>, w: &dyn LinearOperator) -> Result<f64> {
    check_dim("weighted_inner", u.len(), v.len())?;
    check_dim("weighted_inner metric", w.dim_in(), v.len())?;
    Ok(u.dot(&w.apply(v)?))
}

pub fn weighted_norm(v: &DVector<f64>, w: &dyn LinearOperator) -> Result<f64> {
    Ok(weighted_inner(v, v, w)?.max(0.0).sqrt())
}

/// Matrix of i.i.d. standard normal entries.
pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vector<R: Rng + ?Sized>(len: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

/// Largest `|⟨Av,w⟩ − ⟨v,Aw⟩| / (‖v‖‖w‖)` over `trials` random pairs.
pub fn symmetry_defect<R: Rng + ?Sized>(
    op: &dyn LinearOperator,
    trials: usize,
    rng: &mut R,
) -> Result<f64> {
    let n = op.dim_in();
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let v = gaussian_vector(n, rng);
        let w = gaussian_vector(n, rng);
        let lhs = op.apply(&v)?.dot(&w);
        let rhs = v.dot(&op.apply(&w)?);
        worst = worst.max((lhs - rhs).abs() / (v.norm() * w.norm()));
    }
    Ok(worst)
}

/// Largest `‖A(au+bv) − aAu − bAv‖ / (|a|‖Au‖ + |b|‖Av‖)` over random probes.
pub fn linearity_defect<R: Rng + ?Sized>(
    op: &dyn LinearOperator,
    trials: usize,
    rng: &mut R,
) -> Result<f64> {
    let n = op.dim_in();
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let u = gaussian_vector(n, rng);
        let v = gaussian_vector(n, rng);
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        let au = op.apply(&u)?;
        let av = op.apply(&v)?;
        let combo = op.apply(&(&u * a + &v * b))?;
        let scale = a.abs() * au.norm() + b.abs() * av.norm();
        if scale > 0.0 {
            worst = worst.max((combo - au * a - av * b).norm() / scale);
        }
    }
    Ok(worst)
}
