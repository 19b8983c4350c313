use nalgebra::DVector;

use super::LinearOperator;
use crate::error::{check_dim, Error, Result};

/// Default relative tolerance for inner solves.
pub const DEFAULT_CG_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: DVector<f64>,
    pub iterations: usize,
    /// Final `‖b − A x‖₂ / ‖b‖₂`.
    pub residual: f64,
}

/// Conjugate gradients for SPD `a`, stopping once `‖Ax−b‖₂ ≤ tol·‖b‖₂`.
pub fn cg_solve(
    a: &dyn LinearOperator,
    b: &DVector<f64>,
    tol: f64,
    maxit: usize,
) -> Result<CgOutcome> {
    pcg_solve(a, b, None, tol, maxit)
}

/// Preconditioned CG. `precond` applies an SPD approximation of `a⁻¹`.
/// The stopping test is on the true (unpreconditioned) residual.
pub fn pcg_solve(
    a: &dyn LinearOperator,
    b: &DVector<f64>,
    precond: Option<&dyn LinearOperator>,
    tol: f64,
    maxit: usize,
) -> Result<CgOutcome> {
    check_dim("cg rhs", a.dim_out(), b.len())?;
    let n = b.len();
    let bnorm = b.norm();
    let mut x = DVector::zeros(n);
    if bnorm == 0.0 {
        return Ok(CgOutcome {
            x,
            iterations: 0,
            residual: 0.0,
        });
    }
    let mut r = b.clone();
    let precondition = |r: &DVector<f64>| -> Result<DVector<f64>> {
        match precond {
            Some(m) => m.apply(r),
            None => Ok(r.clone()),
        }
    };
    let mut z = precondition(&r)?;
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    let mut rel = 1.0;

    for it in 0..maxit {
        let ap = a.apply(&p)?;
        let pap = p.dot(&ap);
        if !(pap > 0.0) {
            return Err(Error::violation(format!(
                "CG encountered non-positive curvature {pap:.3e} at iteration {it}"
            )));
        }
        let step = rz / pap;
        x.axpy(step, &p, 1.0);
        r.axpy(-step, &ap, 1.0);
        rel = r.norm() / bnorm;
        if rel <= tol {
            return Ok(CgOutcome {
                x,
                iterations: it + 1,
                residual: rel,
            });
        }
        z = precondition(&r)?;
        let rz_new = r.dot(&z);
        p = &z + &p * (rz_new / rz);
        rz = rz_new;
    }
    Err(Error::NotConverged {
        iterations: maxit,
        residual: rel,
    })
}

/// The inverse of an SPD operator, applied by (preconditioned) CG.
pub struct CgInverse<'a> {
    pub op: &'a dyn LinearOperator,
    pub precond: Option<&'a dyn LinearOperator>,
    pub tol: f64,
    pub maxit: usize,
}

impl<'a> CgInverse<'a> {
    pub fn new(op: &'a dyn LinearOperator) -> Self {
        Self {
            op,
            precond: None,
            tol: DEFAULT_CG_TOL,
            maxit: 10 * op.dim_in().max(10),
        }
    }

    pub fn with_preconditioner(mut self, precond: &'a dyn LinearOperator) -> Self {
        self.precond = Some(precond);
        self
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }
}

impl LinearOperator for CgInverse<'_> {
    fn dim_in(&self) -> usize {
        self.op.dim_out()
    }
    fn dim_out(&self) -> usize {
        self.op.dim_in()
    }
    fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(pcg_solve(self.op, x, self.precond, self.tol, self.maxit)?.x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::{Diagonal, Identity};
    use nalgebra::{dvector, DMatrix};

    #[test]
    fn identity_converges_in_one_iteration() {
        let b = dvector![0.3, -1.0, 2.5];
        let out = cg_solve(&Identity(3), &b, 1e-12, 10).unwrap();
        assert!(out.iterations <= 1);
        assert!((out.x - b).norm() < 1e-14);
    }

    #[test]
    fn diagonal_system() {
        let a = Diagonal(dvector![1.0, 2.0, 4.0]);
        let out = cg_solve(&a, &dvector![1.0, 2.0, 4.0], 1e-12, 10).unwrap();
        assert!((out.x - dvector![1.0, 1.0, 1.0]).norm() < 1e-12);
    }

    #[test]
    fn ill_conditioned_system_reports_failure_with_residual() {
        let n = 50;
        let d = DVector::from_fn(n, |i, _| 10f64.powf(8.0 * i as f64 / (n - 1) as f64));
        let b = DVector::from_element(n, 1.0);
        match cg_solve(&Diagonal(d), &b, 1e-10, 5) {
            Err(Error::NotConverged {
                iterations,
                residual,
            }) => {
                assert_eq!(iterations, 5);
                assert!(residual > 1e-10);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn preconditioned_solve_matches_dense() {
        let m = DMatrix::from_fn(6, 6, |i, j| 1.0 / (1.0 + i as f64 + j as f64));
        let a = &m * m.transpose() + DMatrix::identity(6, 6) * 0.5;
        let b = DVector::from_fn(6, |i, _| (i as f64).sin());
        let exact = a.clone().cholesky().unwrap().solve(&b);
        let jacobi = Diagonal(a.diagonal().map(|d| 1.0 / d));
        let out = pcg_solve(&a, &b, Some(&jacobi), 1e-12, 100).unwrap();
        assert!((out.x - exact).norm() <= 1e-9 * b.norm());
    }
}
