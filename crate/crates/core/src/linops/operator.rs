use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};

/// Matrix-free linear map `x -> A x`.
///
/// Implementations must be reentrant: `apply` may be called concurrently
/// from several threads on distinct inputs.
pub trait LinearOperator: Send + Sync {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>>;
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn dim_in(&self) -> usize {
        (**self).dim_in()
    }
    fn dim_out(&self) -> usize {
        (**self).dim_out()
    }
    fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        (**self).apply(x)
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for Box<T> {
    fn dim_in(&self) -> usize {
        (**self).dim_in()
    }
    fn dim_out(&self) -> usize {
        (**self).dim_out()
    }
    fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        (**self).apply(x)
    }
}

impl LinearOperator for DMatrix<f64> {
    fn dim_in(&self) -> usize {
        self.ncols()
    }
    fn dim_out(&self) -> usize {
        self.nrows()
    }
    fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("dense operator apply", self.ncols(), x.len())?;
        Ok(self * x)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Identity(pub usize);

impl LinearOperator for Identity {
    fn dim_in(&self) -> usize {
        self.0
    }
    fn dim_out(&self) -> usize {
        self.0
    }
    fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("identity apply", self.0, x.len())?;
        Ok(x.clone())
    }
}

#[derive(Debug, Clone)]
pub struct Diagonal(pub DVector<f64>);

impl LinearOperator for Diagonal {
    fn dim_in(&self) -> usize {
        self.0.len()
    }
    fn dim_out(&self) -> usize {
        self.0.len()
    }
    fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("diagonal apply", self.0.len(), x.len())?;
        Ok(self.0.component_mul(x))
    }
}

/// Operator backed by a closure.
pub struct FnOperator<F> {
    dim_in: usize,
    dim_out: usize,
    f: F,
}

impl<F> FnOperator<F>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>> + Send + Sync,
{
    pub fn new(dim_in: usize, dim_out: usize, f: F) -> Self {
        Self { dim_in, dim_out, f }
    }

    pub fn square(dim: usize, f: F) -> Self {
        Self::new(dim, dim, f)
    }
}

impl<F> LinearOperator for FnOperator<F>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>> + Send + Sync,
{
    fn dim_in(&self) -> usize {
        self.dim_in
    }
    fn dim_out(&self) -> usize {
        self.dim_out
    }
    fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("operator apply", self.dim_in, x.len())?;
        let y = (self.f)(x)?;
        check_dim("operator output", self.dim_out, y.len())?;
        Ok(y)
    }
}

/// `A + B`.
pub struct Sum<A, B>(pub A, pub B);

impl<A: LinearOperator, B: LinearOperator> LinearOperator for Sum<A, B> {
    fn dim_in(&self) -> usize {
        self.0.dim_in()
    }
    fn dim_out(&self) -> usize {
        self.0.dim_out()
    }
    fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("sum operator", self.0.dim_in(), self.1.dim_in())?;
        Ok(self.0.apply(x)? + self.1.apply(x)?)
    }
}

/// `coef * A`.
pub struct Scaled<A>(pub f64, pub A);

impl<A: LinearOperator> LinearOperator for Scaled<A> {
    fn dim_in(&self) -> usize {
        self.1.dim_in()
    }
    fn dim_out(&self) -> usize {
        self.1.dim_out()
    }
    fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.1.apply(x)? * self.0)
    }
}

/// Symmetric rank-one map `x -> coef * u (u^T x)`.
#[derive(Debug, Clone)]
pub struct RankOne {
    pub u: DVector<f64>,
    pub coef: f64,
}

impl LinearOperator for RankOne {
    fn dim_in(&self) -> usize {
        self.u.len()
    }
    fn dim_out(&self) -> usize {
        self.u.len()
    }
    fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("rank-one apply", self.u.len(), x.len())?;
        Ok(&self.u * (self.coef * self.u.dot(x)))
    }
}

/// Wraps an operator and counts how many times it was applied.
pub struct Counting<A> {
    inner: A,
    count: AtomicUsize,
}

impl<A> Counting<A> {
    pub fn new(inner: A) -> Self {
        Self {
            inner,
            count: AtomicUsize::new(0),
        }
    }

    pub fn count(&self) -> usize {
        self.count.load(Ordering::SeqCst)
    }

    pub fn into_inner(self) -> A {
        self.inner
    }
}

impl<A: LinearOperator> LinearOperator for Counting<A> {
    fn dim_in(&self) -> usize {
        self.inner.dim_in()
    }
    fn dim_out(&self) -> usize {
        self.inner.dim_out()
    }
    fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.count.fetch_add(1, Ordering::SeqCst);
        self.inner.apply(x)
    }
}

/// Applies `op` to every column of `x`. Columns are processed in parallel;
/// the result is identical to a sequential sweep.
pub fn apply_columns(op: &dyn LinearOperator, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_dim("apply_columns", op.dim_in(), x.nrows())?;
    let cols: Vec<DVector<f64>> = (0..x.ncols())
        .into_par_iter()
        .map(|j| op.apply(&x.column(j).into_owned()))
        .collect::<Result<_>>()?;
    if cols.is_empty() {
        return Ok(DMatrix::zeros(op.dim_out(), 0));
    }
    Ok(DMatrix::from_columns(&cols))
}

/// Default size cap for dense materialization of matrix-free operators.
pub const DENSE_CAP: usize = 512;

/// Builds the dense matrix of `op` column by column. Refuses operators
/// larger than `cap` in either dimension.
pub fn materialize(op: &dyn LinearOperator, cap: usize) -> Result<DMatrix<f64>> {
    if op.dim_in() > cap || op.dim_out() > cap {
        return Err(Error::violation(format!(
            "refusing to materialize a {}x{} operator (cap {cap})",
            op.dim_out(),
            op.dim_in()
        )));
    }
    apply_columns(op, &DMatrix::identity(op.dim_in(), op.dim_in()))
}
