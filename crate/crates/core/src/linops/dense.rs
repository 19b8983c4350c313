use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigendecomposition `T = S Λ Sᵀ` of a small symmetric matrix, eigenvalues
/// in descending order.
#[derive(Debug, Clone)]
pub struct DensePair {
    pub t: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub lambda: DVector<f64>,
}

impl DensePair {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.s * DMatrix::from_diagonal(&self.lambda) * self.s.transpose()
    }
}

/// Largest `|T_ij - T_ji|` relative to `max |T_ij|` (0 for the zero matrix).
pub fn relative_skew(t: &DMatrix<f64>) -> f64 {
    let scale = t.amax();
    if scale == 0.0 {
        return 0.0;
    }
    (t - t.transpose()).amax() / scale
}

pub fn dense_sym_eig(t: &DMatrix<f64>) -> Result<DensePair> {
    if !t.is_square() {
        return Err(Error::violation(format!(
            "dense_sym_eig expects a square matrix, got {}x{}",
            t.nrows(),
            t.ncols()
        )));
    }
    let skew = relative_skew(t);
    if skew > 1e-12 {
        return Err(Error::violation(format!(
            "dense_sym_eig input is not symmetric (relative skew {skew:.2e})"
        )));
    }
    let r = t.nrows();
    if r == 0 {
        return Ok(DensePair {
            t: t.clone(),
            s: DMatrix::zeros(0, 0),
            lambda: DVector::zeros(0),
        });
    }
    let sym = (t + t.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lambda = DVector::from_iterator(r, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut s = DMatrix::zeros(r, r);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        // Fix the sign so the largest-magnitude entry is positive.
        let pivot = col.iamax();
        if col[pivot] < 0.0 {
            col = -col;
        }
        s.set_column(dst, &col);
    }
    Ok(DensePair {
        t: t.clone(),
        s,
        lambda,
    })
}

/// Dense generalized eigenproblem `A v = λ B v` for symmetric `A` and SPD
/// `B`. Eigenvalues descending; eigenvectors are the columns of `V` with
/// `Vᵀ B V = I`.
pub fn dense_gevp(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let chol = Cholesky::new(b.clone())
        .ok_or_else(|| Error::violation("dense_gevp: B is not positive definite"))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::violation("dense_gevp: singular Cholesky factor"))?;
    let c = &linv * a * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let pair = dense_sym_eig(&c)?;
    Ok((pair.lambda, linv.transpose() * pair.s))
}
