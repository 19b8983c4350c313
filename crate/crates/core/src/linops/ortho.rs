use nalgebra::{DMatrix, DVector};

use super::LinearOperator;
use crate::error::{check_dim, Result};

/// Relative B-norm below which a column is considered linearly dependent on
/// the ones before it.
pub const DROP_TOL: f64 = 1e-10;

/// A block `Q` with `Qᵀ B Q = I`, together with `B Q`.
#[derive(Debug, Clone)]
pub struct BOrthoBasis {
    pub q: DMatrix<f64>,
    pub bq: DMatrix<f64>,
}

/// Result of extending a basis with new columns.
#[derive(Debug, Clone, Default)]
pub struct Extension {
    /// Indices (into the new block) of columns that were appended.
    pub kept: Vec<usize>,
    /// Indices of columns dropped as numerically dependent.
    pub dropped: Vec<usize>,
}

impl BOrthoBasis {
    pub fn empty(dim: usize) -> Self {
        Self {
            q: DMatrix::zeros(dim, 0),
            bq: DMatrix::zeros(dim, 0),
        }
    }

    pub fn len(&self) -> usize {
        self.q.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.q.ncols() == 0
    }

    /// Appends the columns of `y`, B-orthogonalized against the current basis
    /// and each other. Each column is projected twice (classical Gram-Schmidt
    /// with one re-orthogonalization pass) using the stored `B Q`; `bop` is
    /// applied twice per column and never to the existing basis.
    pub fn extend(&mut self, y: &DMatrix<f64>, bop: &dyn LinearOperator) -> Result<Extension> {
        check_dim("b_orthonormalize rows", self.q.nrows(), y.nrows())?;
        let mut ext = Extension::default();
        for j in 0..y.ncols() {
            let mut w: DVector<f64> = y.column(j).into_owned();
            let by = bop.apply(&w)?;
            let before = w.dot(&by).max(0.0).sqrt();
            if before == 0.0 || !before.is_finite() {
                ext.dropped.push(j);
                continue;
            }
            for _pass in 0..2 {
                if self.q.ncols() > 0 {
                    let coeff = self.bq.tr_mul(&w);
                    w -= &self.q * coeff;
                }
            }
            let bw = bop.apply(&w)?;
            let after = w.dot(&bw).max(0.0).sqrt();
            if after <= DROP_TOL * before {
                log::debug!("dropping dependent sketch column {j} (relative norm {:.2e})", after / before);
                ext.dropped.push(j);
                continue;
            }
            let k = self.q.ncols();
            self.q = self.q.clone().insert_column(k, 0.0);
            self.bq = self.bq.clone().insert_column(k, 0.0);
            self.q.set_column(k, &(w / after));
            self.bq.set_column(k, &(bw / after));
            ext.kept.push(j);
        }
        Ok(ext)
    }
}

/// B-orthonormalizes the columns of `y`: returns `Q` with
/// `span(Q) = span(Y)` and `QᵀBQ = I`, dropping dependent columns.
pub fn b_orthonormalize(y: &DMatrix<f64>, bop: &dyn LinearOperator) -> Result<(BOrthoBasis, Extension)> {
    check_dim("b_orthonormalize operator", bop.dim_in(), y.nrows())?;
    let mut basis = BOrthoBasis::empty(y.nrows());
    let ext = basis.extend(y, bop)?;
    if !ext.dropped.is_empty() {
        log::warn!(
            "b_orthonormalize: dropped {} of {} columns as numerically dependent",
            ext.dropped.len(),
            y.ncols()
        );
    }
    Ok((basis, ext))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::Identity;
    use nalgebra::dmatrix;

    #[test]
    fn identity_block_is_unchanged() {
        let y = DMatrix::identity(2, 2);
        let (b, ext) = b_orthonormalize(&y, &Identity(2)).unwrap();
        assert_eq!(ext.kept, vec![0, 1]);
        assert!((b.q - y).norm() < 1e-15);
    }

    #[test]
    fn skewed_pair_becomes_orthonormal() {
        let y = dmatrix![1.0, 1.0; 0.0, 1.0];
        let (b, _) = b_orthonormalize(&y, &Identity(2)).unwrap();
        let gram = b.q.transpose() * &b.q;
        assert!((gram - DMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn duplicated_column_is_dropped() {
        let y = dmatrix![1.0, 2.0, 1.0; 0.5, 0.0, 0.5; 3.0, 1.0, 3.0];
        let (b, ext) = b_orthonormalize(&y, &Identity(3)).unwrap();
        assert_eq!(b.len(), 2);
        assert_eq!(ext.dropped, vec![2]);
    }
}
