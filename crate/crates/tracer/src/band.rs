//! Banded matrices with an LU factorization (partial pivoting) that solves
//! with both `A` and `Aᵀ`. The structured mesh numbers nodes row by row, so
//! every operator here has half-bandwidth `n + 2`.

use hdsa::{Error, Result};

/// Square band matrix, row-major band storage. Entry `(i, j)` lives at
/// `i * width + (j + kl - i)` for `-kl ≤ j - i ≤ ku`.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Self {
            n,
            kl,
            ku,
            data: vec![0.0; n * (kl + ku + 1)],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    fn width(&self) -> usize {
        self.kl + self.ku + 1
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        if j + self.kl < i || j > i + self.ku {
            None
        } else {
            Some(i * self.width() + j + self.kl - i)
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.data[s])
    }

    /// Panics if `(i, j)` is outside the band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j).expect("entry outside band");
        self.data[s] += v;
    }

    /// Replaces row and column `i` with the identity row and column.
    pub fn set_identity_row_col(&mut self, i: usize) {
        let lo = i.saturating_sub(self.kl.max(self.ku));
        let hi = (i + self.kl.max(self.ku)).min(self.n - 1);
        for j in lo..=hi {
            if let Some(s) = self.slot(i, j) {
                self.data[s] = 0.0;
            }
            if let Some(s) = self.slot(j, i) {
                self.data[s] = 0.0;
            }
        }
        self.add(i, i, 1.0);
    }

    /// `self += a * other`; band shapes must agree.
    pub fn axpy(&mut self, a: f64, other: &BandMatrix) {
        assert!(self.n == other.n && self.kl == other.kl && self.ku == other.ku);
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += a * y;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (i, yi) in y.iter_mut().enumerate() {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            let row = &self.data[i * self.width()..];
            let mut acc = 0.0;
            for j in lo..=hi {
                acc += row[j + self.kl - i] * x[j];
            }
            *yi = acc;
        }
        y
    }

    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (i, &xi) in x.iter().enumerate() {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            let row = &self.data[i * self.width()..];
            for j in lo..=hi {
                y[j] += row[j + self.kl - i] * xi;
            }
        }
        y
    }

    pub fn factor(&self) -> Result<BandLu> {
        BandLu::new(self)
    }

    #[cfg(test)]
    pub(crate) fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }
}

/// `L U` factors of a band matrix. `U` has upper bandwidth `kl + ku`; the
/// multipliers and row interchanges are kept in elimination order.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    uw: usize,
    u: Vec<f64>,
    l: Vec<f64>,
    piv: Vec<usize>,
}

impl BandLu {
    fn new(a: &BandMatrix) -> Result<Self> {
        let (n, kl) = (a.n, a.kl);
        let uw = kl + a.ku;
        // Working rows cover columns i-kl ..= i+kl+ku.
        let w = 2 * kl + a.ku + 1;
        let at = |i: usize, j: usize| i * w + j + kl - i;
        let mut work = vec![0.0; n * w];
        for i in 0..n {
            let lo = i.saturating_sub(kl);
            let hi = (i + a.ku).min(n - 1);
            for j in lo..=hi {
                work[at(i, j)] = a.get(i, j);
            }
        }
        let mut l = vec![0.0; n * kl];
        let mut piv = vec![0; n];
        let mut u = vec![0.0; n * (uw + 1)];
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            for i in k + 1..=last {
                if work[at(i, k)].abs() > work[at(p, k)].abs() {
                    p = i;
                }
            }
            let pivot = work[at(p, k)];
            if !pivot.is_finite() || pivot == 0.0 {
                return Err(Error::model(
                    "band factorization",
                    format!("singular matrix at row {k} (pivot {pivot:e})"),
                ));
            }
            piv[k] = p;
            let jmax = (k + uw).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    work.swap(at(k, j), at(p, j));
                }
            }
            let d = work[at(k, k)];
            for i in k + 1..=last {
                let m = work[at(i, k)] / d;
                l[k * kl + (i - k - 1)] = m;
                if m != 0.0 {
                    for j in k + 1..=jmax {
                        work[at(i, j)] -= m * work[at(k, j)];
                    }
                }
            }
            for j in k..=jmax {
                u[k * (uw + 1) + (j - k)] = work[at(k, j)];
            }
        }
        Ok(Self { n, kl, uw, u, l, piv })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, kl, uw) = (self.n, self.kl, self.uw);
        for k in 0..n {
            b.swap(k, self.piv[k]);
            let bk = b[k];
            if bk != 0.0 {
                for t in 0..kl.min(n - 1 - k) {
                    b[k + 1 + t] -= self.l[k * kl + t] * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let row = &self.u[k * (uw + 1)..(k + 1) * (uw + 1)];
            let mut acc = b[k];
            for t in 1..=uw.min(n - 1 - k) {
                acc -= row[t] * b[k + t];
            }
            b[k] = acc / row[0];
        }
    }

    /// Solves `Aᵀ x = b` in place.
    pub fn solve_transpose_in_place(&self, b: &mut [f64]) {
        let (n, kl, uw) = (self.n, self.kl, self.uw);
        for k in 0..n {
            let mut acc = b[k];
            for i in k.saturating_sub(uw)..k {
                acc -= self.u[i * (uw + 1) + (k - i)] * b[i];
            }
            b[k] = acc / self.u[k * (uw + 1)];
        }
        for k in (0..n).rev() {
            let mut acc = b[k];
            for t in 0..kl.min(n - 1 - k) {
                acc -= self.l[k * kl + t] * b[k + 1 + t];
            }
            b[k] = acc;
            b.swap(k, self.piv[k]);
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_transpose_in_place(&mut x);
        x
    }
}
