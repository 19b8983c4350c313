//! Uniform quadrilateral mesh of the unit square with bilinear elements.
//!
//! Nodes are numbered `k = j (n+1) + i` for the node at `(i h, j h)`.
//! Element `(i, j)` has local nodes `[k, k+1, k+n+1, k+n+2]`.

use serde::{Deserialize, Serialize};

use crate::band::BandMatrix;
use hdsa::{Error, Result};

const GAUSS: [f64; 2] = [0.211_324_865_405_187_1, 0.788_675_134_594_812_9];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mesh {
    pub n: usize,
}

/// Shape functions and physical gradients at the 2×2 Gauss points of one
/// element, plus the same on its left (`x = x_e`) and right (`x = x_e + h`)
/// edges, which carry the outflow terms on the Dirichlet sides.
#[derive(Debug, Clone)]
pub struct Quadrature {
    pub n: [[f64; 4]; 4],
    pub dx: [[f64; 4]; 4],
    pub dy: [[f64; 4]; 4],
    pub w: f64,
    /// Indexed `[side][point]` with side 0 left, 1 right.
    pub edge_n: [[[f64; 4]; 2]; 2],
    pub edge_dx: [[[f64; 4]; 2]; 2],
    pub edge_w: f64,
}

fn shape(xi: f64, eta: f64) -> [f64; 4] {
    [
        (1.0 - xi) * (1.0 - eta),
        xi * (1.0 - eta),
        (1.0 - xi) * eta,
        xi * eta,
    ]
}

fn shape_dxi(eta: f64) -> [f64; 4] {
    [-(1.0 - eta), 1.0 - eta, -eta, eta]
}

fn shape_deta(xi: f64) -> [f64; 4] {
    [-(1.0 - xi), -xi, 1.0 - xi, xi]
}

impl Mesh {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config(format!("mesh needs at least 2 cells per side, got {n}")));
        }
        Ok(Self { n })
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn num_nodes(&self) -> usize {
        (self.n + 1) * (self.n + 1)
    }

    pub fn num_elements(&self) -> usize {
        self.n * self.n
    }

    pub fn node(&self, i: usize, j: usize) -> usize {
        j * (self.n + 1) + i
    }

    pub fn coords(&self, k: usize) -> (f64, f64) {
        let i = k % (self.n + 1);
        let j = k / (self.n + 1);
        (i as f64 * self.h(), j as f64 * self.h())
    }

    pub fn element_nodes(&self, e: usize) -> [usize; 4] {
        let (i, j) = (e % self.n, e / self.n);
        let k = self.node(i, j);
        [k, k + 1, k + self.n + 1, k + self.n + 2]
    }

    /// Half-bandwidth of every nodal operator.
    pub fn bandwidth(&self) -> usize {
        self.n + 2
    }

    pub fn band_zeros(&self) -> BandMatrix {
        BandMatrix::zeros(self.num_nodes(), self.bandwidth(), self.bandwidth())
    }

    /// Nodes on `x = 0` (bottom to top).
    pub fn left_nodes(&self) -> Vec<usize> {
        (0..=self.n).map(|j| self.node(0, j)).collect()
    }

    /// Nodes on `x = 1` (bottom to top).
    pub fn right_nodes(&self) -> Vec<usize> {
        (0..=self.n).map(|j| self.node(self.n, j)).collect()
    }

    pub fn quadrature(&self) -> Quadrature {
        let h = self.h();
        let mut q = Quadrature {
            n: [[0.0; 4]; 4],
            dx: [[0.0; 4]; 4],
            dy: [[0.0; 4]; 4],
            w: 0.25 * h * h,
            edge_n: [[[0.0; 4]; 2]; 2],
            edge_dx: [[[0.0; 4]; 2]; 2],
            edge_w: 0.5 * h,
        };
        for (qi, &eta) in GAUSS.iter().enumerate() {
            for (qj, &xi) in GAUSS.iter().enumerate() {
                let p = 2 * qi + qj;
                q.n[p] = shape(xi, eta);
                q.dx[p] = shape_dxi(eta).map(|v| v / h);
                q.dy[p] = shape_deta(xi).map(|v| v / h);
            }
            for (side, xi) in [0.0, 1.0].into_iter().enumerate() {
                q.edge_n[side][qi] = shape(xi, eta);
                q.edge_dx[side][qi] = shape_dxi(eta).map(|v| v / h);
            }
        }
        q
    }

    pub fn mass_matrix(&self) -> BandMatrix {
        self.assemble(|q, p, a, b| q.n[p][a] * q.n[p][b])
    }

    /// `∫ ∇Nₐ·∇N_b`.
    pub fn stiffness_matrix(&self) -> BandMatrix {
        self.assemble(|q, p, a, b| q.dx[p][a] * q.dx[p][b] + q.dy[p][a] * q.dy[p][b])
    }

    fn assemble(&self, f: impl Fn(&Quadrature, usize, usize, usize) -> f64) -> BandMatrix {
        let q = self.quadrature();
        let mut m = self.band_zeros();
        for e in 0..self.num_elements() {
            let nodes = self.element_nodes(e);
            for p in 0..4 {
                for a in 0..4 {
                    for b in 0..4 {
                        m.add(nodes[a], nodes[b], q.w * f(&q, p, a, b));
                    }
                }
            }
        }
        m
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        (0..self.num_nodes())
            .map(|k| {
                let (x, y) = self.coords(k);
                f(x, y)
            })
            .collect()
    }

    /// Bilinear interpolation weights of the point `(x, y)`.
    pub fn locate(&self, x: f64, y: f64) -> Result<[(usize, f64); 4]> {
        if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
            return Err(Error::Config(format!("point ({x}, {y}) is outside the unit square")));
        }
        let n = self.n as f64;
        let i = ((x * n).floor() as usize).min(self.n - 1);
        let j = ((y * n).floor() as usize).min(self.n - 1);
        let xi = x * n - i as f64;
        let eta = y * n - j as f64;
        let nodes = self.element_nodes(j * self.n + i);
        let w = shape(xi, eta);
        Ok([(nodes[0], w[0]), (nodes[1], w[1]), (nodes[2], w[2]), (nodes[3], w[3])])
    }
}

/// Point evaluation of nodal fields at a list of sensor locations.
#[derive(Debug, Clone)]
pub struct PointObserver {
    rows: Vec<[(usize, f64); 4]>,
    num_nodes: usize,
}

impl PointObserver {
    pub fn new(mesh: &Mesh, points: &[[f64; 2]]) -> Result<Self> {
        let rows = points
            .iter()
            .map(|p| mesh.locate(p[0], p[1]))
            .collect::<Result<_>>()?;
        Ok(Self {
            rows,
            num_nodes: mesh.num_nodes(),
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|&(k, w)| w * u[k]).sum())
            .collect()
    }

    /// `out += scale · Oᵀ r`.
    pub fn add_transpose(&self, r: &[f64], scale: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.num_nodes);
        for (row, &ri) in self.rows.iter().zip(r) {
            for &(k, w) in row {
                out[k] += scale * w * ri;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mass_integrates_constants() {
        let mesh = Mesh::new(5).unwrap();
        let m = mesh.mass_matrix();
        let one = vec![1.0; mesh.num_nodes()];
        let total: f64 = m.matvec(&one).iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
        let x = mesh.interpolate(|x, _| x);
        let mx: f64 = one.iter().zip(m.matvec(&x)).map(|(a, b)| a * b).sum();
        assert!((mx - 0.5).abs() < 1e-14);
    }

    #[test]
    fn stiffness_energy_of_linear_field() {
        let mesh = Mesh::new(4).unwrap();
        let k = mesh.stiffness_matrix();
        let u = mesh.interpolate(|x, y| 2.0 * x - y);
        let ku = k.matvec(&u);
        let energy: f64 = u.iter().zip(&ku).map(|(a, b)| a * b).sum();
        assert!((energy - 5.0).abs() < 1e-12);
        let one = vec![1.0; mesh.num_nodes()];
        assert!(k.matvec(&one).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn observer_reproduces_bilinear_fields() {
        let mesh = Mesh::new(8).unwrap();
        let u = mesh.interpolate(|x, y| 1.0 + 3.0 * x - 2.0 * y + x * y);
        let pts = [[0.3, 0.77], [1.0, 1.0], [0.0, 0.5], [0.125, 0.875]];
        let obs = PointObserver::new(&mesh, &pts).unwrap();
        for (v, p) in obs.apply(&u).iter().zip(&pts) {
            let (x, y) = (p[0], p[1]);
            assert!((v - (1.0 + 3.0 * x - 2.0 * y + x * y)).abs() < 1e-12);
        }
        assert!(PointObserver::new(&mesh, &[[1.2, 0.0]]).is_err());
    }

    #[test]
    fn observer_transpose_is_adjoint() {
        let mesh = Mesh::new(6).unwrap();
        let obs = PointObserver::new(&mesh, &[[0.31, 0.42], [0.9, 0.05]]).unwrap();
        let u: Vec<f64> = (0..mesh.num_nodes()).map(|k| (k as f64).sin()).collect();
        let r = [0.7, -1.3];
        let ou = obs.apply(&u);
        let mut otr = vec![0.0; mesh.num_nodes()];
        obs.add_transpose(&r, 1.0, &mut otr);
        let lhs: f64 = ou.iter().zip(&r).map(|(a, b)| a * b).sum();
        let rhs: f64 = u.iter().zip(&otr).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-13);
    }
}
