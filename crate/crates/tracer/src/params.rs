//! Auxiliary parameterization of the boundary pressures, the tracer source
//! and the diffusion coefficient.
//!
//! `θ` is laid out as `[right boundary hats | left boundary hats | 3×3 hats
//! per injection site | diffusion]`; `θ = 0` gives the nominal model.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::mesh::Mesh;
use hdsa::problem::AuxLabel;
use hdsa::{Error, Result};

/// Relative size of every perturbation, `δ = 1 + 0.1 Σ θⱼ φⱼ`.
pub const PERTURBATION: f64 = 0.1;

/// `mean + cos2 cos(2πy) + cos4 cos(4πy)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirichletProfile {
    pub mean: f64,
    #[serde(default)]
    pub cos2: f64,
    #[serde(default)]
    pub cos4: f64,
}

impl DirichletProfile {
    pub fn eval(&self, y: f64) -> f64 {
        self.mean + self.cos2 * (2.0 * PI * y).cos() + self.cos4 * (4.0 * PI * y).cos()
    }
}

/// Injection sites with Gaussian footprints `amplitude·exp(−decay r²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub sites: Vec<[f64; 2]>,
    pub amplitude: f64,
    pub decay: f64,
    /// Half-width of the 3×3 patch carrying each site's perturbation hats.
    pub patch_half_width: f64,
}

impl Default for SourceSpec {
    fn default() -> Self {
        let grid = [0.2, 0.4, 0.6, 0.8];
        let sites = grid
            .iter()
            .flat_map(|&y| grid.iter().map(move |&x| [x, y]))
            .collect();
        Self {
            sites,
            amplitude: 10.0,
            decay: 100.0,
            patch_half_width: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuxLayout {
    /// Pressure on `x = 1`.
    pub pressure_right: DirichletProfile,
    /// Pressure on `x = 0`.
    pub pressure_left: DirichletProfile,
    /// Hat functions per Dirichlet boundary.
    pub boundary_hats: usize,
    pub source: SourceSpec,
    pub diffusion: f64,
}

impl Default for AuxLayout {
    fn default() -> Self {
        Self {
            pressure_right: DirichletProfile {
                mean: 15.0,
                cos2: 1.0,
                cos4: 0.5,
            },
            pressure_left: DirichletProfile {
                mean: 10.0,
                cos2: 2.0,
                cos4: 0.0,
            },
            boundary_hats: 21,
            source: SourceSpec::default(),
            diffusion: 0.025,
        }
    }
}

/// 1D hat `j` of `count` on a uniform grid of `[0, 1]`.
pub fn hat(j: usize, count: usize, t: f64) -> f64 {
    let s = (count - 1) as f64;
    (1.0 - (t * s - j as f64).abs()).max(0.0)
}

impl AuxLayout {
    pub fn validate(&self) -> Result<()> {
        if self.boundary_hats < 2 {
            return Err(Error::Config("boundary_hats must be at least 2".into()));
        }
        if !(self.diffusion > 0.0) {
            return Err(Error::Config("diffusion must be positive".into()));
        }
        let s = &self.source;
        if !(s.patch_half_width > 0.0 && s.decay >= 0.0) {
            return Err(Error::Config("source patch_half_width must be positive".into()));
        }
        for site in &s.sites {
            if !site.iter().all(|v| (0.0..=1.0).contains(v)) {
                return Err(Error::Config(format!("injection site {site:?} outside the domain")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        2 * self.boundary_hats + 9 * self.source.sites.len() + 1
    }

    pub fn right_range(&self) -> std::ops::Range<usize> {
        0..self.boundary_hats
    }

    pub fn left_range(&self) -> std::ops::Range<usize> {
        self.boundary_hats..2 * self.boundary_hats
    }

    pub fn source_range(&self) -> std::ops::Range<usize> {
        let s = 2 * self.boundary_hats;
        s..s + 9 * self.source.sites.len()
    }

    pub fn diffusion_index(&self) -> usize {
        self.dim() - 1
    }

    pub fn labels(&self) -> Vec<AuxLabel> {
        let mut out = Vec::with_capacity(self.dim());
        out.extend(self.right_range().map(|i| AuxLabel::new("boundary-right", i)));
        out.extend((0..self.boundary_hats).map(|i| AuxLabel::new("boundary-left", i)));
        out.extend((0..9 * self.source.sites.len()).map(|i| AuxLabel::new("source", i)));
        out.push(AuxLabel::new("diffusion", 0));
        out
    }

    pub fn eta(&self, theta: &[f64]) -> f64 {
        self.diffusion * (1.0 + PERTURBATION * theta[self.diffusion_index()])
    }

    pub fn eta_derivative(&self) -> f64 {
        self.diffusion * PERTURBATION
    }

    fn boundary_delta(&self, theta: &[f64], offset: usize, y: f64) -> f64 {
        let nh = self.boundary_hats;
        1.0 + PERTURBATION
            * (0..nh)
                .map(|j| theta[offset + j] * hat(j, nh, y))
                .sum::<f64>()
    }

    /// Dirichlet values on the right and left boundary nodes.
    pub fn dirichlet_values(&self, mesh: &Mesh, theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let ys: Vec<f64> = (0..=mesh.n).map(|j| j as f64 * mesh.h()).collect();
        let right = ys
            .iter()
            .map(|&y| self.pressure_right.eval(y) * self.boundary_delta(theta, 0, y))
            .collect();
        let left = ys
            .iter()
            .map(|&y| self.pressure_left.eval(y) * self.boundary_delta(theta, self.boundary_hats, y))
            .collect();
        (right, left)
    }

    /// Derivative of the Dirichlet values along `dtheta`.
    pub fn dirichlet_derivative(&self, mesh: &Mesh, dtheta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let ys: Vec<f64> = (0..=mesh.n).map(|j| j as f64 * mesh.h()).collect();
        let nh = self.boundary_hats;
        let d = |profile: &DirichletProfile, offset: usize, y: f64| {
            profile.eval(y)
                * PERTURBATION
                * (0..nh).map(|j| dtheta[offset + j] * hat(j, nh, y)).sum::<f64>()
        };
        (
            ys.iter().map(|&y| d(&self.pressure_right, 0, y)).collect(),
            ys.iter().map(|&y| d(&self.pressure_left, nh, y)).collect(),
        )
    }

    /// Bilinear hat `j` (row-major over the 3×3 patch) of site `k`.
    pub fn patch_hat(&self, k: usize, j: usize, x: f64, y: f64) -> f64 {
        let [v, w] = self.source.sites[k];
        let hw = self.source.patch_half_width;
        let (ix, iy) = ((j % 3) as f64 - 1.0, (j / 3) as f64 - 1.0);
        let bx = (1.0 - ((x - v) / hw - ix).abs()).max(0.0);
        let by = (1.0 - ((y - w) / hw - iy).abs()).max(0.0);
        if ((x - v) / hw).abs() > 1.0 || ((y - w) / hw).abs() > 1.0 {
            0.0
        } else {
            bx * by
        }
    }

    /// Load vector of the nominal source and one sparse load vector per
    /// source parameter; `f(θ) = f₀ + Σ θᵢ Fᵢ` exactly.
    pub fn source_loads(&self, mesh: &Mesh) -> SourceLoads {
        let nn = mesh.num_nodes();
        let ns = self.source.sites.len();
        let q = mesh.quadrature();
        let h = mesh.h();
        let mut f0 = vec![0.0; nn];
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); 9 * ns];
        let (amp, decay) = (self.source.amplitude, self.source.decay);
        // Gauss points in the reference square, matching Mesh::quadrature.
        let g = [0.5 - 0.5 / 3f64.sqrt(), 0.5 + 0.5 / 3f64.sqrt()];
        for e in 0..mesh.num_elements() {
            let nodes = mesh.element_nodes(e);
            let (x0, y0) = mesh.coords(nodes[0]);
            for p in 0..4 {
                let (x, y) = (x0 + g[p % 2] * h, y0 + g[p / 2] * h);
                for k in 0..ns {
                    let [v, w] = self.source.sites[k];
                    let gk = amp * (-decay * ((x - v).powi(2) + (y - w).powi(2))).exp();
                    for a in 0..4 {
                        f0[nodes[a]] += q.w * gk * q.n[p][a];
                    }
                    for j in 0..9 {
                        let psi = self.patch_hat(k, j, x, y);
                        if psi != 0.0 {
                            let col = &mut cols[9 * k + j];
                            if col.is_empty() {
                                col.resize(nn, 0.0);
                            }
                            for a in 0..4 {
                                col[nodes[a]] += q.w * gk * PERTURBATION * psi * q.n[p][a];
                            }
                        }
                    }
                }
            }
        }
        let columns = cols
            .into_iter()
            .map(|c| {
                c.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(i, v)| (i, *v))
                    .collect()
            })
            .collect();
        SourceLoads { f0, columns }
    }
}

#[derive(Debug, Clone)]
pub struct SourceLoads {
    pub f0: Vec<f64>,
    pub columns: Vec<Vec<(usize, f64)>>,
}

impl SourceLoads {
    /// `f₀ + Σ θᵢ Fᵢ` over the source block of `θ`.
    pub fn load(&self, theta_source: &[f64]) -> Vec<f64> {
        let mut f = self.f0.clone();
        self.add_derivative(theta_source, &mut f);
        f
    }

    pub fn add_derivative(&self, dtheta_source: &[f64], out: &mut [f64]) {
        for (col, &t) in self.columns.iter().zip(dtheta_source) {
            if t != 0.0 {
                for &(i, v) in col {
                    out[i] += t * v;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nominal_layout_dimensions() {
        let l = AuxLayout::default();
        assert_eq!(l.dim(), 187);
        assert_eq!(l.labels().len(), 187);
        assert_eq!(l.diffusion_index(), 186);
        assert_eq!(l.source_range(), 42..186);
        assert_eq!(l.labels()[21].to_string(), "boundary-left[0]");
    }

    #[test]
    fn zero_theta_is_nominal() {
        let l = AuxLayout::default();
        let mesh = Mesh::new(8).unwrap();
        let theta = vec![0.0; l.dim()];
        assert_eq!(l.eta(&theta), 0.025);
        let (r, left) = l.dirichlet_values(&mesh, &theta);
        for j in 0..=8 {
            let y = j as f64 / 8.0;
            let pr = 15.0 + (2.0 * PI * y).cos() + 0.5 * (4.0 * PI * y).cos();
            let pl = 10.0 + 2.0 * (2.0 * PI * y).cos();
            assert_eq!(r[j], pr);
            assert_eq!(left[j], pl);
        }
        let loads = l.source_loads(&mesh);
        assert_eq!(loads.load(&theta[l.source_range()]), loads.f0);
    }

    #[test]
    fn patch_hats_partition_unity_inside_patch() {
        let l = AuxLayout::default();
        for &(x, y) in &[(0.2, 0.2), (0.25, 0.17), (0.29, 0.11), (0.131, 0.27)] {
            let s: f64 = (0..9).map(|j| l.patch_hat(0, j, x, y)).sum();
            assert!((s - 1.0).abs() < 1e-12, "({x},{y}) -> {s}");
        }
        assert_eq!(l.patch_hat(0, 4, 0.35, 0.2), 0.0);
        assert_eq!(l.patch_hat(0, 4, 0.2, 0.2), 1.0);
    }

    #[test]
    fn boundary_hats_sum_to_one() {
        for t in [0.0, 0.013, 0.5, 0.97, 1.0] {
            let s: f64 = (0..21).map(|j| hat(j, 21, t)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dirichlet_derivative_is_exact() {
        let l = AuxLayout::default();
        let mesh = Mesh::new(10).unwrap();
        let mut theta = vec![0.0; l.dim()];
        theta[3] = 0.7;
        theta[25] = -1.2;
        let (r0, l0) = l.dirichlet_values(&mesh, &vec![0.0; l.dim()]);
        let (r1, l1) = l.dirichlet_values(&mesh, &theta);
        let (dr, dl) = l.dirichlet_derivative(&mesh, &theta);
        for j in 0..=10 {
            assert!((r1[j] - r0[j] - dr[j]).abs() < 1e-12);
            assert!((l1[j] - l0[j] - dl[j]).abs() < 1e-12);
        }
    }
}
