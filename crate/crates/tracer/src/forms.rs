//! The two nonlinear forms of the coupled model and their partial
//! derivatives.
//!
//! With `k_q = s_q e^{κ_q}` at each quadrature point and velocity
//! `u = −e^κ∇p`,
//!
//! * `Q(p, μ) = ∫ k ∇p·∇μ` is the Darcy form,
//! * `T(p, c, λ)` is the advective form. For open transport it is the
//!   skew-symmetric average of the conservative and advective forms plus an
//!   upwind flux on the two Dirichlet sides,
//!   `½∫ k c ∇p·∇λ − ½∫ k λ ∇p·∇c + ½∫_{x=0,1} |u·n| c λ ds`,
//!   which is dissipative even though the discrete velocity is not exactly
//!   divergence free. Closed transport uses the conservative form
//!   `∫ k c ∇p·∇λ` alone, which conserves mass but is only stable for small
//!   time steps.
//!
//! The sign of `u·n` at each edge point is frozen at the forward pressure,
//! so `T` is trilinear in `(p, c, λ)` and its derivatives are exact away
//! from points where the normal velocity changes sign.
//!
//! The weight `s` is 1 for the forms themselves and `κ̂` for their
//! derivative in the direction `κ̂`, so one set of kernels covers first and
//! second derivatives. Each kernel returns the gradient of a form with
//! respect to one argument ("hole") and accumulates into `out`.

use crate::band::BandMatrix;
use crate::mesh::{Mesh, Quadrature};

/// Quadrature-point values of `s e^κ`. Edge values, present for open
/// transport only, also carry `½ (−n_x) sign(u·n)`.
#[derive(Debug, Clone)]
pub struct Coefficient {
    interior: Vec<f64>,
    edge: Option<Vec<f64>>,
}

impl Coefficient {
    /// Weights of the conservative and advective interior parts.
    fn split(&self) -> (f64, f64) {
        if self.edge.is_some() {
            (0.5, 0.5)
        } else {
            (1.0, 0.0)
        }
    }
}

/// Element loops over one mesh.
#[derive(Debug, Clone)]
pub struct Forms {
    pub mesh: Mesh,
    q: Quadrature,
}

fn gather(u: &[f64], nodes: &[usize; 4]) -> [f64; 4] {
    [u[nodes[0]], u[nodes[1]], u[nodes[2]], u[nodes[3]]]
}

fn dot4(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

/// `−n_x` on the left and right sides.
const OUTWARD: [f64; 2] = [1.0, -1.0];

impl Forms {
    pub fn new(mesh: Mesh) -> Self {
        let q = mesh.quadrature();
        Self { mesh, q }
    }

    /// Element adjacent to `side` in row `j`.
    fn edge_element(&self, side: usize, j: usize) -> usize {
        let n = self.mesh.n;
        j * n + side * (n - 1)
    }

    /// `sign(u·n)` at the edge quadrature points, side-major, for the
    /// pressure `p`: `+1` where the flow leaves the domain.
    pub fn flow_sign(&self, p: &[f64]) -> Vec<f64> {
        let n = self.mesh.n;
        let mut out = Vec::with_capacity(4 * n);
        for side in 0..2 {
            for j in 0..n {
                let pl = gather(p, &self.mesh.element_nodes(self.edge_element(side, j)));
                for qp in 0..2 {
                    let un = OUTWARD[side] * dot4(&self.q.edge_dx[side][qp], &pl);
                    out.push(if un < 0.0 { -1.0 } else { 1.0 });
                }
            }
        }
        out
    }

    /// `s e^κ` at every quadrature point. Passing the flow signs selects
    /// open transport.
    pub fn coefficient(&self, kappa: &[f64], weight: Option<&[f64]>, flow_sign: Option<&[f64]>) -> Coefficient {
        let n = self.mesh.n;
        let mut interior = Vec::with_capacity(4 * self.mesh.num_elements());
        for e in 0..self.mesh.num_elements() {
            let nodes = self.mesh.element_nodes(e);
            let kl = gather(kappa, &nodes);
            let sl = weight.map(|s| gather(s, &nodes));
            for p in 0..4 {
                let s = sl.as_ref().map_or(1.0, |s| dot4(&self.q.n[p], s));
                interior.push(s * dot4(&self.q.n[p], &kl).exp());
            }
        }
        let edge = flow_sign.map(|sign| {
            assert_eq!(sign.len(), 4 * n, "flow signs from another mesh");
            let mut edge = Vec::with_capacity(4 * n);
            for side in 0..2 {
                for j in 0..n {
                    let nodes = self.mesh.element_nodes(self.edge_element(side, j));
                    let kl = gather(kappa, &nodes);
                    let sl = weight.map(|s| gather(s, &nodes));
                    for p in 0..2 {
                        let en = &self.q.edge_n[side][p];
                        let s = sl.as_ref().map_or(1.0, |s| dot4(en, s));
                        edge.push(0.5 * OUTWARD[side] * sign[edge.len()] * s * dot4(en, &kl).exp());
                    }
                }
            }
            edge
        });
        Coefficient { interior, edge }
    }

    fn grad(&self, p: usize, u: &[f64; 4]) -> (f64, f64) {
        (dot4(&self.q.dx[p], u), dot4(&self.q.dy[p], u))
    }

    fn grad_dot(&self, p: usize, a: &[f64; 4], b: &[f64; 4]) -> f64 {
        let (ax, ay) = self.grad(p, a);
        let (bx, by) = self.grad(p, b);
        ax * bx + ay * by
    }

    /// `∇u·∇N_b` at point `p` for each local `b`.
    fn grad_basis(&self, p: usize, u: &[f64; 4]) -> [f64; 4] {
        let (ux, uy) = self.grad(p, u);
        std::array::from_fn(|b| ux * self.q.dx[p][b] + uy * self.q.dy[p][b])
    }

    /// Interior loop: `f(qp, nodes, w·k_q)` for each quadrature point.
    fn interior(&self, k: &Coefficient, mut f: impl FnMut(usize, &[usize; 4], f64)) {
        for e in 0..self.mesh.num_elements() {
            let nodes = self.mesh.element_nodes(e);
            for p in 0..4 {
                f(p, &nodes, self.q.w * k.interior[4 * e + p]);
            }
        }
    }

    /// Edge loop: `f(side, qp, nodes, w·k_q)`.
    fn edge(&self, k: &Coefficient, mut f: impl FnMut(usize, usize, &[usize; 4], f64)) {
        if let Some(edge) = &k.edge {
            let n = self.mesh.n;
            for side in 0..2 {
                for j in 0..n {
                    let nodes = self.mesh.element_nodes(self.edge_element(side, j));
                    for p in 0..2 {
                        f(side, p, &nodes, self.q.edge_w * edge[(side * n + j) * 2 + p]);
                    }
                }
            }
        }
    }

    /// `∂Q/∂μ`: `out_b += ∫ k ∇p·∇N_b`.
    pub fn q_mu(&self, k: &Coefficient, p: &[f64], out: &mut [f64]) {
        self.interior(k, |qp, nodes, wk| {
            let g = self.grad_basis(qp, &gather(p, nodes));
            for b in 0..4 {
                out[nodes[b]] += wk * g[b];
            }
        });
    }

    /// `∂Q/∂κ`: `out_b += ∫ k (∇p·∇μ) N_b`.
    pub fn q_kappa(&self, k: &Coefficient, p: &[f64], mu: &[f64], out: &mut [f64]) {
        let q = &self.q;
        self.interior(k, |qp, nodes, wk| {
            let v = wk * self.grad_dot(qp, &gather(p, nodes), &gather(mu, nodes));
            for b in 0..4 {
                out[nodes[b]] += v * q.n[qp][b];
            }
        });
    }

    /// `∂T/∂κ`.
    pub fn t_kappa(&self, k: &Coefficient, p: &[f64], c: &[f64], lam: &[f64], out: &mut [f64]) {
        let q = &self.q;
        let (wc, wa) = k.split();
        self.interior(k, |qp, nodes, wk| {
            let (pl, cl, ll) = (gather(p, nodes), gather(c, nodes), gather(lam, nodes));
            let mut v = wc * dot4(&q.n[qp], &cl) * self.grad_dot(qp, &pl, &ll);
            if wa != 0.0 {
                v -= wa * dot4(&q.n[qp], &ll) * self.grad_dot(qp, &pl, &cl);
            }
            for b in 0..4 {
                out[nodes[b]] += wk * v * q.n[qp][b];
            }
        });
        self.edge(k, |side, qp, nodes, wk| {
            let (en, ed) = (&q.edge_n[side][qp], &q.edge_dx[side][qp]);
            let v = wk * dot4(ed, &gather(p, nodes)) * dot4(en, &gather(c, nodes)) * dot4(en, &gather(lam, nodes));
            for b in 0..4 {
                out[nodes[b]] += v * en[b];
            }
        });
    }

    /// `∂T/∂p`.
    pub fn t_p(&self, k: &Coefficient, c: &[f64], lam: &[f64], out: &mut [f64]) {
        let q = &self.q;
        let (wc, wa) = k.split();
        self.interior(k, |qp, nodes, wk| {
            let (cl, ll) = (gather(c, nodes), gather(lam, nodes));
            let gl = self.grad_basis(qp, &ll);
            let cq = wk * wc * dot4(&q.n[qp], &cl);
            for b in 0..4 {
                out[nodes[b]] += cq * gl[b];
            }
            if wa != 0.0 {
                let gc = self.grad_basis(qp, &cl);
                let lq = wk * wa * dot4(&q.n[qp], &ll);
                for b in 0..4 {
                    out[nodes[b]] -= lq * gc[b];
                }
            }
        });
        self.edge(k, |side, qp, nodes, wk| {
            let (en, ed) = (&q.edge_n[side][qp], &q.edge_dx[side][qp]);
            let v = wk * dot4(en, &gather(c, nodes)) * dot4(en, &gather(lam, nodes));
            for b in 0..4 {
                out[nodes[b]] += v * ed[b];
            }
        });
    }

    /// `∂T/∂c`, i.e. `V(k, p)ᵀ λ`.
    pub fn t_c(&self, k: &Coefficient, p: &[f64], lam: &[f64], out: &mut [f64]) {
        let q = &self.q;
        let (wc, wa) = k.split();
        self.interior(k, |qp, nodes, wk| {
            let (pl, ll) = (gather(p, nodes), gather(lam, nodes));
            let v = wk * wc * self.grad_dot(qp, &pl, &ll);
            for b in 0..4 {
                out[nodes[b]] += v * q.n[qp][b];
            }
            if wa != 0.0 {
                let gp = self.grad_basis(qp, &pl);
                let lq = wk * wa * dot4(&q.n[qp], &ll);
                for b in 0..4 {
                    out[nodes[b]] -= lq * gp[b];
                }
            }
        });
        self.edge(k, |side, qp, nodes, wk| {
            let (en, ed) = (&q.edge_n[side][qp], &q.edge_dx[side][qp]);
            let v = wk * dot4(ed, &gather(p, nodes)) * dot4(en, &gather(lam, nodes));
            for b in 0..4 {
                out[nodes[b]] += v * en[b];
            }
        });
    }

    /// `∂T/∂λ`, i.e. `V(k, p) c`.
    pub fn t_lam(&self, k: &Coefficient, p: &[f64], c: &[f64], out: &mut [f64]) {
        let q = &self.q;
        let (wc, wa) = k.split();
        self.interior(k, |qp, nodes, wk| {
            let (pl, cl) = (gather(p, nodes), gather(c, nodes));
            let gp = self.grad_basis(qp, &pl);
            let cq = wk * wc * dot4(&q.n[qp], &cl);
            for b in 0..4 {
                out[nodes[b]] += cq * gp[b];
            }
            if wa != 0.0 {
                let v = wk * wa * self.grad_dot(qp, &pl, &cl);
                for b in 0..4 {
                    out[nodes[b]] -= v * q.n[qp][b];
                }
            }
        });
        self.edge(k, |side, qp, nodes, wk| {
            let (en, ed) = (&q.edge_n[side][qp], &q.edge_dx[side][qp]);
            let v = wk * dot4(ed, &gather(p, nodes)) * dot4(en, &gather(c, nodes));
            for b in 0..4 {
                out[nodes[b]] += v * en[b];
            }
        });
    }

    /// `K_ab = ∫ k ∇Nₐ·∇N_b`.
    pub fn darcy_matrix(&self, k: &Coefficient) -> BandMatrix {
        let q = &self.q;
        let mut m = self.mesh.band_zeros();
        self.interior(k, |qp, nodes, wk| {
            for a in 0..4 {
                for b in 0..4 {
                    m.add(
                        nodes[a],
                        nodes[b],
                        wk * (q.dx[qp][a] * q.dx[qp][b] + q.dy[qp][a] * q.dy[qp][b]),
                    );
                }
            }
        });
        m
    }

    /// `V_ab = ∂²T/∂λₐ∂c_b` for the fixed pressure `p`.
    pub fn advection_matrix(&self, k: &Coefficient, p: &[f64]) -> BandMatrix {
        let q = &self.q;
        let (wc, wa) = k.split();
        let mut m = self.mesh.band_zeros();
        self.interior(k, |qp, nodes, wk| {
            let gp = self.grad_basis(qp, &gather(p, nodes));
            for a in 0..4 {
                for b in 0..4 {
                    let v = wc * gp[a] * q.n[qp][b] - wa * q.n[qp][a] * gp[b];
                    m.add(nodes[a], nodes[b], wk * v);
                }
            }
        });
        self.edge(k, |side, qp, nodes, wk| {
            let (en, ed) = (&q.edge_n[side][qp], &q.edge_dx[side][qp]);
            let px = dot4(ed, &gather(p, nodes));
            for a in 0..4 {
                for b in 0..4 {
                    m.add(nodes[a], nodes[b], wk * px * en[a] * en[b]);
                }
            }
        });
        m
    }
}
