//! Discrete forward model: Darcy pressure followed by implicit-Euler
//! transport of the tracer.

use serde::{Deserialize, Serialize};

use crate::band::{BandLu, BandMatrix};
use crate::config::{TracerConfig, TransportBoundary};
use crate::forms::{Coefficient, Forms};
use crate::mesh::{Mesh, PointObserver};
use crate::params::{AuxLayout, SourceLoads};
use hdsa::{Error, Result};

/// Sensor readings: one concentration row per observed time step, plus the
/// pressure sensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observations {
    pub concentration: Vec<Vec<f64>>,
    pub pressure: Vec<f64>,
}

/// Everything that depends on the mesh and time step but not on `κ`.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub forms: Forms,
    pub mass: BandMatrix,
    pub stiffness: BandMatrix,
    pub loads: SourceLoads,
    pub obs_c: PointObserver,
    pub obs_p: PointObserver,
    pub layout: AuxLayout,
    pub n_steps: usize,
    pub dt: f64,
    pub boundary: TransportBoundary,
    pub artificial_diffusion: f64,
    dirichlet: Vec<bool>,
}

/// Forward states at one `(κ, θ)` with the factored operators reused by the
/// adjoint and incremental solves.
#[derive(Debug, Clone)]
pub struct State {
    pub coef: Coefficient,
    /// `sign(u·n)` at the Dirichlet edge points; `None` for closed transport.
    pub flow_sign: Option<Vec<f64>>,
    pub darcy: BandLu,
    pub transport: BandLu,
    pub pressure: Vec<f64>,
    /// `c¹ … c^N`; `c⁰ = 0` is implicit.
    pub concentration: Vec<Vec<f64>>,
    pub eta: f64,
}

impl Discretization {
    pub fn new(mesh: Mesh, n_steps: usize, cfg: &TracerConfig) -> Result<Self> {
        cfg.layout.validate()?;
        if n_steps == 0 {
            return Err(Error::Config("need at least one time step".into()));
        }
        let mut dirichlet = vec![false; mesh.num_nodes()];
        for k in mesh.left_nodes().into_iter().chain(mesh.right_nodes()) {
            dirichlet[k] = true;
        }
        Ok(Self {
            forms: Forms::new(mesh),
            mass: mesh.mass_matrix(),
            stiffness: mesh.stiffness_matrix(),
            loads: cfg.layout.source_loads(&mesh),
            obs_c: PointObserver::new(&mesh, &cfg.sensors.concentration)?,
            obs_p: PointObserver::new(&mesh, &cfg.sensors.pressure)?,
            layout: cfg.layout.clone(),
            n_steps,
            dt: cfg.t_final / n_steps as f64,
            boundary: cfg.boundary,
            artificial_diffusion: cfg.artificial_diffusion,
            dirichlet,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.forms.mesh
    }

    pub fn num_nodes(&self) -> usize {
        self.mesh().num_nodes()
    }

    pub fn is_dirichlet(&self, k: usize) -> bool {
        self.dirichlet[k]
    }

    pub fn coefficient(&self, kappa: &[f64], weight: Option<&[f64]>, flow_sign: Option<&[f64]>) -> Coefficient {
        self.forms.coefficient(kappa, weight, flow_sign)
    }

    /// Nodal vector holding `values` on the Dirichlet nodes, zero elsewhere.
    pub fn dirichlet_vector(&self, right: &[f64], left: &[f64]) -> Vec<f64> {
        let mesh = self.mesh();
        let mut v = vec![0.0; mesh.num_nodes()];
        for (k, &x) in mesh.right_nodes().iter().zip(right) {
            v[*k] = x;
        }
        for (k, &x) in mesh.left_nodes().iter().zip(left) {
            v[*k] = x;
        }
        v
    }

    /// Darcy operator with the Dirichlet rows and columns eliminated.
    pub fn darcy_factor(&self, coef: &Coefficient) -> Result<BandLu> {
        let mut a = self.forms.darcy_matrix(coef);
        for k in 0..self.num_nodes() {
            if self.dirichlet[k] {
                a.set_identity_row_col(k);
            }
        }
        a.factor()
            .map_err(|e| Error::model("darcy solve", format!("{e} (is κ finite?)")))
    }

    /// Solves the eliminated Darcy system for the field equal to `pd` on the
    /// Dirichlet nodes with free-row load `extra`.
    pub fn darcy_solve(&self, lu: &BandLu, coef: &Coefficient, pd: &[f64], extra: Option<&[f64]>) -> Vec<f64> {
        let mut kpd = vec![0.0; pd.len()];
        self.forms.q_mu(coef, pd, &mut kpd);
        let mut rhs: Vec<f64> = kpd.iter().map(|v| -v).collect();
        if let Some(extra) = extra {
            for (r, e) in rhs.iter_mut().zip(extra) {
                *r += e;
            }
        }
        for k in 0..rhs.len() {
            if self.dirichlet[k] {
                rhs[k] = pd[k];
            }
        }
        lu.solve(&rhs)
    }

    /// Homogeneous solve: Dirichlet rows of `rhs` are set to zero first.
    pub fn darcy_solve_homogeneous(&self, lu: &BandLu, mut rhs: Vec<f64>) -> Vec<f64> {
        for (k, r) in rhs.iter_mut().enumerate() {
            if self.dirichlet[k] {
                *r = 0.0;
            }
        }
        lu.solve_in_place(&mut rhs);
        rhs
    }

    /// `M/dt + (η + η_art) K + V(κ, p)`.
    pub fn transport_matrix(&self, coef: &Coefficient, p: &[f64], eta: f64) -> BandMatrix {
        let mut l = self.forms.advection_matrix(coef, p);
        l.axpy(1.0 / self.dt, &self.mass);
        l.axpy(eta + self.artificial_diffusion, &self.stiffness);
        l
    }

    /// `(M/dt) u`.
    pub fn mass_dt(&self, u: &[f64]) -> Vec<f64> {
        let mut v = self.mass.matvec(u);
        v.iter_mut().for_each(|x| *x /= self.dt);
        v
    }

    pub fn forward(&self, kappa: &[f64], theta: &[f64]) -> Result<State> {
        let nn = self.num_nodes();
        if kappa.len() != nn || theta.len() != self.layout.dim() {
            return Err(Error::violation(format!(
                "forward solve expects κ of length {nn} and θ of length {}",
                self.layout.dim()
            )));
        }
        if kappa.iter().any(|v| !v.is_finite()) {
            return Err(Error::model("forward solve", "non-finite κ"));
        }
        let coef = self.coefficient(kappa, None, None);
        let darcy = self.darcy_factor(&coef)?;
        let (right, left) = self.layout.dirichlet_values(self.mesh(), theta);
        let pd = self.dirichlet_vector(&right, &left);
        let pressure = self.darcy_solve(&darcy, &coef, &pd, None);
        let flow_sign = (self.boundary == TransportBoundary::Open).then(|| self.forms.flow_sign(&pressure));
        let coef = self.coefficient(kappa, None, flow_sign.as_deref());

        let eta = self.layout.eta(theta);
        let transport = self
            .transport_matrix(&coef, &pressure, eta)
            .factor()
            .map_err(|e| Error::model("transport solve", e.to_string()))?;
        let f = self.loads.load(&theta[self.layout.source_range()]);
        let mut concentration = Vec::with_capacity(self.n_steps);
        let mut c = vec![0.0; nn];
        for _ in 0..self.n_steps {
            let mut rhs = self.mass_dt(&c);
            rhs.iter_mut().zip(&f).for_each(|(r, s)| *r += s);
            transport.solve_in_place(&mut rhs);
            c = rhs;
            concentration.push(c.clone());
        }
        if concentration.iter().flatten().chain(&pressure).any(|v| !v.is_finite()) {
            return Err(Error::model("forward solve", "non-finite state"));
        }
        Ok(State {
            coef,
            flow_sign,
            darcy,
            transport,
            pressure,
            concentration,
            eta,
        })
    }

    /// Sensor readings at every `stride`-th step.
    pub fn observe(&self, state: &State, stride: usize) -> Observations {
        Observations {
            concentration: state
                .concentration
                .iter()
                .skip(stride - 1)
                .step_by(stride)
                .map(|c| self.obs_c.apply(c))
                .collect(),
            pressure: self.obs_p.apply(&state.pressure),
        }
    }

    /// Total tracer mass `1ᵀ M c`.
    pub fn mass_of(&self, c: &[f64]) -> f64 {
        self.mass.matvec(c).iter().sum()
    }
}
