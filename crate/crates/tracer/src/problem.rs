//! The tracer inversion as an [`InverseProblem`] over nodal `κ`.
//!
//! The objective is
//! `Σₖ (2/w_c²)‖O_c cᵏ − d_cᵏ‖² + (1/w_p²)‖O_p p − d_p‖² + γ₁‖∇κ‖² + γ₂‖κ‖²`
//! with the discrete forms of both regularization terms. Gradients come
//! from the discrete adjoint; Hessian-vector products and mixed-Jacobian
//! columns from the second-order adjoint, which differentiates the gradient
//! expression through all forward and adjoint states.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::band::{BandLu, BandMatrix};
use crate::config::{HessianMode, TracerConfig};
use crate::data::DataBundle;
use crate::mesh::Mesh;
use crate::model::{Discretization, Observations, State};
use hdsa::linops::{AuxVector, LinearOperator, ParamVector};
use hdsa::problem::{AuxLabel, InverseProblem, Linearization};
use hdsa::{Error, Result};

/// Deliberate adjoint defects for exercising the verification suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    /// Drops the pressure adjoint from the gradient.
    DropPressureAdjoint,
}

/// Symmetric band matrix as an operator.
#[derive(Debug, Clone)]
pub struct BandOperator(pub BandMatrix);

impl LinearOperator for BandOperator {
    fn dim_in(&self) -> usize {
        self.0.size()
    }
    fn dim_out(&self) -> usize {
        self.0.size()
    }
    fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(self.0.size(), x.len())?;
        Ok(DVector::from_vec(self.0.matvec(x.as_slice())))
    }
}

/// Inverse of a factored band matrix as an operator.
#[derive(Debug, Clone)]
pub struct BandInverse(pub BandLu);

impl LinearOperator for BandInverse {
    fn dim_in(&self) -> usize {
        self.0.size()
    }
    fn dim_out(&self) -> usize {
        self.0.size()
    }
    fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(self.0.size(), x.len())?;
        Ok(DVector::from_vec(self.0.solve(x.as_slice())))
    }
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context: "band operator",
            expected,
            found,
        })
    }
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += a * x);
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub struct TracerProblem {
    pub disc: Discretization,
    pub data: Observations,
    pub w_c: f64,
    pub w_p: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub hessian: HessianMode,
    /// Time steps between concentration observations.
    obs_stride: usize,
    reg: BandMatrix,
    reg_inv: Option<BandInverse>,
    metric: BandOperator,
    fault: Option<Fault>,
}

impl TracerProblem {
    /// Inversion on the coarse mesh of `cfg` against `data`.
    pub fn new(cfg: &TracerConfig, data: &DataBundle) -> Result<Self> {
        cfg.validate()?;
        let mesh = Mesh::new(cfg.mesh_coarse)?;
        let disc = Discretization::new(mesh, cfg.n_steps_coarse, cfg)?;
        if data.observations.concentration.len() != cfg.n_observations
            || data
                .observations
                .concentration
                .iter()
                .any(|row| row.len() != disc.obs_c.len())
            || data.observations.pressure.len() != disc.obs_p.len()
        {
            return Err(Error::violation(
                "data bundle does not match the sensor layout and time steps",
            ));
        }
        let mut reg = mesh.band_zeros();
        reg.axpy(2.0 * cfg.gamma1, &disc.stiffness);
        reg.axpy(2.0 * cfg.gamma2, &disc.mass);
        let reg_inv = if cfg.gamma2 > 0.0 {
            Some(BandInverse(reg.factor()?))
        } else {
            None
        };
        Ok(Self {
            metric: BandOperator(disc.mass.clone()),
            disc,
            data: data.observations.clone(),
            w_c: cfg.w_c.unwrap_or(data.w_c),
            w_p: cfg.w_p.unwrap_or(data.w_p),
            gamma1: cfg.gamma1,
            gamma2: cfg.gamma2,
            hessian: cfg.hessian,
            obs_stride: cfg.n_steps_coarse / cfg.n_observations,
            reg,
            reg_inv,
            fault: None,
        })
    }

    pub fn with_fault(mut self, fault: Fault) -> Self {
        self.fault = Some(fault);
        self
    }

    pub fn with_hessian(mut self, mode: HessianMode) -> Self {
        self.hessian = mode;
        self
    }

    pub fn mesh(&self) -> &Mesh {
        self.disc.mesh()
    }

    fn conc_scale(&self) -> f64 {
        2.0 / (self.w_c * self.w_c)
    }

    fn pres_scale(&self) -> f64 {
        1.0 / (self.w_p * self.w_p)
    }

    /// Data row observed at the end of step `k`, if any.
    fn observed(&self, k: usize) -> Option<&[f64]> {
        ((k + 1) % self.obs_stride == 0).then(|| self.data.concentration[(k + 1) / self.obs_stride - 1].as_slice())
    }

    fn misfit(&self, state: &State) -> f64 {
        let mut jc = 0.0;
        for (k, c) in state.concentration.iter().enumerate() {
            let Some(d) = self.observed(k) else { continue };
            jc += self
                .disc
                .obs_c
                .apply(c)
                .iter()
                .zip(d)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>();
        }
        let jp: f64 = self
            .disc
            .obs_p
            .apply(&state.pressure)
            .iter()
            .zip(&self.data.pressure)
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        self.conc_scale() * jc + self.pres_scale() * jp
    }

    /// `½ κᵀ H_R κ = γ₁ κᵀKκ + γ₂ κᵀMκ`.
    fn regularization(&self, kappa: &[f64]) -> f64 {
        0.5 * dot(kappa, &self.reg.matvec(kappa))
    }

    /// Misfit terms of the objective, split as (concentration, pressure).
    pub fn misfit_terms(&self, z: &ParamVector, theta: &AuxVector) -> Result<(f64, f64)> {
        let state = self.disc.forward(z.as_slice(), theta.as_slice())?;
        let full = self.misfit(&state);
        let jp: f64 = self
            .disc
            .obs_p
            .apply(&state.pressure)
            .iter()
            .zip(&self.data.pressure)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            * self.pres_scale();
        Ok((full - jp, jp))
    }

    pub fn initial_guess(&self, cfg: &TracerConfig) -> ParamVector {
        DVector::from_vec(self.mesh().interpolate(|x, y| cfg.kappa_initial.eval(x, y)))
    }
}

/// Forward and adjoint states at one point.
pub struct TracerLinearization<'a> {
    problem: &'a TracerProblem,
    kappa: Vec<f64>,
    state: State,
    lam: Vec<Vec<f64>>,
    mu: Vec<f64>,
    objective: f64,
    gradient: ParamVector,
}

impl<'a> TracerLinearization<'a> {
    fn new(problem: &'a TracerProblem, kappa: &[f64], theta: &[f64]) -> Result<Self> {
        let disc = &problem.disc;
        let nn = disc.num_nodes();
        let state = disc.forward(kappa, theta)?;
        let objective = problem.misfit(&state) + problem.regularization(kappa);

        let n = disc.n_steps;
        let mut lam = vec![vec![0.0; nn]; n];
        let mut next = vec![0.0; nn];
        for k in (0..n).rev() {
            let mut rhs = disc.mass_dt(&next);
            if let Some(d) = problem.observed(k) {
                let r: Vec<f64> = disc
                    .obs_c
                    .apply(&state.concentration[k])
                    .iter()
                    .zip(d)
                    .map(|(a, b)| a - b)
                    .collect();
                disc.obs_c.add_transpose(&r, -2.0 * problem.conc_scale(), &mut rhs);
            }
            state.transport.solve_transpose_in_place(&mut rhs);
            lam[k] = rhs.clone();
            next = rhs;
        }

        let mut rp = vec![0.0; nn];
        let r: Vec<f64> = disc
            .obs_p
            .apply(&state.pressure)
            .iter()
            .zip(&problem.data.pressure)
            .map(|(a, b)| a - b)
            .collect();
        disc.obs_p.add_transpose(&r, -2.0 * problem.pres_scale(), &mut rp);
        let mut tp = vec![0.0; nn];
        for (c, l) in state.concentration.iter().zip(&lam) {
            disc.forms.t_p(&state.coef, c, l, &mut tp);
        }
        axpy(-1.0, &tp, &mut rp);
        let mu = disc.darcy_solve_homogeneous(&state.darcy, rp);

        let mut g = problem.reg.matvec(kappa);
        if problem.fault != Some(Fault::DropPressureAdjoint) {
            disc.forms.q_kappa(&state.coef, &state.pressure, &mu, &mut g);
        }
        for (c, l) in state.concentration.iter().zip(&lam) {
            disc.forms.t_kappa(&state.coef, &state.pressure, c, l, &mut g);
        }
        Ok(Self {
            problem,
            kappa: kappa.to_vec(),
            state,
            lam,
            mu,
            objective,
            gradient: DVector::from_vec(g),
        })
    }

    /// Derivative of the misfit gradient along `(κ̂, θ̂)`.
    fn incremental(&self, khat: Option<&[f64]>, that: Option<&[f64]>, mode: HessianMode) -> Vec<f64> {
        let pb = self.problem;
        let disc = &pb.disc;
        let forms = &disc.forms;
        let layout = &disc.layout;
        let nn = disc.num_nodes();
        let n = disc.n_steps;
        let s = &self.state;
        let p = &s.pressure;
        let full = mode == HessianMode::Full;
        let kw = khat.map(|k| disc.coefficient(&self.kappa, Some(k), s.flow_sign.as_deref()));

        // Incremental pressure.
        let pd_hat = match that {
            Some(t) => {
                let (r, l) = layout.dirichlet_derivative(disc.mesh(), t);
                disc.dirichlet_vector(&r, &l)
            }
            None => vec![0.0; nn],
        };
        let extra = kw.as_ref().map(|kw| {
            let mut v = vec![0.0; nn];
            forms.q_mu(kw, p, &mut v);
            v.iter_mut().for_each(|x| *x = -*x);
            v
        });
        let p_hat = disc.darcy_solve(&s.darcy, &s.coef, &pd_hat, extra.as_deref());

        let eta_hat = that.map_or(0.0, |t| t[layout.diffusion_index()] * layout.eta_derivative());
        let mut f_hat = vec![0.0; nn];
        if let Some(t) = that {
            disc.loads.add_derivative(&t[layout.source_range()], &mut f_hat);
        }

        // Incremental concentrations.
        let mut c_hat = vec![vec![0.0; nn]; n];
        let mut prev = vec![0.0; nn];
        for k in 0..n {
            let c = &s.concentration[k];
            let mut rhs = disc.mass_dt(&prev);
            axpy(1.0, &f_hat, &mut rhs);
            if eta_hat != 0.0 {
                axpy(-eta_hat, &disc.stiffness.matvec(c), &mut rhs);
            }
            let mut t = vec![0.0; nn];
            forms.t_lam(&s.coef, &p_hat, c, &mut t);
            if let Some(kw) = &kw {
                forms.t_lam(kw, p, c, &mut t);
            }
            axpy(-1.0, &t, &mut rhs);
            s.transport.solve_in_place(&mut rhs);
            c_hat[k] = rhs.clone();
            prev = rhs;
        }

        // Incremental transport adjoints.
        let mut lam_hat = vec![vec![0.0; nn]; n];
        let mut next = vec![0.0; nn];
        for k in (0..n).rev() {
            let mut rhs = disc.mass_dt(&next);
            if pb.observed(k).is_some() {
                let oc = disc.obs_c.apply(&c_hat[k]);
                disc.obs_c.add_transpose(&oc, -2.0 * pb.conc_scale(), &mut rhs);
            }
            if full {
                let l = &self.lam[k];
                if eta_hat != 0.0 {
                    axpy(-eta_hat, &disc.stiffness.matvec(l), &mut rhs);
                }
                let mut t = vec![0.0; nn];
                forms.t_c(&s.coef, &p_hat, l, &mut t);
                if let Some(kw) = &kw {
                    forms.t_c(kw, p, l, &mut t);
                }
                axpy(-1.0, &t, &mut rhs);
            }
            s.transport.solve_transpose_in_place(&mut rhs);
            lam_hat[k] = rhs.clone();
            next = rhs;
        }

        // Incremental pressure adjoint.
        let mut rp = vec![0.0; nn];
        let op = disc.obs_p.apply(&p_hat);
        disc.obs_p.add_transpose(&op, -2.0 * pb.pres_scale(), &mut rp);
        let mut t = vec![0.0; nn];
        for k in 0..n {
            forms.t_p(&s.coef, &s.concentration[k], &lam_hat[k], &mut t);
            if full {
                forms.t_p(&s.coef, &c_hat[k], &self.lam[k], &mut t);
                if let Some(kw) = &kw {
                    forms.t_p(kw, &s.concentration[k], &self.lam[k], &mut t);
                }
            }
        }
        if full {
            if let Some(kw) = &kw {
                forms.q_mu(kw, &self.mu, &mut t);
            }
        }
        axpy(-1.0, &t, &mut rp);
        let mu_hat = disc.darcy_solve_homogeneous(&s.darcy, rp);

        // Differentiate the gradient expression.
        let mut g = vec![0.0; nn];
        forms.q_kappa(&s.coef, p, &mu_hat, &mut g);
        for k in 0..n {
            forms.t_kappa(&s.coef, p, &s.concentration[k], &lam_hat[k], &mut g);
        }
        if full {
            forms.q_kappa(&s.coef, &p_hat, &self.mu, &mut g);
            if let Some(kw) = &kw {
                forms.q_kappa(kw, p, &self.mu, &mut g);
            }
            for k in 0..n {
                let (c, l) = (&s.concentration[k], &self.lam[k]);
                forms.t_kappa(&s.coef, &p_hat, c, l, &mut g);
                forms.t_kappa(&s.coef, p, &c_hat[k], l, &mut g);
                if let Some(kw) = &kw {
                    forms.t_kappa(kw, p, c, l, &mut g);
                }
            }
        }
        g
    }

    pub fn state(&self) -> &State {
        &self.state
    }
}

impl Linearization for TracerLinearization<'_> {
    fn dim_z(&self) -> usize {
        self.kappa.len()
    }

    fn dim_theta(&self) -> usize {
        self.problem.disc.layout.dim()
    }

    fn objective(&self) -> f64 {
        self.objective
    }

    fn gradient(&self) -> &ParamVector {
        &self.gradient
    }

    fn hess_misfit_vec(&self, v: &ParamVector) -> Result<ParamVector> {
        check_len(self.dim_z(), v.len())?;
        if v.iter().all(|x| *x == 0.0) {
            return Ok(DVector::zeros(v.len()));
        }
        Ok(DVector::from_vec(self.incremental(
            Some(v.as_slice()),
            None,
            self.problem.hessian,
        )))
    }

    fn hess_reg_vec(&self, v: &ParamVector) -> Result<ParamVector> {
        check_len(self.dim_z(), v.len())?;
        Ok(DVector::from_vec(self.problem.reg.matvec(v.as_slice())))
    }

    fn mixed_jacobian_col(&self, i: usize) -> Result<ParamVector> {
        let n = self.dim_theta();
        if i >= n {
            return Err(Error::violation(format!("auxiliary index {i} out of range (n = {n})")));
        }
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        // The mixed Jacobian is always exact, whatever the Hessian mode.
        Ok(DVector::from_vec(self.incremental(None, Some(&e), HessianMode::Full)))
    }
}

impl InverseProblem for TracerProblem {
    fn dim_z(&self) -> usize {
        self.disc.num_nodes()
    }

    fn dim_theta(&self) -> usize {
        self.disc.layout.dim()
    }

    fn objective(&self, z: &ParamVector, theta: &AuxVector) -> Result<f64> {
        let state = self.disc.forward(z.as_slice(), theta.as_slice())?;
        Ok(self.misfit(&state) + self.regularization(z.as_slice()))
    }

    fn linearize(&self, z: &ParamVector, theta: &AuxVector) -> Result<Box<dyn Linearization + '_>> {
        Ok(Box::new(TracerLinearization::new(self, z.as_slice(), theta.as_slice())?))
    }

    fn metric(&self) -> &dyn LinearOperator {
        &self.metric
    }

    fn reg_hessian_inverse(&self) -> Option<&dyn LinearOperator> {
        self.reg_inv.as_ref().map(|r| r as &dyn LinearOperator)
    }

    fn aux_labels(&self) -> Vec<AuxLabel> {
        self.disc.layout.labels()
    }
}
