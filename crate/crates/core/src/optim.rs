//! Trust-region Newton solver with Steihaug-Toint truncated CG.
//!
//! When a preconditioner `M⁻¹` is supplied the trust region is measured in
//! the `M`-norm, which for `M = H_R` is the norm induced by the
//! regularization.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linops::{LinearOperator, ParamVector};
use crate::problem::{FullHessian, InverseProblem, Linearization};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrustRegionOptions {
    pub max_iter: usize,
    /// Absolute gradient tolerance.
    pub gtol: f64,
    /// Gradient tolerance relative to the initial gradient norm.
    pub gtol_rel: f64,
    pub radius0: f64,
    pub max_radius: f64,
    /// Minimum ratio of actual to predicted reduction for acceptance.
    pub eta: f64,
    pub cg_maxit: usize,
    /// Precondition the subproblem with the problem's `H_R⁻¹`, if it has one.
    pub precondition: bool,
}

impl Default for TrustRegionOptions {
    fn default() -> Self {
        Self {
            max_iter: 50,
            gtol: 1e-10,
            gtol_rel: 0.0,
            radius0: 1.0,
            max_radius: 1e6,
            eta: 1e-4,
            cg_maxit: 200,
            precondition: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Converged,
    MaxIterations,
    Stagnated,
    EvaluationFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iteration: usize,
    pub objective: f64,
    pub gradient_norm: f64,
    pub step_norm: f64,
    pub radius: f64,
    pub predicted_reduction: f64,
    pub actual_reduction: f64,
    pub cauchy_reduction: f64,
    pub cg_iterations: usize,
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct TrustRegionResult {
    pub z: ParamVector,
    pub objective: f64,
    pub gradient: ParamVector,
    pub termination: Termination,
    pub history: Vec<HistoryRow>,
    /// Message of the evaluation error that stopped the solve, if any.
    pub failure: Option<String>,
}

impl TrustRegionResult {
    pub fn iterations(&self) -> usize {
        self.history.last().map_or(0, |r| r.iteration)
    }
}

pub fn history_csv(history: &[HistoryRow]) -> String {
    let mut out = String::from(
        "iteration,objective,gradient_norm,step_norm,radius,predicted_reduction,actual_reduction,cauchy_reduction,cg_iterations,accepted\n",
    );
    for r in history {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.iteration,
            r.objective,
            r.gradient_norm,
            r.step_norm,
            r.radius,
            r.predicted_reduction,
            r.actual_reduction,
            r.cauchy_reduction,
            r.cg_iterations,
            r.accepted
        )
        .unwrap();
    }
    out
}

pub fn write_history_csv(path: impl AsRef<Path>, history: &[HistoryRow]) -> Result<()> {
    fs::write(path, history_csv(history))?;
    Ok(())
}

/// Result of a truncated CG solve of `H p = −g`.
#[derive(Debug, Clone)]
pub struct TruncatedStep {
    pub p: DVector<f64>,
    pub hp: DVector<f64>,
    pub iterations: usize,
    /// Relative residual `‖Hp + g‖/‖g‖` at exit.
    pub residual: f64,
    pub hit_boundary: bool,
    pub negative_curvature: bool,
    /// `‖p‖_M`, the step length in the trust-region norm.
    pub m_norm: f64,
    /// Model reduction `−(gᵀp + ½pᵀHp)` of the first CG step, i.e. of the
    /// (preconditioned) Cauchy point.
    pub cauchy_reduction: f64,
}

impl TruncatedStep {
    /// `−(gᵀp + ½pᵀHp)`.
    pub fn model_reduction(&self, g: &DVector<f64>) -> f64 {
        -(g.dot(&self.p) + 0.5 * self.p.dot(&self.hp))
    }
}

/// Steihaug-Toint CG on `min gᵀp + ½pᵀHp` subject to `‖p‖_M ≤ radius`
/// (no constraint when `radius` is `None`). Stops on relative residual
/// `tol`, on the boundary, or at negative curvature. Without a radius,
/// negative curvature returns the current iterate, or the preconditioned
/// steepest-descent direction if no step has been taken.
pub fn steihaug_cg(
    h: &dyn LinearOperator,
    g: &DVector<f64>,
    precond: Option<&dyn LinearOperator>,
    radius: Option<f64>,
    tol: f64,
    maxit: usize,
) -> Result<TruncatedStep> {
    let n = g.len();
    let gnorm = g.norm();
    let mut out = TruncatedStep {
        p: DVector::zeros(n),
        hp: DVector::zeros(n),
        iterations: 0,
        residual: 0.0,
        hit_boundary: false,
        negative_curvature: false,
        m_norm: 0.0,
        cauchy_reduction: 0.0,
    };
    if gnorm == 0.0 {
        return Ok(out);
    }
    let minv = |r: &DVector<f64>| -> Result<DVector<f64>> {
        match precond {
            Some(m) => m.apply(r),
            None => Ok(r.clone()),
        }
    };
    let mut r = g.clone();
    let mut y = minv(&r)?;
    let mut ry = r.dot(&y);
    if !(ry > 0.0) {
        return Err(Error::violation("trust-region preconditioner is not positive definite"));
    }
    let mut d = -&y;
    // M-inner products of the iterate and direction, kept by recurrence.
    let mut zz = 0.0;
    let mut zd = 0.0;
    let mut dd = ry;

    let to_boundary = |zz: f64, zd: f64, dd: f64, delta: f64| -> f64 {
        let disc = (zd * zd + dd * (delta * delta - zz)).max(0.0);
        (-zd + disc.sqrt()) / dd
    };

    for k in 0..maxit {
        let hd = h.apply(&d)?;
        let curv = d.dot(&hd);
        if curv <= 0.0 {
            out.negative_curvature = true;
            match radius {
                Some(delta) => {
                    let tau = to_boundary(zz, zd, dd, delta);
                    out.p += &d * tau;
                    out.hp += &hd * tau;
                    out.hit_boundary = true;
                }
                None if k == 0 => {
                    out.p = d.clone();
                    out.hp = hd.clone();
                    zz = dd;
                }
                None => {}
            }
            out.iterations = k + 1;
            if k == 0 {
                out.cauchy_reduction = out.model_reduction(g);
            }
            break;
        }
        let a = ry / curv;
        let zz_next = zz + 2.0 * a * zd + a * a * dd;
        if let Some(delta) = radius {
            if zz_next >= delta * delta {
                let tau = to_boundary(zz, zd, dd, delta);
                out.p += &d * tau;
                out.hp += &hd * tau;
                out.hit_boundary = true;
                out.iterations = k + 1;
                if k == 0 {
                    out.cauchy_reduction = out.model_reduction(g);
                }
                break;
            }
        }
        out.p += &d * a;
        out.hp += &hd * a;
        r += &hd * a;
        zz = zz_next;
        out.iterations = k + 1;
        if k == 0 {
            out.cauchy_reduction = out.model_reduction(g);
        }
        if r.norm() <= tol * gnorm {
            break;
        }
        y = minv(&r)?;
        let ry_next = r.dot(&y);
        let beta = ry_next / ry;
        zd = beta * (zd + a * dd);
        dd = ry_next + beta * beta * dd;
        ry = ry_next;
        d = -&y + &d * beta;
    }
    out.residual = (&out.hp + g).norm() / gnorm;
    out.m_norm = match (out.hit_boundary, radius) {
        (true, Some(delta)) => delta,
        _ => zz.max(0.0).sqrt(),
    };
    Ok(out)
}

/// Approximate Newton step `n ≈ −H⁻¹g` by CG, truncated at negative
/// curvature. Used when `H` cannot be certified positive definite.
pub fn newton_step(
    h: &dyn LinearOperator,
    g: &DVector<f64>,
    precond: Option<&dyn LinearOperator>,
    tol: f64,
    maxit: usize,
) -> Result<TruncatedStep> {
    steihaug_cg(h, g, precond, None, tol, maxit)
}

/// Minimizes `J(·; θ)` from `z0` by a trust-region Newton method.
///
/// Evaluation failures stop the solve and return the last accepted iterate
/// with [`Termination::EvaluationFailed`].
pub fn trust_region_solve(
    problem: &dyn InverseProblem,
    z0: &ParamVector,
    theta: &DVector<f64>,
    opts: &TrustRegionOptions,
) -> Result<TrustRegionResult> {
    let precond = if opts.precondition {
        problem.reg_hessian_inverse()
    } else {
        None
    };
    let mut z = z0.clone();
    let mut lin: Box<dyn Linearization + '_> = problem.linearize(&z, theta).map_err(|e| e.in_stage("solve"))?;
    let mut g = lin.gradient().clone();
    let mut objective = lin.objective();
    let g0 = g.norm();
    let tol = opts.gtol.max(opts.gtol_rel * g0);
    let mut radius = opts.radius0;
    let mut history = vec![HistoryRow {
        iteration: 0,
        objective,
        gradient_norm: g0,
        step_norm: 0.0,
        radius,
        predicted_reduction: 0.0,
        actual_reduction: 0.0,
        cauchy_reduction: 0.0,
        cg_iterations: 0,
        accepted: true,
    }];
    let finish = |z: ParamVector, objective, g, termination, history, failure| TrustRegionResult {
        z,
        objective,
        gradient: g,
        termination,
        history,
        failure,
    };
    if opts.max_iter == 0 {
        return Ok(finish(z, objective, g, Termination::MaxIterations, history, None));
    }

    for it in 1..=opts.max_iter {
        let gnorm = g.norm();
        if gnorm <= tol {
            return Ok(finish(z, objective, g, Termination::Converged, history, None));
        }
        let forcing = (gnorm / g0.max(f64::MIN_POSITIVE)).sqrt().min(0.5);
        let step = steihaug_cg(&FullHessian(lin.as_ref()), &g, precond, Some(radius), forcing, opts.cg_maxit)?;
        let pred = step.model_reduction(&g);
        let trial = &z + &step.p;
        let trial_obj = match problem.objective(&trial, theta) {
            Ok(v) if v.is_finite() => Some(v),
            Ok(_) => None,
            Err(e) => {
                log::warn!("trust region: objective evaluation failed at iteration {it}: {e}");
                None
            }
        };
        let actual = trial_obj.map_or(f64::NEG_INFINITY, |v| objective - v);
        let rho = if pred > 0.0 { actual / pred } else { f64::NEG_INFINITY };
        if rho < 0.25 {
            radius = 0.25 * step.m_norm.min(radius);
        } else if rho > 0.75 && step.hit_boundary {
            radius = (2.0 * radius).min(opts.max_radius);
        }
        let accepted = rho > opts.eta && actual > 0.0;
        if accepted {
            match problem.linearize(&trial, theta) {
                Ok(next) => {
                    lin = next;
                    z = trial;
                    objective = lin.objective();
                    g = lin.gradient().clone();
                }
                Err(e) => {
                    history.push(row(it, objective, &g, &step, radius, pred, actual, false));
                    return Ok(finish(z, objective, g, Termination::EvaluationFailed, history, Some(e.to_string())));
                }
            }
        }
        history.push(row(it, objective, &g, &step, radius, pred, actual, accepted));
        if radius < 1e-14 * (1.0 + z.norm()) {
            return Ok(finish(z, objective, g, Termination::Stagnated, history, None));
        }
    }
    let termination = if g.norm() <= tol {
        Termination::Converged
    } else {
        Termination::MaxIterations
    };
    Ok(finish(z, objective, g, termination, history, None))
}

#[allow(clippy::too_many_arguments)]
fn row(
    iteration: usize,
    objective: f64,
    g: &DVector<f64>,
    step: &TruncatedStep,
    radius: f64,
    pred: f64,
    actual: f64,
    accepted: bool,
) -> HistoryRow {
    HistoryRow {
        iteration,
        objective,
        gradient_norm: g.norm(),
        step_norm: step.p.norm(),
        radius,
        predicted_reduction: pred,
        actual_reduction: actual,
        cauchy_reduction: step.cauchy_reduction,
        cg_iterations: step.iterations,
        accepted,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{QuadraticConfig, RandomQuadratic};
    use nalgebra::{dmatrix, dvector, DMatrix};

    fn random_model(seed: u64) -> crate::problem::QuadraticModel {
        let setup = QuadraticConfig {
            random: Some(RandomQuadratic { m: 25, n: 3, m_obs: 20, scale: 10.0, decay: 0.8, reg: 1e-2, seed }),
            ..Default::default()
        }
        .resolve(Path::new("."))
        .unwrap();
        let d = setup.generate_data(seed).unwrap();
        setup.into_model(Some(d)).unwrap()
    }

    #[test]
    fn zero_budget_is_passthrough() {
        let q = random_model(1);
        let z0 = DVector::from_element(25, 0.3);
        let res = trust_region_solve(&q, &z0, &DVector::zeros(3), &TrustRegionOptions { max_iter: 0, ..Default::default() }).unwrap();
        assert_eq!(res.z, z0);
        assert_eq!(res.history.len(), 1);
    }

    #[test]
    fn converges_on_quadratic() {
        let q = random_model(2);
        let theta = DVector::zeros(3);
        let opts = TrustRegionOptions { max_iter: 100, gtol: 1e-9, ..Default::default() };
        let res = trust_region_solve(&q, &DVector::zeros(25), &theta, &opts).unwrap();
        assert_eq!(res.termination, Termination::Converged);
        let zs = q.minimizer(&theta).unwrap();
        assert!((&res.z - &zs).norm() <= 1e-8 * zs.norm());
        let accepted: Vec<&HistoryRow> = res.history.iter().filter(|r| r.accepted).collect();
        for w in accepted.windows(2) {
            assert!(w[1].objective <= w[0].objective);
        }
        for r in res.history.iter().skip(1).filter(|r| r.accepted) {
            assert!(r.predicted_reduction >= r.cauchy_reduction * (1.0 - 1e-12));
        }
    }

    #[test]
    fn steihaug_follows_negative_curvature_to_boundary() {
        let h = dmatrix![1.0, 0.0; 0.0, -1.0];
        let g = dvector![0.0, 1.0];
        let s = steihaug_cg(&h, &g, None, Some(2.0), 1e-10, 10).unwrap();
        assert!(s.negative_curvature && s.hit_boundary);
        assert!((s.p.norm() - 2.0).abs() < 1e-12);
        assert!(s.model_reduction(&g) > 0.0);
    }

    #[test]
    fn unconstrained_step_solves_spd_system() {
        let h = dmatrix![4.0, 1.0; 1.0, 3.0];
        let g = dvector![1.0, 2.0];
        let s = newton_step(&h, &g, None, 1e-12, 10).unwrap();
        let exact = -h.clone().cholesky().unwrap().solve(&g);
        assert!((s.p - exact).norm() < 1e-10);
        let m = DMatrix::from_diagonal(&dvector![0.25, 1.0 / 3.0]);
        let s = newton_step(&h, &g, Some(&m), 1e-12, 10).unwrap();
        assert!(s.residual < 1e-10);
    }

    #[test]
    fn history_csv_header_and_rows() {
        let q = random_model(3);
        let res = trust_region_solve(&q, &DVector::zeros(25), &DVector::zeros(3), &TrustRegionOptions { max_iter: 3, ..Default::default() }).unwrap();
        let text = history_csv(&res.history);
        assert!(text.starts_with("iteration,objective,gradient_norm,step_norm,radius"));
        assert_eq!(text.lines().count(), res.history.len() + 1);
    }
}
