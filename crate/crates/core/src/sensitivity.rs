//! Sensitivity indices on the likelihood-informed subspace and the full
//! analysis pipeline.
//!
//! With the eigenpairs `(λⱼ, vⱼ)` of `H_M v = λ H̃_R v` the projected
//! solution sensitivity `P H̃⁻¹ B eᵢ` equals `Σⱼ vⱼ (vⱼᵀBeᵢ)/(1+λⱼ)`, so
//! each index costs `r` inner products once the `B` columns are known.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linops::{
    apply_columns, cg_solve, dense_gevp, materialize, weighted_norm, CgInverse, LinearOperator,
    ParamVector, Sum, DENSE_CAP,
};
use crate::lis::{projector_apply, randomized_gevp_preconditioned, truncate, GevpBasis, GevpConfig};
use crate::optim::{newton_step, trust_region_solve, TrustRegionOptions, TrustRegionResult};
use crate::problem::{AuxLabel, FullHessian, InverseProblem, Linearization, MisfitHessian, RegHessian};
use crate::updates::{
    default_alpha, is_second_order_satisfied, second_order_shift, update_norm, FirstOrderUpdate,
    SecondOrderShift, DEFAULT_EPSILON,
};

fn coefficients(basis: &GevpBasis, bcols: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_dim("mixed Jacobian rows", basis.dim(), bcols.nrows())?;
    if let Some(j) = basis.lambda.iter().position(|&l| l == -1.0 || !l.is_finite()) {
        return Err(Error::violation(format!(
            "eigenvalue {} at position {j} makes 1 + λ singular",
            basis.lambda[j]
        )));
    }
    let mut a = basis.vectors.tr_mul(bcols);
    for (j, mut row) in a.row_iter_mut().enumerate() {
        row /= 1.0 + basis.lambda[j];
    }
    Ok(a)
}

fn gram(basis: &GevpBasis, wz: &dyn LinearOperator) -> Result<DMatrix<f64>> {
    check_dim("metric", basis.dim(), wz.dim_in())?;
    let wv = apply_columns(wz, &basis.vectors)?;
    let g = basis.vectors.tr_mul(&wv);
    Ok((&g + g.transpose()) * 0.5)
}

/// `Sᵢ = ‖Σⱼ vⱼ aⱼᵢ‖_{W_z}` with `aⱼᵢ = vⱼᵀBeᵢ/(1+λⱼ)`.
pub fn sensitivity_indices(
    basis: &GevpBasis,
    bcols: &DMatrix<f64>,
    wz: &dyn LinearOperator,
) -> Result<DVector<f64>> {
    if basis.is_empty() {
        check_dim("mixed Jacobian rows", basis.dim(), bcols.nrows())?;
        return Ok(DVector::zeros(bcols.ncols()));
    }
    let a = coefficients(basis, bcols)?;
    let g = gram(basis, wz)?;
    let ga = &g * &a;
    Ok(DVector::from_fn(bcols.ncols(), |i, _| {
        a.column(i).dot(&ga.column(i)).max(0.0).sqrt()
    }))
}

/// Indices computed with the leading `k` pairs, `k = 1..=r`, as the rows of
/// an `r × n` matrix.
pub fn index_rank_curve(
    basis: &GevpBasis,
    bcols: &DMatrix<f64>,
    wz: &dyn LinearOperator,
) -> Result<DMatrix<f64>> {
    let r = basis.rank();
    let n = bcols.ncols();
    if r == 0 {
        return Ok(DMatrix::zeros(0, n));
    }
    let a = coefficients(basis, bcols)?;
    let g = gram(basis, wz)?;
    let mut out = DMatrix::zeros(r, n);
    for i in 0..n {
        let mut sq = 0.0;
        for k in 0..r {
            let mut cross = 0.0;
            for j in 0..k {
                cross += g[(k, j)] * a[(j, i)];
            }
            sq += a[(k, i)] * (2.0 * cross + g[(k, k)] * a[(k, i)]);
            out[(k, i)] = sq.max(0.0).sqrt();
        }
    }
    Ok(out)
}

/// `Sᵢ = ‖P H⁻¹ B eᵢ‖_{W_z}` with `hsolve` applying `H⁻¹`. `hrt` is the
/// operator the basis is normalized against.
pub fn sensitivity_indices_direct_with(
    hsolve: &dyn LinearOperator,
    bcols: &DMatrix<f64>,
    basis: &GevpBasis,
    hrt: &dyn LinearOperator,
    wz: &dyn LinearOperator,
) -> Result<DVector<f64>> {
    let x = apply_columns(hsolve, bcols)?;
    let vals: Vec<f64> = (0..bcols.ncols())
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let px = projector_apply(basis, hrt, &x.column(i).into_owned())?;
            weighted_norm(&px, wz)
        })
        .collect::<Result<_>>()?;
    Ok(DVector::from_vec(vals))
}

/// Direct path with `H⁻¹` applied by CG to relative tolerance `cg_tol`.
pub fn sensitivity_indices_direct(
    h: &dyn LinearOperator,
    bcols: &DMatrix<f64>,
    basis: &GevpBasis,
    hrt: &dyn LinearOperator,
    wz: &dyn LinearOperator,
    cg_tol: f64,
) -> Result<DVector<f64>> {
    let solve = CgInverse::new(h).with_tolerance(cg_tol);
    sensitivity_indices_direct_with(&solve, bcols, basis, hrt, wz)
}

/// `H⁻¹ ≈ H_R⁻¹ − Σⱼ λⱼ/(1+λⱼ) vⱼvⱼᵀ`, exact when the basis holds the full
/// spectrum of the pencil `(H_M, H_R)`.
pub struct SpectralInverse<'a> {
    pub basis: &'a GevpBasis,
    pub hr_inv: &'a dyn LinearOperator,
}

impl LinearOperator for SpectralInverse<'_> {
    fn dim_in(&self) -> usize {
        self.basis.dim()
    }
    fn dim_out(&self) -> usize {
        self.basis.dim()
    }
    fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("spectral inverse", self.basis.dim(), x.len())?;
        let mut c = self.basis.vectors.tr_mul(x);
        for (j, cj) in c.iter_mut().enumerate() {
            let l = self.basis.lambda[j];
            *cj *= l / (1.0 + l);
        }
        Ok(self.hr_inv.apply(x)? - &self.basis.vectors * c)
    }
}

/// Dense `(H_R + c uuᵀ)⁻¹` from `H_R⁻¹` by the Sherman-Morrison formula.
struct RankOneUpdatedInverse<'a> {
    base: &'a dyn LinearOperator,
    w: DVector<f64>,
    coef: f64,
}

impl<'a> RankOneUpdatedInverse<'a> {
    fn new(base: &'a dyn LinearOperator, u: &DVector<f64>, c: f64) -> Result<Self> {
        let w = base.apply(u)?;
        let denom = 1.0 + c * u.dot(&w);
        let coef = if c == 0.0 { 0.0 } else { c / denom };
        Ok(Self { base, w, coef })
    }
}

impl LinearOperator for RankOneUpdatedInverse<'_> {
    fn dim_in(&self) -> usize {
        self.base.dim_in()
    }
    fn dim_out(&self) -> usize {
        self.base.dim_out()
    }
    fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.base.apply(x)? - &self.w * (self.coef * self.w.dot(x)))
    }
}

/// How the Newton step `n = −H⁻¹g` was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NewtonSource {
    /// Dense Cholesky of a certified positive definite `H`.
    Dense,
    /// CG converged without meeting negative curvature.
    Cg,
    /// CG truncated at negative curvature or the iteration cap.
    Truncated,
    Supplied,
}

/// Quantities controlling how much the first-order update can move the
/// indices: `s = −g/‖g‖₂`, `n = −H⁻¹g`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UpdateDiagnostics {
    pub trivial: bool,
    pub alpha: f64,
    pub g_norm: f64,
    /// `‖P n‖_{W_z}`.
    pub pn_norm: f64,
    /// `‖n‖_{W_z}`.
    pub n_norm: f64,
    pub s_dot_n: f64,
    /// `‖P n‖_{W_z} / (sᵀn + α)`.
    pub bound: f64,
    /// `‖s‖` in the dual norm of `W_z`. The stated bound holds as written
    /// when this is at most 1 (e.g. `W_z = I`); in general it must be
    /// multiplied by this factor.
    pub dual_factor: f64,
    pub bound_metric: f64,
    /// `‖V D Vᵀ g‖_{W_z} / α` with `D = diag(1/(1+λⱼ))`. Equals `bound`
    /// whenever `n` is the exact Newton step, without needing it.
    pub bound_spectral: f64,
    pub newton_source: NewtonSource,
    /// Set when `H` was not certified positive definite.
    pub heuristic: bool,
}

impl UpdateDiagnostics {
    fn trivial(alpha: f64) -> Self {
        Self {
            trivial: true,
            alpha,
            g_norm: 0.0,
            pn_norm: 0.0,
            n_norm: 0.0,
            s_dot_n: 0.0,
            bound: 0.0,
            dual_factor: 0.0,
            bound_metric: 0.0,
            bound_spectral: 0.0,
            newton_source: NewtonSource::Supplied,
            heuristic: false,
        }
    }
}

/// Diagnostics for a given Newton step `n`.
pub fn update_diagnostics(
    update: &FirstOrderUpdate,
    n: &ParamVector,
    basis: &GevpBasis,
    hrt: &dyn LinearOperator,
    wz: &dyn LinearOperator,
    newton_source: NewtonSource,
    heuristic: bool,
) -> Result<UpdateDiagnostics> {
    if update.is_trivial() {
        return Ok(UpdateDiagnostics::trivial(update.alpha));
    }
    check_dim("newton step", update.g.len(), n.len())?;
    let g_norm = update.g_norm();
    let s = -&update.g / g_norm;
    let s_dot_n = s.dot(n);
    let pn = projector_apply(basis, hrt, n)?;
    let pn_norm = weighted_norm(&pn, wz)?;
    let n_norm = weighted_norm(n, wz)?;
    let bound = pn_norm / (s_dot_n + update.alpha);
    let dual = cg_solve(wz, &s, 1e-12, 20 * s.len().max(50))?;
    let dual_factor = s.dot(&dual.x).max(0.0).sqrt();
    let gcol = DMatrix::from_column_slice(update.g.len(), 1, update.g.as_slice());
    let bound_spectral = sensitivity_indices(basis, &gcol, wz)?[0] / update.alpha;
    Ok(UpdateDiagnostics {
        trivial: false,
        alpha: update.alpha,
        g_norm,
        pn_norm,
        n_norm,
        s_dot_n,
        bound,
        dual_factor,
        bound_metric: bound * dual_factor,
        bound_spectral,
        newton_source,
        heuristic,
    })
}

/// Diagnostics with `n = −hsolve(g)`, where `hsolve` applies `H⁻¹`.
pub fn update_diagnostics_solve(
    update: &FirstOrderUpdate,
    hsolve: &dyn LinearOperator,
    basis: &GevpBasis,
    hrt: &dyn LinearOperator,
    wz: &dyn LinearOperator,
) -> Result<UpdateDiagnostics> {
    if update.is_trivial() {
        return Ok(UpdateDiagnostics::trivial(update.alpha));
    }
    let n = -hsolve.apply(&update.g)?;
    update_diagnostics(update, &n, basis, hrt, wz, NewtonSource::Supplied, false)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaRow {
    pub beta: f64,
    /// `|β|‖Pn‖/(sᵀn + α(1+β))`.
    pub bound: f64,
    pub bound_metric: f64,
}

/// Bounds on the index change when `α` becomes `α(1+β)`.
pub fn alpha_robustness(diag: &UpdateDiagnostics, betas: &[f64]) -> Result<Vec<AlphaRow>> {
    betas
        .iter()
        .map(|&beta| {
            if !(beta > -1.0 && beta < 1.0) {
                return Err(Error::violation(format!("beta must lie in (-1, 1), got {beta}")));
            }
            let bound = if diag.trivial {
                0.0
            } else {
                beta.abs() * diag.pn_norm / (diag.s_dot_n + diag.alpha * (1.0 + beta))
            };
            Ok(AlphaRow {
                beta,
                bound,
                bound_metric: bound * diag.dual_factor,
            })
        })
        .collect()
}

pub const DEFAULT_BETAS: [f64; 6] = [-0.9, -0.5, -0.1, 0.1, 0.5, 0.9];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub gevp: GevpConfig,
    pub lambda_grid: Vec<f64>,
    pub headline_lambda_min: f64,
    pub alpha: Option<f64>,
    pub epsilon: f64,
    pub betas: Vec<f64>,
    /// Largest `m` for which `H` is materialized to certify definiteness
    /// and run the direct path.
    pub dense_cap: usize,
    pub newton_tol: f64,
    pub newton_maxit: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            gevp: GevpConfig::default(),
            lambda_grid: vec![0.1, 0.5, 1.0, 2.0],
            headline_lambda_min: 1.0,
            alpha: None,
            epsilon: DEFAULT_EPSILON,
            betas: DEFAULT_BETAS.to_vec(),
            dense_cap: DENSE_CAP,
            newton_tol: 1e-8,
            newton_maxit: 500,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda_min: f64,
    pub rank: usize,
    pub indices: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GevpSummary {
    pub lambda_min: f64,
    pub rank: usize,
    pub target_rank: usize,
    pub sketch_columns: usize,
    pub hm_applications: usize,
    pub oversampling: usize,
    pub seed: u64,
    pub first_excluded: Option<f64>,
    pub max_residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UpdateSummary {
    pub alpha: f64,
    pub alpha_overridden: bool,
    pub g_norm: f64,
    pub constant: f64,
    pub norm: f64,
    pub trivial: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SecondOrderSummary {
    /// Smallest generalized eigenvalue of `(H_M, H_R)` from the dense check.
    pub min_eigenvalue: f64,
    pub satisfied: bool,
    pub shift: SecondOrderShift,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub m: usize,
    pub n: usize,
    pub objective: f64,
    pub labels: Vec<AuxLabel>,
    pub headline_lambda_min: f64,
    pub rank: usize,
    pub indices: Vec<f64>,
    /// Direct-path indices at the headline threshold, when `H` was
    /// certified positive definite.
    pub direct_indices: Option<Vec<f64>>,
    pub spectrum: Vec<f64>,
    pub sweep: Vec<SweepRow>,
    /// Row `k` holds the indices computed with the leading `k + 1` pairs.
    #[serde(skip)]
    pub rank_curve: DMatrix<f64>,
    pub gevp: GevpSummary,
    pub update: UpdateSummary,
    pub hessian_certified_spd: bool,
    pub second_order: Option<SecondOrderSummary>,
    pub diagnostics: UpdateDiagnostics,
    pub alpha_robustness: Vec<AlphaRow>,
}

impl SensitivityReport {
    /// Indices grouped by label group, in first-appearance order.
    pub fn grouped(&self) -> Vec<(String, Vec<(usize, f64)>)> {
        let mut out: Vec<(String, Vec<(usize, f64)>)> = Vec::new();
        for (label, &s) in self.labels.iter().zip(&self.indices) {
            match out.iter_mut().find(|(g, _)| *g == label.group) {
                Some((_, v)) => v.push((label.index, s)),
                None => out.push((label.group.clone(), vec![(label.index, s)])),
            }
        }
        out
    }

    pub fn indices_csv(&self) -> String {
        let mut out = String::from("group,index,S");
        if self.direct_indices.is_some() {
            out.push_str(",S_direct");
        }
        out.push('\n');
        for (i, (label, s)) in self.labels.iter().zip(&self.indices).enumerate() {
            write!(out, "{},{},{}", label.group, label.index, s).unwrap();
            if let Some(d) = &self.direct_indices {
                write!(out, ",{}", d[i]).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn sweep_csv(&self) -> String {
        let mut out = String::from("group,index");
        for row in &self.sweep {
            write!(out, ",lambda_min={}", row.lambda_min).unwrap();
        }
        out.push('\n');
        for (i, label) in self.labels.iter().enumerate() {
            write!(out, "{},{}", label.group, label.index).unwrap();
            for row in &self.sweep {
                write!(out, ",{}", row.indices[i]).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn spectrum_csv(&self) -> String {
        let mut out = String::from("j,lambda\n");
        for (j, l) in self.spectrum.iter().enumerate() {
            writeln!(out, "{},{}", j + 1, l).unwrap();
        }
        out
    }

    pub fn rank_curve_csv(&self) -> String {
        let mut out = String::from("rank");
        for label in &self.labels {
            write!(out, ",{label}").unwrap();
        }
        out.push('\n');
        for k in 0..self.rank_curve.nrows() {
            write!(out, "{}", k + 1).unwrap();
            for i in 0..self.rank_curve.ncols() {
                write!(out, ",{}", self.rank_curve[(k, i)]).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn alpha_csv(&self) -> String {
        let mut out = String::from("beta,bound,bound_metric\n");
        for r in &self.alpha_robustness {
            writeln!(out, "{},{},{}", r.beta, r.bound, r.bound_metric).unwrap();
        }
        out
    }

    /// Writes `report.json`, `indices.csv`, `sweep.csv`, `spectrum.csv`,
    /// `rank_curve.csv` and `alpha.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(self)? + "\n")?;
        fs::write(dir.join("indices.csv"), self.indices_csv())?;
        fs::write(dir.join("sweep.csv"), self.sweep_csv())?;
        fs::write(dir.join("spectrum.csv"), self.spectrum_csv())?;
        fs::write(dir.join("rank_curve.csv"), self.rank_curve_csv())?;
        fs::write(dir.join("alpha.csv"), self.alpha_csv())?;
        Ok(())
    }
}

/// Everything the pipeline computed, for callers that need more than the
/// report (tests, verification).
pub struct PipelineArtifacts {
    pub report: SensitivityReport,
    pub basis: GevpBasis,
    pub bcols: DMatrix<f64>,
    pub update: FirstOrderUpdate,
    pub newton: Option<ParamVector>,
}

/// Indices at `z*` (no solve).
pub fn run_pipeline(
    problem: &dyn InverseProblem,
    z_star: &ParamVector,
    theta_bar: &DVector<f64>,
    cfg: &PipelineConfig,
) -> Result<SensitivityReport> {
    Ok(run_pipeline_full(problem, z_star, theta_bar, cfg)?.report)
}

/// Solves from `z0` first, then runs the analysis at the returned iterate.
pub fn run_pipeline_with_solve(
    problem: &dyn InverseProblem,
    z0: &ParamVector,
    theta_bar: &DVector<f64>,
    opts: &TrustRegionOptions,
    cfg: &PipelineConfig,
) -> Result<(SensitivityReport, TrustRegionResult)> {
    let solve = trust_region_solve(problem, z0, theta_bar, opts).map_err(|e| e.in_stage("solve"))?;
    let report = run_pipeline(problem, &solve.z, theta_bar, cfg)?;
    Ok((report, solve))
}

pub fn run_pipeline_full(
    problem: &dyn InverseProblem,
    z_star: &ParamVector,
    theta_bar: &DVector<f64>,
    cfg: &PipelineConfig,
) -> Result<PipelineArtifacts> {
    let m = problem.dim_z();
    let n = problem.dim_theta();
    check_dim("z*", m, z_star.len())?;
    check_dim("theta_bar", n, theta_bar.len())?;
    if cfg.lambda_grid.iter().any(|&l| !(l > 0.0)) || !(cfg.headline_lambda_min > 0.0) {
        return Err(Error::Config("eigenvalue thresholds must be positive".into()));
    }

    let lin = problem.linearize(z_star, theta_bar).map_err(|e| e.in_stage("linearize"))?;
    let lin: &dyn Linearization = lin.as_ref();
    let g = lin.gradient().clone();

    let (alpha, overridden) = match cfg.alpha {
        Some(a) => (a, true),
        None => (default_alpha(z_star), false),
    };
    let update = FirstOrderUpdate::new(g.clone(), alpha, z_star.clone()).map_err(|e| e.in_stage("update"))?;
    let hrt = Sum(RegHessian(lin), update.hessian());
    let precond = match problem.reg_hessian_inverse() {
        Some(inv) => Some(RankOneUpdatedInverse::new(inv, &update.g, update.hessian().coef)?),
        None => None,
    };

    let lambda_floor = cfg
        .lambda_grid
        .iter()
        .copied()
        .chain(std::iter::once(cfg.headline_lambda_min))
        .fold(f64::INFINITY, f64::min);
    let gevp_cfg = GevpConfig {
        lambda_min: lambda_floor,
        ..cfg.gevp.clone()
    };
    let basis = randomized_gevp_preconditioned(
        &MisfitHessian(lin),
        &hrt,
        precond.as_ref().map(|p| p as &dyn LinearOperator),
        &gevp_cfg,
    )
    .map_err(|e| e.in_stage("gevp"))?;

    let cols: Vec<DVector<f64>> = (0..n)
        .into_par_iter()
        .map(|i| lin.mixed_jacobian_col(i))
        .collect::<Result<_>>()
        .map_err(|e| e.in_stage("mixed-jacobian"))?;
    let bcols = if cols.is_empty() {
        DMatrix::zeros(m, 0)
    } else {
        DMatrix::from_columns(&cols)
    };

    let wz = problem.metric();
    let headline = truncate(&basis, cfg.headline_lambda_min);
    let indices = sensitivity_indices(&headline, &bcols, wz).map_err(|e| e.in_stage("indices"))?;
    let mut grid = cfg.lambda_grid.clone();
    grid.sort_by(f64::total_cmp);
    let sweep = grid
        .iter()
        .map(|&lmin| -> Result<SweepRow> {
            let b = truncate(&basis, lmin);
            Ok(SweepRow {
                lambda_min: lmin,
                rank: b.rank(),
                indices: sensitivity_indices(&b, &bcols, wz)?.as_slice().to_vec(),
            })
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_stage("indices"))?;
    let rank_curve = index_rank_curve(&basis, &bcols, wz)?;

    // Dense certification of H = H_M + H_R for small problems.
    let mut certified = false;
    let mut second_order = None;
    let mut direct_indices = None;
    let mut newton = None;
    let mut source = NewtonSource::Truncated;
    if m <= cfg.dense_cap {
        let h = materialize(&FullHessian(lin), cfg.dense_cap).map_err(|e| e.in_stage("certify"))?;
        let h = (&h + h.transpose()) * 0.5;
        let hr = materialize(&RegHessian(lin), cfg.dense_cap)?;
        let hr = (&hr + hr.transpose()) * 0.5;
        let hm = &h - &hr;
        if let Ok((lambda, _)) = dense_gevp(&hm, &hr) {
            let min = lambda.iter().copied().fold(f64::INFINITY, f64::min);
            second_order = Some(SecondOrderSummary {
                min_eigenvalue: min,
                satisfied: is_second_order_satisfied(lambda.as_slice()),
                shift: second_order_shift(lambda.as_slice(), cfg.epsilon),
            });
        }
        if let Some(chol) = Cholesky::new(h.clone()) {
            certified = true;
            newton = Some(-chol.solve(&g));
            source = NewtonSource::Dense;
            let ht = &h + materialize(&update.hessian(), cfg.dense_cap)?;
            if let Some(chol_t) = Cholesky::new(ht) {
                let inv = chol_t.inverse();
                direct_indices = Some(
                    sensitivity_indices_direct_with(&inv, &bcols, &headline, &hrt, wz)?
                        .as_slice()
                        .to_vec(),
                );
            }
        }
    }
    if newton.is_none() && !update.is_trivial() {
        let step = newton_step(
            &FullHessian(lin),
            &g,
            problem.reg_hessian_inverse(),
            cfg.newton_tol,
            cfg.newton_maxit,
        )
        .map_err(|e| e.in_stage("newton"))?;
        source = if step.negative_curvature || step.residual > cfg.newton_tol {
            NewtonSource::Truncated
        } else {
            NewtonSource::Cg
        };
        newton = Some(step.p);
    }
    let diagnostics = match &newton {
        Some(nv) => update_diagnostics(&update, nv, &headline, &hrt, wz, source, !certified)?,
        None => UpdateDiagnostics::trivial(alpha),
    };
    let alpha_rows = alpha_robustness(&diagnostics, &cfg.betas)?;

    let report = SensitivityReport {
        m,
        n,
        objective: lin.objective(),
        labels: problem.aux_labels(),
        headline_lambda_min: cfg.headline_lambda_min,
        rank: headline.rank(),
        indices: indices.as_slice().to_vec(),
        direct_indices,
        spectrum: basis.lambda.as_slice().to_vec(),
        sweep,
        rank_curve,
        gevp: GevpSummary {
            lambda_min: basis.lambda_min,
            rank: basis.rank(),
            target_rank: basis.target_rank,
            sketch_columns: basis.sketch_columns,
            hm_applications: basis.hm_applications,
            oversampling: basis.oversampling,
            seed: basis.seed,
            first_excluded: basis.first_excluded,
            max_residual: basis.residuals.iter().copied().fold(0.0, f64::max),
        },
        update: UpdateSummary {
            alpha,
            alpha_overridden: overridden,
            g_norm: update.g_norm(),
            constant: update.constant(),
            norm: update_norm(&update),
            trivial: update.is_trivial(),
        },
        hessian_certified_spd: certified,
        second_order,
        diagnostics,
        alpha_robustness: alpha_rows,
    };
    Ok(PipelineArtifacts {
        report,
        basis,
        bcols,
        update,
        newton,
    })
}
