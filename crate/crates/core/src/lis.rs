//! Likelihood-informed subspace.
//!
//! The leading generalized eigenpairs of `H_M v = λ (H_R + H_R̃) v` span the
//! directions where the data dominate the regularization. They are computed
//! by a randomized sketch of `(H_R + H_R̃)⁻¹ H_M` whose rank grows until the
//! `r`-th eigenvalue estimate falls below a threshold.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linops::{
    apply_columns, csv, dense_sym_eig, gaussian_matrix, pcg_solve, relative_skew, BOrthoBasis,
    LinearOperator, ParamVector, DEFAULT_CG_TOL,
};

/// Largest relative skew of `QᵀH_M Q` accepted before the sketch is
/// declared inconsistent (`H_M` not symmetric or inner solves inaccurate).
pub const SKEW_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GevpConfig {
    pub oversampling: usize,
    pub initial_rank: usize,
    pub rank_increment: usize,
    pub lambda_min: f64,
    pub seed: u64,
    pub cg_tol: f64,
    pub cg_maxit: usize,
}

impl Default for GevpConfig {
    fn default() -> Self {
        Self {
            oversampling: 20,
            initial_rank: 8,
            rank_increment: 8,
            lambda_min: 1.0,
            seed: 0,
            cg_tol: DEFAULT_CG_TOL,
            cg_maxit: 2000,
        }
    }
}

impl GevpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.initial_rank == 0 || self.rank_increment == 0 {
            return Err(Error::Config("initial_rank and rank_increment must be at least 1".into()));
        }
        if !(self.lambda_min > 0.0) {
            return Err(Error::Config(format!("lambda_min must be positive, got {}", self.lambda_min)));
        }
        if !(self.cg_tol > 0.0) || self.cg_maxit == 0 {
            return Err(Error::Config("cg_tol and cg_maxit must be positive".into()));
        }
        Ok(())
    }
}

/// Leading generalized eigenpairs, `vⱼᵀ(H_R + H_R̃)vⱼ = 1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GevpBasis {
    pub lambda: DVector<f64>,
    /// Eigenvectors as columns, `m × r`.
    pub vectors: DMatrix<f64>,
    /// Threshold the basis was truncated at.
    pub lambda_min: f64,
    /// Largest computed eigenvalue below `lambda_min`, if any.
    pub first_excluded: Option<f64>,
    /// `‖H_M vⱼ − λⱼ(H_R + H_R̃)vⱼ‖₂` per returned pair.
    pub residuals: Vec<f64>,
    /// Final target rank of the sketch loop.
    pub target_rank: usize,
    pub sketch_columns: usize,
    pub hm_applications: usize,
    pub oversampling: usize,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct BasisManifest {
    lambda_min: f64,
    first_excluded: Option<f64>,
    residuals: Vec<f64>,
    target_rank: usize,
    sketch_columns: usize,
    hm_applications: usize,
    oversampling: usize,
    seed: u64,
}

impl GevpBasis {
    pub fn empty(dim: usize, lambda_min: f64) -> Self {
        Self {
            lambda: DVector::zeros(0),
            vectors: DMatrix::zeros(dim, 0),
            lambda_min,
            first_excluded: None,
            residuals: Vec::new(),
            target_rank: 0,
            sketch_columns: 0,
            hm_applications: 0,
            oversampling: 0,
            seed: 0,
        }
    }

    /// A basis from known pairs, e.g. a dense decomposition. Columns of
    /// `vectors` must be normalized against the regularization operator.
    pub fn from_pairs(lambda: DVector<f64>, vectors: DMatrix<f64>, lambda_min: f64) -> Self {
        let mut b = Self::empty(vectors.nrows(), lambda_min);
        b.residuals = vec![0.0; lambda.len()];
        b.target_rank = lambda.len();
        b.lambda = lambda;
        b.vectors = vectors;
        b
    }

    pub fn rank(&self) -> usize {
        self.lambda.len()
    }

    pub fn dim(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rank() == 0
    }

    /// Writes `eigenvalues.csv`, `eigenvectors.csv` and `basis.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        csv::write_vector_csv(dir.join("eigenvalues.csv"), &self.lambda)?;
        csv::write_matrix_csv(dir.join("eigenvectors.csv"), &self.vectors)?;
        let manifest = BasisManifest {
            lambda_min: self.lambda_min,
            first_excluded: self.first_excluded,
            residuals: self.residuals.clone(),
            target_rank: self.target_rank,
            sketch_columns: self.sketch_columns,
            hm_applications: self.hm_applications,
            oversampling: self.oversampling,
            seed: self.seed,
        };
        fs::write(dir.join("basis.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let lambda = csv::read_vector_csv(dir.join("eigenvalues.csv"))?;
        let vectors = csv::read_matrix_csv(dir.join("eigenvectors.csv"))?;
        check_dim("stored eigenvectors", lambda.len(), vectors.ncols())?;
        let m: BasisManifest = serde_json::from_str(&fs::read_to_string(dir.join("basis.json"))?)?;
        Ok(Self {
            lambda,
            vectors,
            lambda_min: m.lambda_min,
            first_excluded: m.first_excluded,
            residuals: m.residuals,
            target_rank: m.target_rank,
            sketch_columns: m.sketch_columns,
            hm_applications: m.hm_applications,
            oversampling: m.oversampling,
            seed: m.seed,
        })
    }
}

/// Randomized generalized eigensolver with unpreconditioned inner CG.
pub fn randomized_gevp(
    hm: &dyn LinearOperator,
    hrt: &dyn LinearOperator,
    cfg: &GevpConfig,
) -> Result<GevpBasis> {
    randomized_gevp_preconditioned(hm, hrt, None, cfg)
}

/// Randomized generalized eigensolver for `H_M v = λ H̃_R v`.
///
/// The Gaussian sketch starts with `r₀ + p` columns and gains `Δr` columns
/// per round. Products with `H_M` are cached across rounds, both for the
/// sketch `Y = H̃_R⁻¹ H_M Ω` and for the projected matrix `QᵀH_M Q`, so the
/// loop applies `H_M` exactly `2(r + p)` times for a final target rank `r`
/// (fewer if the sketch is capped at `m` or loses dependent columns).
/// `precond` approximates `H̃_R⁻¹` inside the CG solves.
pub fn randomized_gevp_preconditioned(
    hm: &dyn LinearOperator,
    hrt: &dyn LinearOperator,
    precond: Option<&dyn LinearOperator>,
    cfg: &GevpConfig,
) -> Result<GevpBasis> {
    cfg.validate()?;
    let m = hm.dim_in();
    check_dim("gevp H_M", m, hm.dim_out())?;
    check_dim("gevp regularization operator", m, hrt.dim_in())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut basis = BOrthoBasis::empty(m);
    let mut hmq = DMatrix::<f64>::zeros(m, 0);
    let mut target = cfg.initial_rank;
    let mut columns = 0usize;
    let mut hm_apps = 0usize;
    let mut round = 0usize;

    loop {
        let wanted = (target + cfg.oversampling).min(m);
        let new = wanted.saturating_sub(columns);
        if new > 0 {
            let omega = gaussian_matrix(m, new, &mut rng);
            let y_cols: Vec<DVector<f64>> = (0..new)
                .into_par_iter()
                .map(|j| -> Result<DVector<f64>> {
                    let hw = hm.apply(&omega.column(j).into_owned())?;
                    Ok(pcg_solve(hrt, &hw, precond, cfg.cg_tol, cfg.cg_maxit)?.x)
                })
                .collect::<Result<_>>()?;
            hm_apps += new;
            columns += new;
            let y = DMatrix::from_columns(&y_cols);
            let before = basis.len();
            let ext = basis.extend(&y, hrt)?;
            if !ext.dropped.is_empty() {
                log::warn!(
                    "randomized_gevp: {} sketch columns dropped as dependent in round {round}",
                    ext.dropped.len()
                );
            }
            let added = basis.q.columns(before, basis.len() - before).into_owned();
            let hm_added = apply_columns(hm, &added)?;
            hm_apps += added.ncols();
            hmq = concat_columns(&hmq, &hm_added);
        }

        let k = basis.len();
        if k == 0 {
            log::info!("randomized_gevp: sketch range is empty, H_M annihilates the sketch");
            let mut out = GevpBasis::empty(m, cfg.lambda_min);
            out.target_rank = target;
            out.sketch_columns = columns;
            out.hm_applications = hm_apps;
            out.oversampling = cfg.oversampling;
            out.seed = cfg.seed;
            return Ok(out);
        }
        let t = basis.q.tr_mul(&hmq);
        let skew = relative_skew(&t);
        if skew > SKEW_TOL {
            return Err(Error::violation(format!(
                "projected misfit Hessian is not symmetric (relative skew {skew:.2e}); check H_M symmetry and inner solve accuracy"
            )));
        }
        let pair = dense_sym_eig(&((&t + t.transpose()) * 0.5))?;
        let exhausted = columns >= m || k < target.min(m);
        let lambda_iter = pair.lambda[(target.min(k)) - 1];
        log::debug!("randomized_gevp round {round}: rank {target}, {k} basis vectors, lambda_r = {lambda_iter:.3e}");
        if lambda_iter <= cfg.lambda_min || exhausted {
            return Ok(finish(&basis, &hmq, &pair.lambda, &pair.s, target, columns, hm_apps, cfg));
        }
        target += cfg.rank_increment;
        round += 1;
    }
}

fn concat_columns(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

#[allow(clippy::too_many_arguments)]
fn finish(
    basis: &BOrthoBasis,
    hmq: &DMatrix<f64>,
    lambda: &DVector<f64>,
    s: &DMatrix<f64>,
    target: usize,
    columns: usize,
    hm_apps: usize,
    cfg: &GevpConfig,
) -> GevpBasis {
    let usable = target.min(lambda.len());
    let keep: Vec<usize> = (0..usable).filter(|&j| lambda[j] >= cfg.lambda_min).collect();
    let first_excluded = (0..lambda.len()).find(|&j| lambda[j] < cfg.lambda_min).map(|j| lambda[j]);
    let m = basis.q.nrows();
    let mut vectors = DMatrix::zeros(m, keep.len());
    let mut residuals = Vec::with_capacity(keep.len());
    for (dst, &j) in keep.iter().enumerate() {
        let sj = s.column(j);
        let v = &basis.q * sj;
        let bv = &basis.bq * sj;
        let norm = v.dot(&bv).sqrt();
        let hv = hmq * sj;
        residuals.push((hv - &bv * lambda[j]).norm() / norm);
        vectors.set_column(dst, &(v / norm));
    }
    GevpBasis {
        lambda: DVector::from_iterator(keep.len(), keep.iter().map(|&j| lambda[j])),
        vectors,
        lambda_min: cfg.lambda_min,
        first_excluded,
        residuals,
        target_rank: target,
        sketch_columns: columns,
        hm_applications: hm_apps,
        oversampling: cfg.oversampling,
        seed: cfg.seed,
    }
}

/// `P v = V Vᵀ H v` where `H` is the regularization operator the basis is
/// normalized against.
pub fn projector_apply(
    basis: &GevpBasis,
    hr: &dyn LinearOperator,
    v: &ParamVector,
) -> Result<ParamVector> {
    check_dim("projector input", basis.dim(), v.len())?;
    if basis.is_empty() {
        return Ok(DVector::zeros(v.len()));
    }
    let hv = hr.apply(v)?;
    Ok(&basis.vectors * basis.vectors.tr_mul(&hv))
}

/// Keeps the pairs with `λ ≥ lambda_min`. No operator is applied.
pub fn truncate(basis: &GevpBasis, lambda_min: f64) -> GevpBasis {
    if lambda_min < basis.lambda_min {
        log::warn!(
            "truncate: threshold {lambda_min} is below the computed threshold {}; pairs in between are unavailable",
            basis.lambda_min
        );
    }
    let keep: Vec<usize> = (0..basis.rank()).filter(|&j| basis.lambda[j] >= lambda_min).collect();
    if keep.is_empty() {
        log::warn!("truncate: no eigenvalue above {lambda_min}, returning an empty basis");
    }
    let first_excluded = (0..basis.rank())
        .find(|&j| basis.lambda[j] < lambda_min)
        .map(|j| basis.lambda[j])
        .or(basis.first_excluded);
    GevpBasis {
        lambda: DVector::from_iterator(keep.len(), keep.iter().map(|&j| basis.lambda[j])),
        vectors: basis.vectors.select_columns(&keep),
        lambda_min: lambda_min.max(basis.lambda_min),
        first_excluded,
        residuals: keep.iter().map(|&j| basis.residuals.get(j).copied().unwrap_or(f64::NAN)).collect(),
        ..basis.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::{Counting, Diagonal, Identity};
    use nalgebra::dvector;

    fn small_cfg(p: usize) -> GevpConfig {
        GevpConfig {
            oversampling: p,
            lambda_min: 1.0,
            ..Default::default()
        }
    }

    #[test]
    fn diagonal_pencil() {
        let hm = Diagonal(dvector![4.0, 2.0, 0.5, 0.1]);
        let b = randomized_gevp(&hm, &Identity(4), &small_cfg(2)).unwrap();
        assert_eq!(b.rank(), 2);
        assert!((b.lambda[0] - 4.0).abs() < 1e-10);
        assert!((b.lambda[1] - 2.0).abs() < 1e-10);
        assert!((b.vectors.column(0).abs() - dvector![1.0, 0.0, 0.0, 0.0]).norm() < 1e-8);
        assert!((b.vectors.column(1).abs() - dvector![0.0, 1.0, 0.0, 0.0]).norm() < 1e-8);
        assert!((b.first_excluded.unwrap() - 0.5).abs() < 1e-10);
    }

    #[test]
    fn zero_misfit_returns_empty() {
        let b = randomized_gevp(&Diagonal(DVector::zeros(5)), &Identity(5), &small_cfg(2)).unwrap();
        assert!(b.is_empty());
    }

    #[test]
    fn scaled_pencil_keeps_eigenvalues() {
        let hm = Diagonal(dvector![6.0, 2.0, 0.2]);
        let hr = Diagonal(dvector![2.0, 2.0, 2.0]);
        let b = randomized_gevp(&hm, &hr, &GevpConfig { lambda_min: 0.5, ..small_cfg(2) }).unwrap();
        assert!((b.lambda.clone() - dvector![3.0, 1.0]).norm() < 1e-10);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((b.vectors.column(0).abs() - dvector![h, 0.0, 0.0]).norm() < 1e-8);
    }

    #[test]
    fn counts_hm_applications() {
        let m = 120;
        let hm = Counting::new(Diagonal(DVector::from_fn(m, |i, _| 50.0 * 0.7f64.powi(i as i32))));
        let b = randomized_gevp(&hm, &Identity(m), &GevpConfig::default()).unwrap();
        assert_eq!(hm.count(), 2 * (b.target_rank + b.oversampling));
        assert_eq!(hm.count(), b.hm_applications);
    }

    #[test]
    fn projector_and_truncation() {
        let hm = Diagonal(dvector![4.0, 2.0, 0.5, 0.1, 0.01]);
        let cfg = GevpConfig { lambda_min: 0.4, ..small_cfg(1) };
        let b = randomized_gevp(&hm, &Identity(5), &cfg).unwrap();
        assert_eq!(b.rank(), 3);
        let v1 = b.vectors.column(0).into_owned();
        assert!((projector_apply(&b, &Identity(5), &v1).unwrap() - &v1).norm() < 1e-12);
        let tail = dvector![0.0, 0.0, 0.0, 1.0, -2.0];
        assert!(projector_apply(&b, &Identity(5), &tail).unwrap().norm() < 1e-8);

        assert_eq!(truncate(&b, 1.0).rank(), 2);
        assert_eq!(truncate(&b, 0.1).rank(), 3);
        assert!(truncate(&b, 10.0).is_empty());
    }

    #[test]
    fn basis_round_trip() {
        let hm = Diagonal(dvector![4.0, 2.0, 0.5]);
        let b = randomized_gevp(&hm, &Identity(3), &small_cfg(1)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        b.write(dir.path()).unwrap();
        let back = GevpBasis::read(dir.path()).unwrap();
        assert_eq!(back.lambda, b.lambda);
        assert_eq!(back.vectors, b.vectors);
        assert_eq!(back.seed, b.seed);
    }
}
