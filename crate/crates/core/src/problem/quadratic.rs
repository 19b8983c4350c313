use std::path::{Path, PathBuf};

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_point, InverseProblem, Linearization};
use crate::error::{check_dim, Error, Result};
use crate::linops::{csv, gaussian_matrix, gaussian_vector, AuxVector, LinearOperator, ParamVector};

/// Linear-Gaussian test model `F(z, θ) = A z + C θ` with
/// `J = ½(F−d)ᵀW(F−d) + ½zᵀ H_reg z`.
///
/// Every derivative is a constant dense matrix, which makes this the oracle
/// model for the sensitivity machinery.
#[derive(Debug, Clone)]
pub struct QuadraticModel {
    a: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DVector<f64>,
    w: DMatrix<f64>,
    hreg: DMatrix<f64>,
    wz: DMatrix<f64>,
    hm: DMatrix<f64>,
    b: DMatrix<f64>,
    hreg_inv: Option<DMatrix<f64>>,
}

impl QuadraticModel {
    pub fn new(
        a: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DVector<f64>,
        w: DMatrix<f64>,
        hreg: DMatrix<f64>,
    ) -> Result<Self> {
        let (k, m) = a.shape();
        check_dim("quadratic C rows", k, c.nrows())?;
        check_dim("quadratic d", k, d.len())?;
        check_dim("quadratic W rows", k, w.nrows())?;
        check_dim("quadratic W cols", k, w.ncols())?;
        check_dim("quadratic Hreg rows", m, hreg.nrows())?;
        check_dim("quadratic Hreg cols", m, hreg.ncols())?;
        let hm = a.transpose() * &w * &a;
        let b = a.transpose() * &w * &c;
        let hreg_inv = Cholesky::new(hreg.clone()).map(|ch| ch.inverse());
        Ok(Self {
            wz: DMatrix::identity(m, m),
            a,
            c,
            d,
            w,
            hreg,
            hm,
            b,
            hreg_inv,
        })
    }

    /// Replaces the default identity metric.
    pub fn with_metric(mut self, wz: DMatrix<f64>) -> Result<Self> {
        check_dim("quadratic Wz", self.a.ncols(), wz.nrows())?;
        check_dim("quadratic Wz", self.a.ncols(), wz.ncols())?;
        self.wz = wz;
        Ok(self)
    }

    pub fn forward(&self, z: &ParamVector, theta: &AuxVector) -> DVector<f64> {
        &self.a * z + &self.c * theta
    }

    /// `H_M = AᵀWA`.
    pub fn misfit_hessian(&self) -> &DMatrix<f64> {
        &self.hm
    }

    pub fn reg_hessian(&self) -> &DMatrix<f64> {
        &self.hreg
    }

    pub fn hessian(&self) -> DMatrix<f64> {
        &self.hm + &self.hreg
    }

    /// `B = AᵀWC`.
    pub fn mixed_jacobian(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn metric_matrix(&self) -> &DMatrix<f64> {
        &self.wz
    }

    pub fn data(&self) -> &DVector<f64> {
        &self.d
    }

    /// `z* = (AᵀWA + H_reg)⁻¹ AᵀW(d − Cθ)`.
    pub fn minimizer(&self, theta: &AuxVector) -> Result<ParamVector> {
        check_dim("theta", self.c.ncols(), theta.len())?;
        let rhs = self.a.transpose() * (&self.w * (&self.d - &self.c * theta));
        let chol = Cholesky::new(self.hessian())
            .ok_or_else(|| Error::violation("quadratic Hessian is not positive definite"))?;
        Ok(chol.solve(&rhs))
    }

    fn residual(&self, z: &ParamVector, theta: &AuxVector) -> DVector<f64> {
        self.forward(z, theta) - &self.d
    }
}

impl InverseProblem for QuadraticModel {
    fn dim_z(&self) -> usize {
        self.a.ncols()
    }

    fn dim_theta(&self) -> usize {
        self.c.ncols()
    }

    fn objective(&self, z: &ParamVector, theta: &AuxVector) -> Result<f64> {
        check_point(self, z, theta)?;
        let r = self.residual(z, theta);
        Ok(0.5 * r.dot(&(&self.w * &r)) + 0.5 * z.dot(&(&self.hreg * z)))
    }

    fn linearize(&self, z: &ParamVector, theta: &AuxVector) -> Result<Box<dyn Linearization + '_>> {
        check_point(self, z, theta)?;
        let r = self.residual(z, theta);
        let wr = &self.w * &r;
        let objective = 0.5 * r.dot(&wr) + 0.5 * z.dot(&(&self.hreg * z));
        let gradient = self.a.transpose() * wr + &self.hreg * z;
        Ok(Box::new(QuadraticLinearization {
            model: self,
            objective,
            gradient,
        }))
    }

    fn metric(&self) -> &dyn LinearOperator {
        &self.wz
    }

    fn reg_hessian_inverse(&self) -> Option<&dyn LinearOperator> {
        self.hreg_inv.as_ref().map(|m| m as &dyn LinearOperator)
    }
}

struct QuadraticLinearization<'a> {
    model: &'a QuadraticModel,
    objective: f64,
    gradient: ParamVector,
}

impl Linearization for QuadraticLinearization<'_> {
    fn dim_z(&self) -> usize {
        self.model.a.ncols()
    }

    fn dim_theta(&self) -> usize {
        self.model.c.ncols()
    }

    fn objective(&self) -> f64 {
        self.objective
    }

    fn gradient(&self) -> &ParamVector {
        &self.gradient
    }

    fn hess_misfit_vec(&self, v: &ParamVector) -> Result<ParamVector> {
        check_dim("hess_misfit_vec", self.dim_z(), v.len())?;
        Ok(&self.model.hm * v)
    }

    fn hess_reg_vec(&self, v: &ParamVector) -> Result<ParamVector> {
        check_dim("hess_reg_vec", self.dim_z(), v.len())?;
        Ok(&self.model.hreg * v)
    }

    fn mixed_jacobian_col(&self, i: usize) -> Result<ParamVector> {
        if i >= self.dim_theta() {
            return Err(Error::violation(format!(
                "auxiliary index {i} out of range (n = {})",
                self.dim_theta()
            )));
        }
        Ok(self.model.b.column(i).into_owned())
    }
}

/// A matrix given inline as rows or as a CSV file path.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSource {
    Rows(Vec<Vec<f64>>),
    File { csv: PathBuf },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VectorSource {
    Values(Vec<f64>),
    File { csv: PathBuf },
}

impl MatrixSource {
    pub fn load(&self, base: &Path) -> Result<DMatrix<f64>> {
        match self {
            MatrixSource::Rows(rows) => {
                let nrows = rows.len();
                let ncols = rows.first().map_or(0, Vec::len);
                if rows.iter().any(|r| r.len() != ncols) {
                    return Err(Error::Config("ragged inline matrix".into()));
                }
                Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
            }
            MatrixSource::File { csv: path } => csv::read_matrix_csv(base.join(path)),
        }
    }
}

impl VectorSource {
    pub fn load(&self, base: &Path) -> Result<DVector<f64>> {
        match self {
            VectorSource::Values(v) => Ok(DVector::from_vec(v.clone())),
            VectorSource::File { csv: path } => csv::read_vector_csv(base.join(path)),
        }
    }
}

/// Random ill-posed instance: `A = U diag(σ) Vᵀ` with geometrically
/// decaying `σⱼ = scale·decayʲ`, Gaussian `C`, `W = I` and
/// `H_reg = reg·I`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomQuadratic {
    pub m: usize,
    pub n: usize,
    pub m_obs: usize,
    #[serde(default = "default_scale")]
    pub scale: f64,
    #[serde(default = "default_decay")]
    pub decay: f64,
    #[serde(default = "default_reg")]
    pub reg: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_scale() -> f64 {
    10.0
}
fn default_decay() -> f64 {
    0.8
}
fn default_reg() -> f64 {
    1e-2
}

impl RandomQuadratic {
    /// Returns `(A, C, W, H_reg, z_true)`.
    #[allow(clippy::type_complexity)]
    pub fn sample(&self) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let k = self.m_obs.min(self.m);
        let u = gaussian_matrix(self.m_obs, k, &mut rng).qr().q();
        let v = gaussian_matrix(self.m, k, &mut rng).qr().q();
        let sigma = DVector::from_fn(k, |j, _| self.scale * self.decay.powi(j as i32));
        let a = &u * DMatrix::from_diagonal(&sigma) * v.transpose();
        let c = gaussian_matrix(self.m_obs, self.n, &mut rng) / (self.n.max(1) as f64).sqrt();
        let z_true = gaussian_vector(self.m, &mut rng);
        (
            a,
            c,
            DMatrix::identity(self.m_obs, self.m_obs),
            DMatrix::identity(self.m, self.m) * self.reg,
            z_true,
        )
    }
}

/// Text configuration of a quadratic model. Either `random` or the explicit
/// matrices `a`, `c`, `hreg` must be given; `w` and `wz` default to the
/// identity, `theta_bar` to zero.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticConfig {
    pub random: Option<RandomQuadratic>,
    pub a: Option<MatrixSource>,
    pub c: Option<MatrixSource>,
    pub w: Option<MatrixSource>,
    pub hreg: Option<MatrixSource>,
    pub wz: Option<MatrixSource>,
    pub d: Option<VectorSource>,
    pub theta_bar: Option<VectorSource>,
    pub z_true: Option<VectorSource>,
    #[serde(default)]
    pub noise_std: f64,
}

/// A quadratic configuration with all matrices loaded.
#[derive(Debug, Clone)]
pub struct QuadraticSetup {
    pub a: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub hreg: DMatrix<f64>,
    pub wz: DMatrix<f64>,
    pub d: Option<DVector<f64>>,
    pub theta_bar: DVector<f64>,
    pub z_true: Option<DVector<f64>>,
    pub noise_std: f64,
}

impl QuadraticConfig {
    /// Resolves matrix sources; CSV paths are relative to `base`.
    pub fn resolve(&self, base: &Path) -> Result<QuadraticSetup> {
        let need = |src: &Option<MatrixSource>, name: &str| -> Result<DMatrix<f64>> {
            src.as_ref()
                .ok_or_else(|| Error::Config(format!("quadratic model needs `{name}` or `random`")))?
                .load(base)
        };
        let (a, c, w, hreg, z_true) = match &self.random {
            Some(random) => {
                let (a, c, w, hreg, z) = random.sample();
                (a, c, w, hreg, Some(z))
            }
            None => {
                let a = need(&self.a, "a")?;
                let c = need(&self.c, "c")?;
                let hreg = need(&self.hreg, "hreg")?;
                let w = match &self.w {
                    Some(src) => src.load(base)?,
                    None => DMatrix::identity(a.nrows(), a.nrows()),
                };
                let z_true = self.z_true.as_ref().map(|s| s.load(base)).transpose()?;
                (a, c, w, hreg, z_true)
            }
        };
        let m = a.ncols();
        let wz = match &self.wz {
            Some(src) => src.load(base)?,
            None => DMatrix::identity(m, m),
        };
        let theta_bar = match &self.theta_bar {
            Some(src) => src.load(base)?,
            None => DVector::zeros(c.ncols()),
        };
        check_dim("theta_bar", c.ncols(), theta_bar.len())?;
        if let Some(z) = &z_true {
            check_dim("z_true", m, z.len())?;
        }
        let d = self.d.as_ref().map(|s| s.load(base)).transpose()?;
        if self.noise_std < 0.0 {
            return Err(Error::Config("noise_std must be nonnegative".into()));
        }
        Ok(QuadraticSetup {
            a,
            c,
            w,
            hreg,
            wz,
            d,
            theta_bar,
            z_true,
            noise_std: self.noise_std,
        })
    }
}

impl QuadraticSetup {
    /// `d = A z_true + C θ̄ + ε` with `ε ~ N(0, noise_std² I)` drawn from a
    /// generator seeded with `seed`.
    pub fn generate_data(&self, seed: u64) -> Result<DVector<f64>> {
        let z = self
            .z_true
            .as_ref()
            .ok_or_else(|| Error::Config("data generation needs `z_true` or `random`".into()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = gaussian_vector(self.a.nrows(), &mut rng) * self.noise_std;
        Ok(&self.a * z + &self.c * &self.theta_bar + noise)
    }

    /// Builds the model with data `d` (falling back to the configured data).
    pub fn into_model(self, d: Option<DVector<f64>>) -> Result<QuadraticModel> {
        let d = d
            .or(self.d)
            .ok_or_else(|| Error::Config("quadratic model has no data `d`".into()))?;
        QuadraticModel::new(self.a, self.c, d, self.w, self.hreg)?.with_metric(self.wz)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::fd;
    use nalgebra::{dmatrix, dvector};

    fn model(a: DMatrix<f64>, c: DMatrix<f64>, d: DVector<f64>, w: DMatrix<f64>, h: DMatrix<f64>) -> QuadraticModel {
        QuadraticModel::new(a, c, d, w, h).unwrap()
    }

    #[test]
    fn objective_exact_fit_is_zero() {
        let d = dvector![1.0, -2.0];
        let q = model(DMatrix::identity(2, 2), DMatrix::zeros(2, 1), d.clone(), DMatrix::identity(2, 2), DMatrix::zeros(2, 2));
        assert_eq!(q.objective(&d, &dvector![0.0]).unwrap(), 0.0);
    }

    #[test]
    fn objective_with_identity_regularization() {
        let d = dvector![1.0, 0.0];
        let q = model(DMatrix::identity(2, 2), DMatrix::zeros(2, 1), d.clone(), DMatrix::identity(2, 2), DMatrix::identity(2, 2));
        assert_eq!(q.objective(&d, &dvector![0.0]).unwrap(), 0.5);
    }

    #[test]
    fn objective_weighted_residual() {
        let q = model(DMatrix::identity(2, 2), DMatrix::zeros(2, 1), dvector![0.0, 0.0], DMatrix::identity(2, 2) * 2.0, DMatrix::zeros(2, 2));
        assert_eq!(q.objective(&dvector![1.0, 1.0], &dvector![0.0]).unwrap(), 2.0);
    }

    #[test]
    fn gradient_hessian_and_columns() {
        let q = model(DMatrix::identity(2, 2), DMatrix::zeros(2, 3), dvector![0.0, 0.0], DMatrix::identity(2, 2), DMatrix::identity(2, 2));
        let theta = DVector::zeros(3);
        assert_eq!(q.gradient_z(&dvector![1.0, 2.0], &theta).unwrap(), dvector![2.0, 4.0]);
        let v = dvector![0.3, -0.7];
        assert_eq!(q.hess_misfit_vec(&v, &theta, &v).unwrap(), v);
        for i in 0..3 {
            assert_eq!(q.mixed_jacobian_col(&v, &theta, i).unwrap(), DVector::zeros(2));
        }
        assert!(q.mixed_jacobian_col(&v, &theta, 3).is_err());

        let gamma = 1e-3;
        let q = model(DMatrix::identity(2, 2), DMatrix::zeros(2, 1), dvector![0.0, 0.0], DMatrix::identity(2, 2), dmatrix![1.0, 0.0; 0.0, gamma]);
        assert_eq!(q.hess_reg_vec(&v, &dvector![1.0, 1.0]).unwrap(), dvector![1.0, gamma]);
    }

    #[test]
    fn minimizer_is_stationary() {
        let setup = QuadraticConfig {
            random: Some(RandomQuadratic { m: 30, n: 6, m_obs: 25, scale: 10.0, decay: 0.8, reg: 1e-2, seed: 4 }),
            noise_std: 0.01,
            ..Default::default()
        }
        .resolve(Path::new("."))
        .unwrap();
        let theta = setup.theta_bar.clone();
        let d = setup.generate_data(9).unwrap();
        let q = setup.into_model(Some(d)).unwrap();
        let zs = q.minimizer(&theta).unwrap();
        let g0 = q.gradient_z(&DVector::zeros(30), &theta).unwrap().norm();
        assert!(q.gradient_z(&zs, &theta).unwrap().norm() <= 1e-10 * g0);
    }

    #[test]
    fn mixed_columns_match_dense_product_and_fd() {
        let random = RandomQuadratic { m: 12, n: 4, m_obs: 10, scale: 3.0, decay: 0.9, reg: 0.1, seed: 1 };
        let (a, c, w, h, z) = random.sample();
        let q = model(a.clone(), c.clone(), a.clone() * &z, w.clone(), h);
        let theta = dvector![0.1, -0.2, 0.3, 0.0];
        let b = a.transpose() * w * c;
        for i in 0..4 {
            let col = q.mixed_jacobian_col(&z, &theta, i).unwrap();
            assert!((col - b.column(i)).norm() <= 1e-14 * b.norm());
            assert!(fd::mixed_check(&q, &z, &theta, i, 1e-4).unwrap() <= 1e-8);
        }
    }

    #[test]
    fn inline_toml_config() {
        let text = r#"
            a = [[1.0, 0.0], [0.0, 2.0]]
            c = [[1.0], [0.0]]
            hreg = [[0.5, 0.0], [0.0, 0.5]]
            d = [1.0, 1.0]
        "#;
        let cfg: QuadraticConfig = toml::from_str(text).unwrap();
        let q = cfg.resolve(Path::new(".")).unwrap().into_model(None).unwrap();
        assert_eq!(q.dim_z(), 2);
        assert_eq!(q.dim_theta(), 1);
        assert_eq!(q.mixed_jacobian(), &dmatrix![1.0; 0.0]);
    }

    #[test]
    fn csv_matrix_source() {
        let dir = tempfile::tempdir().unwrap();
        csv::write_matrix_csv(dir.path().join("a.csv"), &dmatrix![2.0, 0.0; 0.0, 3.0]).unwrap();
        let src: MatrixSource = toml::from_str::<toml::Table>("x = { csv = \"a.csv\" }").unwrap()["x"]
            .clone()
            .try_into()
            .unwrap();
        assert_eq!(src.load(dir.path()).unwrap(), dmatrix![2.0, 0.0; 0.0, 3.0]);
    }
}
