//! Oracle checks shared by the `verify` command and the acceptance tests.
//!
//! Each check draws seeded random dense instances, runs the library code on
//! them and compares against an independent dense computation. A check
//! reports its worst observed values against fixed tolerances.

use std::fmt;
use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::linops::{
    dense_gevp, gaussian_matrix, gaussian_vector, materialize, Counting, Identity, DENSE_CAP,
};
use crate::lis::{randomized_gevp, GevpBasis, GevpConfig};
use crate::sensitivity::{sensitivity_indices, update_diagnostics, NewtonSource, SpectralInverse};
use crate::updates::{is_second_order_satisfied, second_order_shift, update_norm, FirstOrderUpdate};

/// How much of the suite to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Level {
    /// Cheap dense checks and the tracer derivative checks.
    Fast,
    /// Everything, including the dense bound sweeps and the desk-scale
    /// tracer run.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    AtMost,
    AtLeast,
}

/// One measured quantity with its pinned tolerance.
#[derive(Debug, Clone, Serialize)]
pub struct Part {
    pub label: String,
    pub value: f64,
    pub relation: Relation,
    pub tolerance: f64,
    pub passed: bool,
}

impl Part {
    pub fn at_most(label: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            label: label.into(),
            value,
            relation: Relation::AtMost,
            tolerance,
            passed: value <= tolerance,
        }
    }

    pub fn at_least(label: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            label: label.into(),
            value,
            relation: Relation::AtLeast,
            tolerance,
            passed: value >= tolerance,
        }
    }

    /// A yes/no property, reported as 1 or 0.
    pub fn holds(label: impl Into<String>, ok: bool) -> Self {
        Self::at_least(label, if ok { 1.0 } else { 0.0 }, 1.0)
    }
}

impl fmt::Display for Part {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.relation {
            Relation::AtMost => "<=",
            Relation::AtLeast => ">=",
        };
        let mark = if self.passed { "" } else { " !" };
        write!(f, "{} {:.3e} {op} {:.1e}{mark}", self.label, self.value, self.tolerance)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub parts: Vec<Part>,
    /// Wall-clock limit in seconds, if the check has one.
    pub budget: Option<f64>,
    pub seconds: f64,
    pub note: String,
}

impl Check {
    pub fn new(name: impl Into<String>, parts: Vec<Part>) -> Self {
        Self {
            name: name.into(),
            parts,
            budget: None,
            seconds: 0.0,
            note: String::new(),
        }
    }

    pub fn with_budget(mut self, seconds: f64) -> Self {
        self.budget = Some(seconds);
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }

    pub fn within_budget(&self) -> bool {
        self.budget.is_none_or(|b| self.seconds <= b)
    }

    pub fn passed(&self) -> bool {
        self.within_budget() && self.parts.iter().all(|p| p.passed)
    }

    /// Labels of the parts that failed.
    pub fn failed_parts(&self) -> Vec<&str> {
        self.parts.iter().filter(|p| !p.passed).map(|p| p.label.as_str()).collect()
    }

    /// One summary line: status, name, runtime and every part.
    pub fn line(&self) -> String {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        let time = match self.budget {
            Some(b) => format!("{:.1}s/{b:.0}s", self.seconds),
            None => format!("{:.1}s", self.seconds),
        };
        let parts: Vec<String> = self.parts.iter().map(|p| p.to_string()).collect();
        let mut out = format!("{status} {:<28} {time:>12}  {}", self.name, parts.join("; "));
        if !self.note.is_empty() {
            out.push_str("  (");
            out.push_str(&self.note);
            out.push(')');
        }
        out
    }
}

/// Runs `f` and records its wall-clock time in the returned check.
pub fn timed(f: impl FnOnce() -> Result<Check>) -> Result<Check> {
    let start = Instant::now();
    let mut check = f()?;
    check.seconds = start.elapsed().as_secs_f64();
    Ok(check)
}

fn orthogonal(m: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    gaussian_matrix(m, m, rng).qr().q()
}

fn with_spectrum(q: &DMatrix<f64>, eigs: &[f64]) -> DMatrix<f64> {
    let a = q * DMatrix::from_diagonal(&DVector::from_column_slice(eigs)) * q.transpose();
    (&a + a.transpose()) * 0.5
}

/// SPD matrix with log-uniform spectrum in `[1, cond]`.
fn random_spd(m: usize, cond: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let eigs: Vec<f64> = (0..m).map(|_| cond.powf(rng.random::<f64>())).collect();
    with_spectrum(&orthogonal(m, rng), &eigs)
}

/// `H_M = L Q Λ Qᵀ Lᵀ` with `H_R = L Lᵀ`, so the pencil `(H_M, H_R)` has
/// eigenvalues `Λ`.
fn pencil_with_spectrum(hr: &DMatrix<f64>, lambda: &[f64], rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let l = Cholesky::new(hr.clone()).expect("random_spd is positive definite").l();
    let inner = with_spectrum(&orthogonal(hr.nrows(), rng), lambda);
    let hm = &l * inner * l.transpose();
    (&hm + hm.transpose()) * 0.5
}

fn spd_inverse(h: &DMatrix<f64>) -> DMatrix<f64> {
    Cholesky::new(h.clone()).expect("matrix is positive definite").inverse()
}

fn wnorm(v: &DVector<f64>, w: &DMatrix<f64>) -> f64 {
    v.dot(&(w * v)).max(0.0).sqrt()
}

/// `‖P x‖_{W}` with `P = V Vᵀ H̃`, computed densely.
fn projected_norm(v: &DMatrix<f64>, hrt: &DMatrix<f64>, w: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    wnorm(&(v * (v.transpose() * (hrt * x))), w)
}

/// Leading-pair sensitivities against `‖P H⁻¹ B eᵢ‖_{W_z}` with a dense
/// inverse, on random SPD pencils with random truncation rank.
pub fn index_equivalence(instances: usize, seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let m = rng.random_range(20..=200);
        let n = rng.random_range(1..=20);
        let k = rng.random_range(1..=m);
        let a = gaussian_matrix(k, m, &mut rng) * (10.0 / (m as f64).sqrt());
        let hm = a.transpose() * a;
        let hr = random_spd(m, 1e2, &mut rng);
        let wz = random_spd(m, 10.0, &mut rng);
        let b = gaussian_matrix(m, n, &mut rng);
        let r = rng.random_range(1..=m);

        let (lambda, v) = dense_gevp(&hm, &hr)?;
        let vr = v.columns(0, r).into_owned();
        let basis = GevpBasis::from_pairs(lambda.rows(0, r).into_owned(), vr.clone(), 0.0);
        let fast = sensitivity_indices(&basis, &b, &wz)?;

        let x = spd_inverse(&(&hm + &hr)) * &b;
        let direct: Vec<f64> = (0..n).map(|i| projected_norm(&vr, &hr, &wz, &x.column(i).into_owned())).collect();
        let scale = direct.iter().copied().fold(0.0, f64::max);
        for (i, d) in direct.iter().enumerate() {
            worst = worst.max((fast[i] - d).abs() / d.max(1e-12 * scale).max(f64::MIN_POSITIVE));
        }
    }
    Ok(Check::new("index-equivalence", vec![Part::at_most("max rel err", worst, 1e-6)]).with_budget(30.0))
}

/// `(H_M + H_R)⁻¹ = H_R⁻¹ − Σⱼ λⱼ/(1+λⱼ) vⱼvⱼᵀ` over the full spectrum.
pub fn smw_identity(instances: usize, seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let m = rng.random_range(5..=100);
        let k = rng.random_range(1..=m);
        let a = gaussian_matrix(k, m, &mut rng) * (5.0 / (m as f64).sqrt());
        let hm = a.transpose() * a;
        let hr = random_spd(m, 1e2, &mut rng);
        let (lambda, v) = dense_gevp(&hm, &hr)?;
        let basis = GevpBasis::from_pairs(lambda, v, f64::MIN);
        let hr_inv = spd_inverse(&hr);
        let spectral = materialize(&SpectralInverse { basis: &basis, hr_inv: &hr_inv }, DENSE_CAP)?;
        let exact = spd_inverse(&(&hm + &hr));
        worst = worst.max((&spectral - &exact).norm() / exact.norm());
    }
    Ok(Check::new("smw-identity", vec![Part::at_most("frobenius rel err", worst, 1e-8)]))
}

/// `sin` of the largest principal angle between the `B`-orthonormal column
/// spaces of `u` and `v`, measured in the `B` inner product.
fn largest_angle_sine(u: &DMatrix<f64>, v: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let resid = u - v * (v.transpose() * (b * u));
    let gram = resid.transpose() * (b * &resid);
    let gram = (&gram + gram.transpose()) * 0.5;
    gram.symmetric_eigenvalues().max().max(0.0).sqrt()
}

/// Randomized eigenpairs above `λ_min` against a dense generalized
/// eigensolve, with oversampling 20 and spectra decaying by half per index.
pub fn gevp_accuracy(seeds: u64, seed: u64) -> Result<Check> {
    let m = 200;
    let mut worst_lambda = 0.0f64;
    let mut worst_angle = 0.0f64;
    let mut rank_mismatch = 0usize;
    for s in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(100 + s));
        let hr = random_spd(m, 1e2, &mut rng);
        let spectrum: Vec<f64> = (0..m).map(|j| 1e3 * 0.5f64.powi(j as i32)).collect();
        let hm = pencil_with_spectrum(&hr, &spectrum, &mut rng);
        let cfg = GevpConfig {
            oversampling: 20,
            lambda_min: 1.0,
            seed: s,
            ..Default::default()
        };
        let basis = randomized_gevp(&hm, &hr, &cfg)?;
        let (lambda, v) = dense_gevp(&hm, &hr)?;
        let k = lambda.iter().filter(|&&l| l >= cfg.lambda_min).count();
        if basis.rank() != k {
            rank_mismatch += 1;
            continue;
        }
        for j in 0..k {
            worst_lambda = worst_lambda.max((basis.lambda[j] - lambda[j]).abs() / lambda[j]);
        }
        let dense_top = v.columns(0, k).into_owned();
        worst_angle = worst_angle.max(largest_angle_sine(&basis.vectors, &dense_top, &hr).asin());
    }
    Ok(Check::new(
        "randomized-gevp-accuracy",
        vec![
            Part::at_most("eigenvalue rel err", worst_lambda, 1e-6),
            Part::at_most("principal angle", worst_angle, 1e-4),
            Part::at_most("rank mismatches", rank_mismatch as f64, 0.0),
        ],
    ))
}

/// Stationarity, nonnegativity, the closed-form norm against Monte Carlo,
/// and optimality among sampled admissible quadratics.
pub fn first_order_update(seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));

    // Stationarity of J + R̃ at a perturbed minimizer of a quadratic model.
    let m = 30;
    let a = gaussian_matrix(20, m, &mut rng);
    let hr = random_spd(m, 10.0, &mut rng) * 0.1;
    let hm = a.transpose() * &a;
    let d = gaussian_vector(20, &mut rng);
    let rhs = a.transpose() * &d;
    let z_opt = spd_inverse(&(&hm + &hr)) * &rhs;
    let z_star = &z_opt + gaussian_vector(m, &mut rng) * 0.3;
    let g = (&hm + &hr) * &z_star - &rhs;
    let upd = FirstOrderUpdate::new(g.clone(), crate::updates::default_alpha(&z_star), z_star.clone())?;
    let total = &g + upd.gradient(&z_star);
    let stationarity = total.amax() / g.norm();

    // Nonnegativity on points drawn from the Gaussian measure around z*.
    let mut min_value = f64::INFINITY;
    for _ in 0..10_000 {
        let z = &z_star + gaussian_vector(m, &mut rng) * upd.alpha;
        min_value = min_value.min(upd.value(&z));
    }

    // ‖R̃‖ in L¹ of N(z*, α²I) against a Monte Carlo mean, m = 3.
    let g3 = gaussian_vector(3, &mut rng);
    let z3 = gaussian_vector(3, &mut rng);
    let alpha3 = 0.7;
    let upd3 = FirstOrderUpdate::new(g3.clone(), alpha3, z3.clone())?;
    let samples = 100_000;
    let mc: f64 = (0..samples)
        .map(|_| upd3.value(&(&z3 + gaussian_vector(3, &mut rng) * alpha3)).abs())
        .sum::<f64>()
        / samples as f64;
    let closed = update_norm(&upd3);
    let mc_err = (mc - closed).abs() / closed;

    // Admissible candidates R(z) = c − gᵀ(z−z*) + ½(z−z*)ᵀA(z−z*) with A
    // positive definite and c = ½gᵀA⁻¹g (smallest constant keeping R ≥ 0).
    // Their L¹(μ) norm is E[R] = c + ½α² tr A.
    let gn = g3.norm();
    let rank_one = &g3 * g3.transpose() / (alpha3 * gn);
    let mut worst_gap = f64::INFINITY;
    for _ in 0..100 {
        let tau = rng.random_range(-2.0f64..2.0).exp();
        let eps = 10f64.powf(rng.random_range(-8.0..1.0)) / (alpha3 * alpha3);
        let w = gaussian_matrix(3, 3, &mut rng);
        let amat = &rank_one * tau + &w * w.transpose() * eps;
        let c = 0.5 * g3.dot(&(spd_inverse(&amat) * &g3));
        let norm = c + 0.5 * alpha3 * alpha3 * amat.trace();
        worst_gap = worst_gap.min(norm / closed - 1.0);
    }

    Ok(Check::new(
        "first-order-update",
        vec![
            Part::at_most("stationarity", stationarity, 1e-12),
            Part::at_least("min value", min_value, 0.0),
            Part::at_most("mc norm rel err", mc_err, 0.02),
            Part::at_least("candidate norm gap", worst_gap, -1e-12),
        ],
    ))
}

/// Ratio of the index change under the first-order update to its bound, and
/// the same for rescaled `α`, on quadratic instances at a perturbed
/// minimizer. All sensitivities use the projector of the updated pencil.
pub fn update_bounds(instances: usize, seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(3));
    let betas = [-0.9, -0.5, -0.1, 0.1, 0.5, 0.9];
    let mut worst_first = 0.0f64;
    let mut worst_metric = 0.0f64;
    let mut worst_alpha = 0.0f64;
    let mut diag_err = 0.0f64;
    for inst in 0..instances {
        let m = rng.random_range(10..=60);
        let n = rng.random_range(1..=10);
        let k = rng.random_range(1..=m);
        let a = gaussian_matrix(k, m, &mut rng) * (10.0 / (m as f64).sqrt());
        let hm = a.transpose() * a;
        let hr = random_spd(m, 1e2, &mut rng);
        let h = &hm + &hr;
        let b = gaussian_matrix(m, n, &mut rng);
        let g = &h * gaussian_vector(m, &mut rng) * 10f64.powf(rng.random_range(-3.0..0.0));
        let z_star = gaussian_vector(m, &mut rng);
        let alpha = 10f64.powf(rng.random_range(-1.0..1.0));
        // Half the instances measure in the identity metric, the others in
        // a random SPD metric, where the bound needs the dual factor.
        let wz = if inst % 2 == 0 { DMatrix::identity(m, m) } else { random_spd(m, 10.0, &mut rng) };

        let gn = g.norm();
        let hrt = &hr + &g * g.transpose() / (alpha * gn);
        let (lambda, v) = dense_gevp(&hm, &hrt)?;
        let r = lambda.iter().filter(|&&l| l >= 1.0).count().max(1);
        let vr = v.columns(0, r).into_owned();
        let h_inv = spd_inverse(&h);
        let x = &h_inv * &b;
        let indices = |alpha: f64| -> Vec<f64> {
            let xt = spd_inverse(&(&h + &g * g.transpose() / (alpha * gn))) * &b;
            (0..n).map(|i| projected_norm(&vr, &hrt, &wz, &xt.column(i).into_owned())).collect()
        };
        let s: Vec<f64> = (0..n).map(|i| projected_norm(&vr, &hrt, &wz, &x.column(i).into_owned())).collect();
        let st = indices(alpha);
        let denom: Vec<f64> = (0..n).map(|i| wnorm(&x.column(i).into_owned(), &wz)).collect();

        // Dense right-hand sides.
        let nvec = -(&h_inv * &g);
        let svec = -&g / gn;
        let pn = projected_norm(&vr, &hrt, &wz, &nvec);
        let sn = svec.dot(&nvec);
        let bound = pn / (sn + alpha);
        let dual = svec.dot(&(spd_inverse(&wz) * &svec)).sqrt();

        // The library diagnostics must agree with the dense values.
        let upd = FirstOrderUpdate::new(g.clone(), alpha, z_star)?;
        let basis = GevpBasis::from_pairs(lambda.rows(0, r).into_owned(), vr.clone(), 1.0);
        let diag = update_diagnostics(&upd, &nvec, &basis, &hrt, &wz, NewtonSource::Supplied, false)?;
        diag_err = diag_err
            .max((diag.bound - bound).abs() / bound)
            .max((diag.dual_factor - dual).abs() / dual);

        let is_identity = inst % 2 == 0;
        for i in 0..n {
            let change = (st[i] - s[i]).abs() / denom[i];
            if is_identity {
                worst_first = worst_first.max(change / bound);
            }
            worst_metric = worst_metric.max(change / (bound * dual));
        }
        for &beta in &betas {
            let sb = indices(alpha * (1.0 + beta));
            let rhs = beta.abs() * pn / (sn + alpha * (1.0 + beta));
            let rhs = if is_identity { rhs } else { rhs * dual };
            for i in 0..n {
                worst_alpha = worst_alpha.max((sb[i] - st[i]).abs() / denom[i] / rhs);
            }
        }
    }
    // Ratios of a quantity to its bound; 1e-10 absorbs rounding when the
    // Cauchy-Schwarz step is nearly tight.
    let limit = 1.0 + 1e-10;
    Ok(Check::new(
        "update-perturbation-bounds",
        vec![
            Part::at_most("first-order / bound", worst_first, limit),
            Part::at_most("metric / dual bound", worst_metric, limit),
            Part::at_most("alpha change / bound", worst_alpha, limit),
            Part::at_most("diagnostics rel err", diag_err, 1e-10),
        ],
    ))
}

/// Positive definiteness of `H_M + H_R` against the smallest generalized
/// eigenvalue, including pencils within 1e-6 of −1, and the effect of the
/// rank-one shifts on the spectrum.
pub fn second_order_update(instances: usize, seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(4));
    let eps = crate::updates::DEFAULT_EPSILON;
    let mut disagreements = 0usize;
    let mut near_boundary = 0usize;
    let mut worst_shifted = 0.0f64;
    let mut worst_others = 0.0f64;
    let mut worst_vector = 0.0f64;
    let mut unrepaired = 0usize;
    for inst in 0..instances {
        let m = rng.random_range(5..=40);
        let hr = random_spd(m, 10.0, &mut rng);
        let mut spectrum: Vec<f64> = (0..m).map(|_| rng.random_range(-0.9..5.0)).collect();
        match inst % 4 {
            0 => spectrum[0] = -1.0 - 1e-6,
            1 => spectrum[0] = -1.0 + 1e-6,
            2 => {
                let count = rng.random_range(1..=m.min(4));
                for l in spectrum.iter_mut().take(count) {
                    *l = rng.random_range(-3.0..-1.0);
                }
            }
            _ => {}
        }
        near_boundary += usize::from(inst % 4 < 2);
        let hm = pencil_with_spectrum(&hr, &spectrum, &mut rng);
        let (lambda, v) = dense_gevp(&hm, &hr)?;
        let predicted = is_second_order_satisfied(lambda.as_slice());
        let actual = Cholesky::new(&hm + &hr).is_some();
        disagreements += usize::from(predicted != actual);

        let shift = second_order_shift(lambda.as_slice(), eps);
        if shift.is_empty() {
            continue;
        }
        let shifted = &hm + shift.dense_update(&hr, &v)?;
        let (after, _) = dense_gevp(&shifted, &hr)?;
        // Shifted pairs move to −1 + ε and sort to the bottom; the rest keep
        // their order.
        let kept: Vec<usize> = (0..m).filter(|j| !shift.indices.contains(j)).collect();
        for (pos, &j) in kept.iter().enumerate() {
            worst_others = worst_others.max((after[pos] - lambda[j]).abs() / lambda[j].abs().max(1.0));
        }
        for pos in kept.len()..m {
            worst_shifted = worst_shifted.max((after[pos] - (-1.0 + eps)).abs());
        }
        for &i in &shift.indices {
            let vi = v.column(i).into_owned();
            let res = &shifted * &vi - &hr * &vi * (-1.0 + eps);
            worst_vector = worst_vector.max(res.norm() / (&hr * &vi).norm());
        }
        unrepaired += usize::from(Cholesky::new(&shifted + &hr).is_none());
    }
    Ok(Check::new(
        "second-order-update",
        vec![
            Part::at_most("pd disagreements", disagreements as f64, 0.0),
            Part::at_least("boundary instances", near_boundary as f64, 2.0),
            Part::at_most("shifted eigenvalue err", worst_shifted, 1e-8),
            Part::at_most("other eigenvalues change", worst_others, 1e-8),
            Part::at_most("shifted eigenvector residual", worst_vector, 1e-8),
            Part::at_most("not positive definite after", unrepaired as f64, 0.0),
        ],
    ))
}

/// `H_M` applications counted by a wrapper against `2(r + p)`.
pub fn cost_accounting(seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(5));
    let m = 150;
    let mut mismatches = 0usize;
    let mut runs = 0usize;
    for (p, r0, dr, decay) in [(20, 8, 8, 0.5), (5, 4, 3, 0.7), (10, 1, 1, 0.6), (20, 16, 4, 0.8)] {
        let hr = random_spd(m, 10.0, &mut rng);
        let spectrum: Vec<f64> = (0..m).map(|j| 1e3 * f64::powi(decay, j as i32)).collect();
        let hm = Counting::new(pencil_with_spectrum(&hr, &spectrum, &mut rng));
        let cfg = GevpConfig {
            oversampling: p,
            initial_rank: r0,
            rank_increment: dr,
            lambda_min: 1.0,
            seed: runs as u64,
            ..Default::default()
        };
        let basis = randomized_gevp(&hm, &hr, &cfg)?;
        let expected = 2 * (basis.target_rank + p);
        mismatches += usize::from(hm.count() != expected || basis.hm_applications != expected);
        runs += 1;
    }
    let identity_run = {
        // A zero misfit Hessian still pays for the sketch it applies.
        let hm = Counting::new(DMatrix::<f64>::zeros(20, 20));
        randomized_gevp(&hm, &Identity(20), &GevpConfig::default())?;
        hm.count()
    };
    Ok(Check::new(
        "cost-accounting",
        vec![
            Part::at_most("count mismatches", mismatches as f64, 0.0),
            Part::at_least("configurations", runs as f64, 4.0),
            Part::at_least("zero-operator sketch applications", identity_run as f64, 1.0),
        ],
    ))
}
