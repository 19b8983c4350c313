//! Invariants of the operator substrate, the eigensolver, the updates and
//! the quadratic model on random instances.

use hdsa::linops::{
    b_orthonormalize, cg_solve, dense_gevp, dense_sym_eig, gaussian_matrix, gaussian_vector,
    linearity_defect, symmetry_defect, weighted_inner, LinearOperator, RankOne, Sum,
};
use hdsa::lis::{randomized_gevp, truncate, GevpConfig};
use hdsa::problem::{fd, InverseProblem, QuadraticModel, RandomQuadratic};
use hdsa::sensitivity::{index_rank_curve, sensitivity_indices};
use hdsa::updates::{second_order_shift, FirstOrderUpdate};
use nalgebra::{Cholesky, DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn spd(m: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = gaussian_matrix(m, m, rng);
    a.transpose() * a / m as f64 + DMatrix::identity(m, m)
}

fn spectrum(m: usize, decay: f64) -> DVector<f64> {
    DVector::from_fn(m, |j, _| 1e3 * decay.powi(j as i32))
}

/// Pencil with spectrum `1e3·decay^j` against an SPD `H_R`.
fn pencil(m: usize, decay: f64, rng: &mut ChaCha8Rng) -> (DMatrix<f64>, DMatrix<f64>) {
    let hr = spd(m, rng);
    let l = Cholesky::new(hr.clone()).unwrap().l();
    let q = gaussian_matrix(m, m, rng).qr().q();
    let hm = &l * &q * DMatrix::from_diagonal(&spectrum(m, decay)) * q.transpose() * l.transpose();
    ((&hm + hm.transpose()) * 0.5, hr)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn operators_are_linear_and_symmetric(m in 2usize..60, seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = spd(m, &mut r);
        let u = gaussian_vector(m, &mut r);
        let op = Sum(a.clone(), RankOne { u, coef: -0.3 });
        prop_assert!(linearity_defect(&op, 5, &mut r).unwrap() <= 1e-12);
        prop_assert!(symmetry_defect(&op, 20, &mut r).unwrap() <= 1e-10);
        prop_assert!(symmetry_defect(&a, 20, &mut r).unwrap() <= 1e-10);
    }

    #[test]
    fn weighted_inner_is_u_w_v(m in 1usize..40, seed in any::<u64>()) {
        let mut r = rng(seed);
        let w = spd(m, &mut r);
        let u = gaussian_vector(m, &mut r);
        let v = gaussian_vector(m, &mut r);
        let got = weighted_inner(&u, &v, &w).unwrap();
        let want = (u.transpose() * &w * &v)[0];
        prop_assert!((got - want).abs() <= 1e-12 * (1.0 + want.abs()));
    }

    #[test]
    fn cg_matches_cholesky(m in 1usize..80, seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = spd(m, &mut r);
        let b = gaussian_vector(m, &mut r);
        let x = cg_solve(&a, &b, 1e-12, 10 * m).unwrap().x;
        let exact = Cholesky::new(a).unwrap().solve(&b);
        prop_assert!((x - &exact).norm() <= 1e-9 * exact.norm());
    }

    #[test]
    fn b_orthonormal_columns(m in 2usize..100, k in 1usize..20, seed in any::<u64>()) {
        let mut r = rng(seed);
        let b = spd(m, &mut r);
        let y = gaussian_matrix(m, k.min(m), &mut r);
        let (basis, _) = b_orthonormalize(&y, &b).unwrap();
        let gram = basis.q.transpose() * &b * &basis.q;
        prop_assert!((gram - DMatrix::identity(basis.q.ncols(), basis.q.ncols())).amax() <= 1e-10);
    }

    #[test]
    fn symmetric_eigendecomposition(m in 1usize..50, seed in any::<u64>()) {
        let mut r = rng(seed);
        let g = gaussian_matrix(m, m, &mut r);
        let t = (&g + g.transpose()) * 0.5;
        let pair = dense_sym_eig(&t).unwrap();
        prop_assert!((pair.reconstruct() - &t).amax() <= 1e-10 * (1.0 + t.amax()));
        prop_assert!(pair.lambda.as_slice().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn first_order_update_shape(m in 1usize..30, alpha in 0.01f64..10.0, seed in any::<u64>()) {
        let mut r = rng(seed);
        let g = gaussian_vector(m, &mut r);
        let zs = gaussian_vector(m, &mut r);
        let upd = FirstOrderUpdate::new(g.clone(), alpha, zs.clone()).unwrap();
        prop_assert!((upd.gradient(&zs) + &g).amax() <= 1e-12 * g.norm());
        prop_assert!(upd.value(&upd.argmin()).abs() <= 1e-12 * alpha * g.norm());
        for _ in 0..20 {
            let z = &zs + gaussian_vector(m, &mut r) * alpha;
            prop_assert!(upd.value(&z) >= 0.0);
        }
    }

    #[test]
    fn second_order_shift_lands_above_minus_one(
        lambda in proptest::collection::vec(-5.0f64..5.0, 1..30),
        eps in 1e-10f64..1e-2,
    ) {
        let shift = second_order_shift(&lambda, eps);
        for (&i, &d) in shift.indices.iter().zip(&shift.shifts) {
            prop_assert!(lambda[i] <= -1.0);
            prop_assert!((lambda[i] + d - (-1.0 + eps)).abs() <= 1e-12 * (1.0 + lambda[i].abs()));
        }
        let expected = lambda.iter().filter(|&&l| l <= -1.0).count();
        prop_assert_eq!(shift.indices.len(), expected);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn gevp_pairs_are_normalized_residual_small_and_deterministic(
        m in 40usize..120,
        decay in 0.3f64..0.6,
        seed in any::<u64>(),
    ) {
        let mut r = rng(seed);
        let (hm, hr) = pencil(m, decay, &mut r);
        let cfg = GevpConfig { lambda_min: 1.0, seed, ..Default::default() };
        let basis = randomized_gevp(&hm, &hr, &cfg).unwrap();
        let again = randomized_gevp(&hm, &hr, &cfg).unwrap();
        prop_assert_eq!(&basis.lambda, &again.lambda);
        prop_assert_eq!(&basis.vectors, &again.vectors);
        prop_assert!(basis.lambda.as_slice().windows(2).all(|w| w[0] >= w[1]));
        // A single sketch cannot resolve the spectrum beyond its columns.
        let blind = spectrum(m, decay).get(basis.sketch_columns).copied().unwrap_or(0.0);
        let hr_norm = hr.symmetric_eigenvalues().max();
        for j in 0..basis.rank() {
            let v = basis.vectors.column(j).into_owned();
            let vhv = v.dot(&(&hr * &v));
            prop_assert!((vhv - 1.0).abs() <= 1e-8);
            let rayleigh = v.dot(&(&hm * &v)) / vhv;
            prop_assert!((rayleigh - basis.lambda[j]).abs() <= 1e-8 * basis.lambda[j]);
            let res = (&hm * &v - &hr * &v * basis.lambda[j]).norm();
            prop_assert!(res <= 1e-6 * (1.0 + basis.lambda[j]) + 10.0 * hr_norm * blind);
        }
    }

    #[test]
    fn truncated_indices_use_leading_terms(m in 10usize..60, n in 1usize..8, seed in any::<u64>()) {
        let mut r = rng(seed);
        let (hm, hr) = pencil(m, 0.7, &mut r);
        let wz = spd(m, &mut r);
        let b = gaussian_matrix(m, n, &mut r);
        let (lambda, v) = dense_gevp(&hm, &hr).unwrap();
        let basis = hdsa::lis::GevpBasis::from_pairs(lambda, v, 0.0);
        let curve = index_rank_curve(&basis, &b, &wz).unwrap();
        for lmin in [0.5, 1.0, 2.0, 10.0] {
            let t = truncate(&basis, lmin);
            if t.rank() == 0 {
                continue;
            }
            let s = sensitivity_indices(&t, &b, &wz).unwrap();
            for i in 0..n {
                let c = curve[(t.rank() - 1, i)];
                prop_assert!((s[i] - c).abs() <= 1e-10 * (1.0 + c));
            }
        }
    }

    #[test]
    fn quadratic_model_derivatives(m in 2usize..40, n in 1usize..40, seed in any::<u64>()) {
        let random = RandomQuadratic { m, n, m_obs: m + 5, scale: 3.0, decay: 0.9, reg: 0.1, seed };
        let (a, c, w, h, z) = random.sample();
        let d = &a * &z;
        let q = QuadraticModel::new(a, c, d, w, h.clone()).unwrap();
        let mut r = rng(seed);
        let theta = gaussian_vector(n, &mut r);
        let dir = gaussian_vector(m, &mut r);
        prop_assert!(fd::gradient_check(&q, &z, &theta, &dir, 1e-5).unwrap() <= 1e-6);
        prop_assert!(fd::hessian_check(&q, &z, &theta, &dir, 1e-5).unwrap() <= 1e-6);
        prop_assert!(fd::mixed_check(&q, &z, &theta, n - 1, 1e-5).unwrap() <= 1e-6);
        let zs = q.minimizer(&theta).unwrap();
        let g0 = q.gradient_z(&DVector::zeros(m), &theta).unwrap().norm();
        prop_assert!(q.gradient_z(&zs, &theta).unwrap().norm() <= 1e-10 * g0.max(1e-300));
        prop_assert!(Cholesky::new(q.hessian()).is_some());
        let lin = q.linearize(&zs, &theta).unwrap();
        let probe = gaussian_vector(m, &mut r);
        let split = lin.hess_misfit_vec(&probe).unwrap() + lin.hess_reg_vec(&probe).unwrap();
        prop_assert!((split - q.hessian() * &probe).norm() <= 1e-12 * (1.0 + probe.norm() * q.hessian().norm()));
        prop_assert_eq!(lin.dim_z(), m);
    }
}

#[test]
fn gevp_with_zero_update_is_the_plain_pencil() {
    let mut r = rng(3);
    let (hm, hr) = pencil(60, 0.5, &mut r);
    let cfg = GevpConfig { lambda_min: 1.0, ..Default::default() };
    let plain = randomized_gevp(&hm, &hr, &cfg).unwrap();
    let upd = FirstOrderUpdate::new(DVector::zeros(60), 1.0, DVector::zeros(60)).unwrap();
    let hrt = Sum(hr.clone(), upd.hessian());
    let updated = randomized_gevp(&hm, &hrt, &cfg).unwrap();
    assert_eq!(plain.lambda, updated.lambda);
    assert_eq!(upd.hessian().apply(&DVector::from_element(60, 1.0)).unwrap(), DVector::zeros(60));
}
