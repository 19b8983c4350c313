//! Banded LU and mesh invariants on random inputs.

use hdsa_tracer::band::BandMatrix;
use hdsa_tracer::Mesh;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn banded(n: usize, kl: usize, ku: usize, entries: &[f64]) -> (BandMatrix, DMatrix<f64>) {
    let mut band = BandMatrix::zeros(n, kl, ku);
    let mut dense = DMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in i.saturating_sub(kl)..(i + ku + 1).min(n) {
            let mut v = entries[k % entries.len()];
            k += 1;
            if i == j {
                // Push the diagonal away from zero.
                v += if v >= 0.0 { 0.5 } else { -0.5 };
            }
            band.add(i, j, v);
            dense[(i, j)] = v;
        }
    }
    (band, dense)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn band_lu_matches_dense(
        n in 1usize..40,
        kl in 0usize..5,
        ku in 0usize..5,
        entries in proptest::collection::vec(-1.0f64..1.0, 16..64),
        rhs_seed in proptest::collection::vec(-1.0f64..1.0, 40),
    ) {
        let (band, dense) = banded(n, kl, ku, &entries);
        let cond = dense.clone().svd(false, false).singular_values;
        prop_assume!(cond.min() > 1e-6 * cond.max());
        let lu = band.factor().unwrap();
        let b: Vec<f64> = rhs_seed[..n].to_vec();
        let bv = DVector::from_column_slice(&b);
        let x = DVector::from_vec(lu.solve(&b));
        let xt = DVector::from_vec(lu.solve_transpose(&b));
        let tol = 1e-9 * cond.max() / cond.min();
        prop_assert!((&dense * &x - &bv).norm() <= tol * (1.0 + bv.norm()));
        prop_assert!((dense.transpose() * &xt - &bv).norm() <= tol * (1.0 + bv.norm()));
        let y = DVector::from_vec(band.matvec(&b));
        prop_assert!((y - &dense * &bv).norm() <= 1e-12 * (1.0 + bv.norm()));
        let yt = DVector::from_vec(band.matvec_transpose(&b));
        prop_assert!((yt - dense.transpose() * &bv).norm() <= 1e-12 * (1.0 + bv.norm()));
    }

    #[test]
    fn interpolation_and_location_reproduce_bilinear_fields(
        n in 2usize..20,
        c in proptest::collection::vec(-2.0f64..2.0, 4),
        x in 0.0f64..1.0,
        y in 0.0f64..1.0,
    ) {
        let mesh = Mesh::new(n).unwrap();
        let f = |x: f64, y: f64| c[0] + c[1] * x + c[2] * y + c[3] * x * y;
        let nodal = mesh.interpolate(f);
        let at: f64 = mesh.locate(x, y).unwrap().iter().map(|&(k, w)| w * nodal[k]).sum();
        prop_assert!((at - f(x, y)).abs() <= 1e-12);
    }

    #[test]
    fn mass_matrix_integrates_constants(n in 2usize..24) {
        let mesh = Mesh::new(n).unwrap();
        let ones = vec![1.0; mesh.num_nodes()];
        let total: f64 = mesh.mass_matrix().matvec(&ones).iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        let grad: f64 = mesh.stiffness_matrix().matvec(&ones).iter().map(|v| v.abs()).sum();
        prop_assert!(grad <= 1e-10);
    }
}
