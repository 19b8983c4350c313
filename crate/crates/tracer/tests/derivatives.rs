//! Adjoint and second-order adjoint derivatives against central
//! differences on a 16×16 inversion mesh.

use hdsa::linops::{gaussian_vector, symmetry_defect};
use hdsa::problem::{fd, InverseProblem, MisfitHessian};
use hdsa_tracer::{generate_data, HessianMode, Mesh, TracerConfig, TracerProblem};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn setup() -> (TracerConfig, TracerProblem) {
    let cfg = TracerConfig::small();
    let data = generate_data(&cfg).unwrap();
    let p = TracerProblem::new(&cfg, &data).unwrap();
    (cfg, p)
}

/// A smooth, non-trivial evaluation point.
fn point(p: &TracerProblem, rng: &mut ChaCha8Rng) -> (DVector<f64>, DVector<f64>) {
    let z = DVector::from_vec(
        p.mesh()
            .interpolate(|x, y| 0.4 * (3.0 * x).sin() * (2.0 * y).cos() - 0.2 * x * y),
    );
    let theta = gaussian_vector(p.dim_theta(), rng) * 0.3;
    (z, theta)
}

fn smooth_direction(mesh: &Mesh, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let c = gaussian_vector(6, rng);
    DVector::from_vec(mesh.interpolate(|x, y| {
        c[0] * (std::f64::consts::PI * x).sin()
            + c[1] * (2.0 * y).cos()
            + c[2] * x * y
            + c[3]
            + c[4] * (5.0 * x + 3.0 * y).sin()
            + c[5] * (x - 0.5).powi(2)
    }))
}

#[test]
fn gradient_matches_central_differences() {
    let (_, p) = setup();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (z, theta) = point(&p, &mut rng);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let dir = gaussian_vector(p.dim_z(), &mut rng);
        worst = worst.max(fd::gradient_check(&p, &z, &theta, &dir, 1e-5).unwrap());
    }
    eprintln!("gradient worst {worst:e}");
    assert!(worst <= 1e-4, "worst relative error {worst:e}");
}

#[test]
fn hessian_vector_matches_gradient_differences() {
    let (_, p) = setup();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (z, theta) = point(&p, &mut rng);
    for _ in 0..3 {
        let v = smooth_direction(p.mesh(), &mut rng);
        let err = fd::hessian_check(&p, &z, &theta, &v, 1e-5).unwrap();
        eprintln!("hessian {err:e}");
        assert!(err <= 1e-3, "relative error {err:e}");
    }
}

#[test]
fn hessian_is_symmetric_in_both_modes() {
    let (_, p) = setup();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (z, theta) = point(&p, &mut rng);
    for mode in [HessianMode::Full, HessianMode::GaussNewton] {
        let p = setup().1.with_hessian(mode);
        let lin = p.linearize(&z, &theta).unwrap();
        let d = symmetry_defect(&MisfitHessian(lin.as_ref()), 20, &mut rng).unwrap();
        eprintln!("{mode:?} symmetry {d:e}");
        assert!(d <= 1e-8, "{mode:?}: {d:e}");
    }
}

#[test]
fn mixed_jacobian_matches_differences_in_theta() {
    let (_, p) = setup();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (z, theta) = point(&p, &mut rng);
    let last = p.dim_theta() - 1;
    for i in [last, 0, 10, 30, 42, 100, 185] {
        let err = fd::mixed_check(&p, &z, &theta, i, 1e-5).unwrap();
        eprintln!("B e_{i} {err:e}");
        assert!(err <= 1e-3, "column {i}: {err:e}");
    }
}
