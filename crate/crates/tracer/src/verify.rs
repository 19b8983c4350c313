//! Checks on the tracer model: adjoint derivatives against finite
//! differences, and the qualitative pattern of a desk-scale analysis.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{generate_data, Fault, HessianMode, TracerConfig, TracerProblem};
use hdsa::linops::{gaussian_vector, symmetry_defect};
use hdsa::optim::{trust_region_solve, TrustRegionOptions};
use hdsa::problem::{fd, InverseProblem, MisfitHessian};
use hdsa::sensitivity::{run_pipeline_full, PipelineConfig, SensitivityReport};
use hdsa::verify::{timed, Check, Part};
use hdsa::Result;

/// Label of the Newton-step part of [`desk_run`], which does not pass at
/// the desk scale.
pub const NEWTON_STEP_PART: &str = "newton step lis fraction";

/// Gradient, Hessian symmetry and mixed-derivative columns against central
/// differences on the 16×16 configuration, optionally with a planted fault.
pub fn derivatives(fault: Option<Fault>, seed: u64) -> Result<Check> {
    timed(|| {
        let cfg = TracerConfig::small();
        let data = generate_data(&cfg)?;
        let build = |mode| -> Result<TracerProblem> {
            let p = TracerProblem::new(&cfg, &data)?.with_hessian(mode);
            Ok(match fault {
                Some(f) => p.with_fault(f),
                None => p,
            })
        };
        let p = build(HessianMode::Full)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = DVector::from_vec(
            p.mesh()
                .interpolate(|x, y| 0.4 * (3.0 * x).sin() * (2.0 * y).cos() - 0.2 * x * y),
        );
        let theta = gaussian_vector(p.dim_theta(), &mut rng) * 0.3;

        let mut grad = 0.0f64;
        for _ in 0..10 {
            let dir = gaussian_vector(p.dim_z(), &mut rng);
            grad = grad.max(fd::gradient_check(&p, &z, &theta, &dir, 1e-5)?);
        }
        let mut sym = 0.0f64;
        for mode in [HessianMode::Full, HessianMode::GaussNewton] {
            let q = build(mode)?;
            let lin = q.linearize(&z, &theta)?;
            sym = sym.max(symmetry_defect(&MisfitHessian(lin.as_ref()), 20, &mut rng)?);
        }
        let mut mixed = 0.0f64;
        for i in 0..p.dim_theta() {
            mixed = mixed.max(fd::mixed_check(&p, &z, &theta, i, 1e-5)?);
        }
        let mut check = Check::new(
            "tracer-derivatives",
            vec![
                Part::at_most("gradient rel err", grad, 1e-4),
                Part::at_most("hessian symmetry", sym, 1e-8),
                Part::at_most("mixed column rel err", mixed, 1e-3),
            ],
        )
        .with_budget(300.0);
        if let Some(f) = fault {
            check = check.with_note(format!("fault {f:?} planted"));
        }
        Ok(check)
    })
}

/// Outcome of [`desk_run`].
pub struct DeskRun {
    pub check: Check,
    pub report: SensitivityReport,
    pub iterations: usize,
}

/// Ordering of the auxiliary groups by their largest index, largest first.
pub fn group_ranking(report: &SensitivityReport, indices: &[f64]) -> Vec<String> {
    let mut groups: Vec<(String, f64)> = Vec::new();
    for (label, &s) in report.labels.iter().zip(indices) {
        match groups.iter_mut().find(|(g, _)| *g == label.group) {
            Some((_, m)) => *m = m.max(s),
            None => groups.push((label.group.clone(), s)),
        }
    }
    groups.sort_by(|a, b| b.1.total_cmp(&a.1));
    groups.into_iter().map(|(g, _)| g).collect()
}

/// Solve at the given configuration, then analyse the result over
/// `λ_min ∈ {0.5, 1, 2}`.
pub fn desk_run(cfg: &TracerConfig, max_iter: usize) -> Result<DeskRun> {
    let mut out = None;
    let check = timed(|| {
        let data = generate_data(cfg)?;
        let p = TracerProblem::new(cfg, &data)?;
        let theta = DVector::zeros(p.dim_theta());
        let opts = TrustRegionOptions {
            max_iter,
            ..Default::default()
        };
        let solve = trust_region_solve(&p, &p.initial_guess(cfg), &theta, &opts)?;
        let pipeline = PipelineConfig {
            lambda_grid: vec![0.5, 1.0, 2.0],
            headline_lambda_min: 1.0,
            ..Default::default()
        };
        let report = run_pipeline_full(&p, &solve.z, &theta, &pipeline)?.report;

        let spectrum = &report.spectrum;
        let decay = match (spectrum.first(), spectrum.last()) {
            (Some(hi), Some(lo)) if *lo > 0.0 => (hi / lo).log10(),
            _ => 0.0,
        };
        let rankings: Vec<Vec<String>> = report.sweep.iter().map(|r| group_ranking(&report, &r.indices)).collect();
        let stable = rankings.windows(2).all(|w| w[0] == w[1]);

        let block_max = |group: &str| {
            report
                .labels
                .iter()
                .zip(&report.indices)
                .filter(|(l, _)| l.group == group)
                .map(|(l, &s)| (l.index, s))
                .max_by(|a, b| a.1.total_cmp(&b.1))
        };
        let right = block_max("boundary-right").unwrap_or((0, 0.0));
        let left = block_max("boundary-left").unwrap_or((0, 0.0));
        let right_y = right.0 as f64 / (cfg.layout.boundary_hats - 1) as f64;
        let d = &report.diagnostics;
        let fraction = if d.n_norm > 0.0 { d.pn_norm / d.n_norm } else { 0.0 };

        let check = Check::new(
            "tracer-qualitative-pattern",
            vec![
                Part::at_least("spectrum decades", decay, 3.0),
                Part::at_least("lis rank lower", report.rank as f64, 10.0),
                Part::at_most("lis rank upper", report.rank as f64, 316.0),
                Part::holds("group ranking stable", stable),
                Part::at_least("right/left boundary max", right.1 / left.1.max(f64::MIN_POSITIVE), 1.0),
                Part::at_most("right peak distance from y=0.5", (right_y - 0.5).abs(), 0.2),
                Part::at_most(NEWTON_STEP_PART, fraction, 1e-2),
            ],
        )
        .with_budget(1800.0)
        .with_note(format!(
            "{} iterations, J {:.3e}, ranking {}",
            solve.iterations(),
            solve.objective,
            rankings.first().map(|r| r.join(">")).unwrap_or_default()
        ));
        out = Some((report, solve.iterations()));
        Ok(check)
    })?;
    let (report, iterations) = out.expect("set by the timed closure");
    Ok(DeskRun {
        check,
        report,
        iterations,
    })
}
