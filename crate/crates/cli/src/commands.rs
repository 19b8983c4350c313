use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::Serialize;

use crate::config::{LoadedConfig, ModelKind, RunConfig};
use crate::manifest::Manifest;
use hdsa::linops::csv::{read_vector_csv, write_vector_csv};
use hdsa::optim::{trust_region_solve, write_history_csv, Termination};
use hdsa::problem::InverseProblem;
use hdsa::sensitivity::{run_pipeline, SensitivityReport};
use hdsa::verify::{Check, Level};
use hdsa::{Error, Result};
use hdsa_tracer::{generate_data, DataBundle, Fault, TracerConfig, TracerProblem};

/// A model ready to evaluate, with its nominal `θ̄` and initial iterate.
pub struct Setup {
    pub problem: Box<dyn InverseProblem>,
    pub theta_bar: DVector<f64>,
    pub z0: DVector<f64>,
}

/// Builds the configured model. Data come from `data_dir` if given and are
/// otherwise generated in memory exactly as `generate` would write them.
pub fn setup(cfg: &RunConfig, base: &Path, data_dir: Option<&Path>) -> Result<Setup> {
    match cfg.model {
        ModelKind::Quadratic => {
            let qs = cfg.quadratic.resolve(base)?;
            let d = match data_dir {
                Some(dir) => Some(read_vector_csv(dir.join("d.csv"))?),
                None if qs.d.is_some() => None,
                None => Some(qs.generate_data(cfg.seed)?),
            };
            let theta_bar = qs.theta_bar.clone();
            let m = qs.a.ncols();
            Ok(Setup {
                problem: Box::new(qs.into_model(d)?),
                theta_bar,
                z0: DVector::zeros(m),
            })
        }
        ModelKind::Tracer => {
            let data = match data_dir {
                Some(dir) => DataBundle::read(dir)?,
                None => generate_data(&cfg.tracer)?,
            };
            let problem = TracerProblem::new(&cfg.tracer, &data)?;
            let z0 = problem.initial_guess(&cfg.tracer);
            Ok(Setup {
                theta_bar: DVector::zeros(problem.dim_theta()),
                problem: Box::new(problem),
                z0,
            })
        }
    }
}

fn with_data_input(manifest: Manifest, data_dir: Option<&Path>, model: ModelKind) -> Result<Manifest> {
    match (data_dir, model) {
        (None, _) => Ok(manifest),
        (Some(dir), ModelKind::Quadratic) => manifest.input("d.csv", &dir.join("d.csv")),
        (Some(dir), ModelKind::Tracer) => manifest
            .input("concentration.csv", &dir.join("concentration.csv"))?
            .input("pressure.csv", &dir.join("pressure.csv"))?
            .input("data.json", &dir.join("data.json")),
    }
}

/// Writes the synthetic data set.
pub fn generate(loaded: &LoadedConfig, cfg: &RunConfig, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    match cfg.model {
        ModelKind::Quadratic => {
            let qs = cfg.quadratic.resolve(&loaded.base)?;
            let d = qs.generate_data(cfg.seed)?;
            write_vector_csv(out.join("d.csv"), &d)?;
            if let Some(z) = &qs.z_true {
                write_vector_csv(out.join("z_true.csv"), z)?;
            }
            write_vector_csv(out.join("theta_bar.csv"), &qs.theta_bar)?;
        }
        ModelKind::Tracer => generate_data(&cfg.tracer)?.write(out)?,
    }
    Manifest::new("generate", cfg, Some(loaded.sha256.clone())).write(out)
}

#[derive(Debug, Serialize)]
struct SolveSummary {
    termination: Termination,
    iterations: usize,
    objective: f64,
    gradient_norm: f64,
    failure: Option<String>,
}

/// Runs the trust-region solve and writes `z_star.csv`, `gradient.csv`,
/// `history.csv` and `solve.json`.
pub fn solve(loaded: &LoadedConfig, cfg: &RunConfig, data_dir: Option<&Path>, out: &Path) -> Result<()> {
    let s = setup(cfg, &loaded.base, data_dir)?;
    let result = trust_region_solve(s.problem.as_ref(), &s.z0, &s.theta_bar, &cfg.solver)
        .map_err(|e| e.in_stage("solve"))?;
    fs::create_dir_all(out)?;
    write_vector_csv(out.join("z_star.csv"), &result.z)?;
    write_vector_csv(out.join("gradient.csv"), &result.gradient)?;
    write_history_csv(out.join("history.csv"), &result.history)?;
    let summary = SolveSummary {
        termination: result.termination,
        iterations: result.iterations(),
        objective: result.objective,
        gradient_norm: result.gradient.norm(),
        failure: result.failure.clone(),
    };
    fs::write(out.join("solve.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    with_data_input(Manifest::new("solve", cfg, Some(loaded.sha256.clone())), data_dir, cfg.model)?.write(out)?;
    match result.failure {
        Some(msg) => Err(Error::model("trust region", msg).in_stage("solve")),
        None => Ok(()),
    }
}

/// Runs the sensitivity pipeline at the iterate stored in `z_star`.
pub fn sens(
    loaded: &LoadedConfig,
    cfg: &RunConfig,
    data_dir: Option<&Path>,
    z_star: &Path,
    out: &Path,
) -> Result<SensitivityReport> {
    let s = setup(cfg, &loaded.base, data_dir)?;
    let z = read_vector_csv(z_star)?;
    let report = run_pipeline(s.problem.as_ref(), &z, &s.theta_bar, &cfg.sensitivity)?;
    report.write(out)?;
    let manifest = Manifest::new("sens", cfg, Some(loaded.sha256.clone())).input("z_star.csv", z_star)?;
    with_data_input(manifest, data_dir, cfg.model)?.write(out)?;
    Ok(report)
}

/// What `verify` runs.
#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub level: Level,
    pub seed: u64,
    pub fault: Option<Fault>,
    /// Configuration of the desk-scale run at the full level.
    pub tracer: TracerConfig,
    pub max_iter: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            level: Level::Fast,
            seed: 0,
            fault: None,
            tracer: TracerConfig::default(),
            max_iter: 50,
        }
    }
}

/// The oracle suite, one check per acceptance criterion in a fixed order.
/// The fast level skips the bound sweeps and the desk-scale run.
pub fn verify_suite(opts: &VerifyOptions, mut on_check: impl FnMut(&Check)) -> Result<Vec<Check>> {
    use hdsa::verify::{self as v, timed};
    use hdsa_tracer::verify as tv;

    let full = opts.level == Level::Full;
    let seed = opts.seed;
    let mut out = Vec::new();
    let mut push = |c: Check| {
        on_check(&c);
        out.push(c);
    };
    push(timed(|| v::index_equivalence(20, seed))?);
    push(timed(|| v::smw_identity(10, seed))?);
    push(timed(|| v::gevp_accuracy(10, seed))?);
    push(timed(|| v::first_order_update(seed))?);
    if full {
        push(timed(|| v::update_bounds(20, seed))?);
    }
    push(timed(|| v::second_order_update(20, seed))?);
    push(tv::derivatives(opts.fault, seed)?);
    if full {
        push(tv::desk_run(&opts.tracer, opts.max_iter)?.check);
    }
    push(timed(|| v::cost_accounting(seed))?);
    Ok(out)
}

/// Writes `verify.json` with every check.
pub fn write_checks(checks: &[Check], out: &Path) -> Result<PathBuf> {
    fs::create_dir_all(out)?;
    let path = out.join("verify.json");
    fs::write(&path, serde_json::to_string_pretty(checks)? + "\n")?;
    Ok(path)
}
