//! The commands run through the binary and checked against the library and
//! dense recomputation.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use hdsa::linops::csv::{read_vector_csv, write_vector_csv};
use hdsa::sensitivity::run_pipeline;
use hdsa_cli::commands::setup;
use hdsa_cli::config::{Overrides, RunConfig};
use hdsa_cli::manifest::Manifest;
use hdsa_tracer::{clean_observations, DataBundle};
use tempfile::TempDir;

const QUADRATIC: &str = r#"
model = "quadratic"
seed = 5
[quadratic]
noise_std = 0.0
[quadratic.random]
m = 40
n = 6
m_obs = 30
scale = 10.0
decay = 0.8
reg = 0.01
seed = 2
[solver]
max_iter = 30
[sensitivity]
lambda_grid = [0.1, 0.5, 1.0, 2.0]
"#;

const TRACER_SMALL: &str = r#"
model = "tracer"
seed = 7
[tracer]
mesh_fine = 32
mesh_coarse = 16
n_steps_fine = 20
n_steps_coarse = 10
[sensitivity]
lambda_grid = [0.5, 1.0, 2.0]
"#;

fn hdsa(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_hdsa")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = hdsa(args);
    assert!(
        out.status.success(),
        "hdsa {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

fn loaded(path: &Path) -> RunConfig {
    RunConfig::load(path).unwrap().config.finalize(Overrides::default()).unwrap()
}

#[test]
fn tracer_generate_is_byte_identical_on_rerun() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), TRACER_SMALL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["generate", "--config", s(&cfg), "--out", s(&a)]);
    ok(&["generate", "--config", s(&cfg), "--out", s(&b)]);
    assert_eq!(dir_bytes(&a), dir_bytes(&b));
    let m = Manifest::read(&a).unwrap();
    assert_eq!(m.seed, 7);
    assert_eq!(m.config.tracer.seed, 7);
    assert!(m.outputs.contains_key("concentration.csv"));

    let c = tmp.path().join("c");
    ok(&["generate", "--config", s(&cfg), "--out", s(&c), "--seed", "8"]);
    assert_ne!(fs::read(a.join("concentration.csv")).unwrap(), fs::read(c.join("concentration.csv")).unwrap());
}

#[test]
fn noiseless_tracer_data_is_the_fine_solve_at_the_sensors() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), &TRACER_SMALL.replace("[tracer]", "[tracer]\nnoise_rel = 0.0"));
    let out = tmp.path().join("data");
    ok(&["generate", "--config", s(&cfg), "--out", s(&out)]);
    let data = DataBundle::read(&out).unwrap();
    let clean = clean_observations(&loaded(&cfg).tracer).unwrap();
    let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12 * (1.0 + y.abs()));
    assert!(close(&data.observations.pressure, &clean.pressure));
    for (row, want) in data.observations.concentration.iter().zip(&clean.concentration) {
        assert!(close(row, want));
    }
}

#[test]
fn quadratic_data_matches_dense_forward_map() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), QUADRATIC);
    let out = tmp.path().join("data");
    ok(&["generate", "--config", s(&cfg), "--out", s(&out)]);
    let qs = loaded(&cfg).quadratic.resolve(tmp.path()).unwrap();
    let d = read_vector_csv(out.join("d.csv")).unwrap();
    let want = &qs.a * qs.z_true.as_ref().unwrap() + &qs.c * &qs.theta_bar;
    assert!((d - &want).norm() <= 1e-14 * want.norm());

    // With noise, the residual has the configured spread.
    let noisy = config(tmp.path(), &QUADRATIC.replace("noise_std = 0.0", "noise_std = 0.5").replace("m_obs = 30", "m_obs = 4000"));
    let out = tmp.path().join("noisy");
    ok(&["generate", "--config", s(&noisy), "--out", s(&out)]);
    let qs = loaded(&noisy).quadratic.resolve(tmp.path()).unwrap();
    let r = read_vector_csv(out.join("d.csv")).unwrap() - (&qs.a * qs.z_true.as_ref().unwrap() + &qs.c * &qs.theta_bar);
    let std = (r.norm_squared() / r.len() as f64).sqrt();
    assert!((std - 0.5).abs() < 0.03, "noise std {std}");
}

#[test]
fn quadratic_solve_reaches_the_dense_minimizer() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), QUADRATIC);
    let data = tmp.path().join("data");
    let out = tmp.path().join("solve");
    ok(&["generate", "--config", s(&cfg), "--out", s(&data)]);
    ok(&["solve", "--config", s(&cfg), "--data", s(&data), "--out", s(&out)]);
    let z = read_vector_csv(out.join("z_star.csv")).unwrap();

    let run = loaded(&cfg);
    let qs = run.quadratic.resolve(tmp.path()).unwrap();
    let theta = qs.theta_bar.clone();
    let model = qs.into_model(Some(read_vector_csv(data.join("d.csv")).unwrap())).unwrap();
    let exact = model.minimizer(&theta).unwrap();
    assert!((&z - &exact).norm() <= 1e-8 * exact.norm());

    let m = Manifest::read(&out).unwrap();
    assert!(m.inputs.contains_key("d.csv"));
    for f in ["z_star.csv", "gradient.csv", "history.csv", "solve.json"] {
        assert!(m.outputs.contains_key(f), "{f}");
    }
}

#[test]
fn zero_iterations_pass_the_initial_iterate_through() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), QUADRATIC);
    let out = tmp.path().join("solve");
    ok(&["solve", "--config", s(&cfg), "--out", s(&out), "--max-iter", "0"]);
    let z = read_vector_csv(out.join("z_star.csv")).unwrap();
    assert!(z.iter().all(|&v| v == 0.0));
    assert_eq!(Manifest::read(&out).unwrap().config.solver.max_iter, 0);
}

#[test]
fn quadratic_sens_equals_library_report() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), QUADRATIC);
    let solve = tmp.path().join("solve");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["solve", "--config", s(&cfg), "--out", s(&solve)]);
    let zs = solve.join("z_star.csv");
    ok(&["sens", "--config", s(&cfg), "--z-star", s(&zs), "--out", s(&a)]);
    ok(&["sens", "--config", s(&cfg), "--z-star", s(&zs), "--out", s(&b), "--lambda-min", "2"]);
    let again = tmp.path().join("again");
    ok(&["sens", "--config", s(&cfg), "--z-star", s(&zs), "--out", s(&again)]);
    assert_eq!(dir_bytes(&a), dir_bytes(&again));

    let run = loaded(&cfg);
    let st = setup(&run, tmp.path(), None).unwrap();
    let report = run_pipeline(st.problem.as_ref(), &read_vector_csv(&zs).unwrap(), &st.theta_bar, &run.sensitivity).unwrap();
    let lib = tmp.path().join("lib");
    report.write(&lib).unwrap();
    for f in ["report.json", "indices.csv", "sweep.csv", "spectrum.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(lib.join(f)).unwrap(), "{f}");
    }
    assert_eq!(report.sweep.len(), run.sensitivity.lambda_grid.len());
    let sweep = fs::read_to_string(a.join("sweep.csv")).unwrap();
    let header = sweep.lines().next().unwrap();
    assert_eq!(header.matches("lambda_min=").count(), run.sensitivity.lambda_grid.len());
    assert_eq!(Manifest::read(&b).unwrap().config.sensitivity.headline_lambda_min, 2.0);
}

#[test]
fn tracer_sens_reports_three_boundary_and_source_groups_and_diffusion() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), TRACER_SMALL);
    let run = loaded(&cfg);
    let st = setup(&run, tmp.path(), None).unwrap();
    let zs = tmp.path().join("z0.csv");
    write_vector_csv(&zs, &st.z0).unwrap();
    let out = tmp.path().join("sens");
    let text = ok(&["sens", "--config", s(&cfg), "--z-star", s(&zs), "--out", s(&out), "--workers", "2"]);
    assert!(text.contains("boundary-right"));
    let csv = fs::read_to_string(out.join("indices.csv")).unwrap();
    let mut groups: Vec<(String, usize)> = Vec::new();
    for line in csv.lines().skip(1) {
        let g = line.split(',').next().unwrap().to_string();
        match groups.iter_mut().find(|(n, _)| *n == g) {
            Some((_, c)) => *c += 1,
            None => groups.push((g, 1)),
        }
    }
    let names: Vec<&str> = groups.iter().map(|(g, _)| g.as_str()).collect();
    assert_eq!(names, ["boundary-right", "boundary-left", "source", "diffusion"]);
    assert_eq!(groups.iter().map(|g| g.1).collect::<Vec<_>>(), [21, 21, 144, 1]);
}

#[test]
fn verify_fast_passes_and_planted_fault_is_caught() {
    let start = Instant::now();
    let text = ok(&["verify", "--level", "fast"]);
    assert!(start.elapsed().as_secs() < 120, "fast level took {:?}", start.elapsed());
    assert!(text.lines().filter(|l| l.starts_with("PASS")).count() >= 7, "{text}");

    let tmp = TempDir::new().unwrap();
    let out = hdsa(&["verify", "--fault", "drop-pressure-adjoint", "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8(out.stdout).unwrap();
    let line = text.lines().find(|l| l.contains("tracer-derivatives")).unwrap();
    assert!(line.starts_with("FAIL"), "{line}");
    assert!(tmp.path().join("verify.json").exists());
}

#[test]
fn bad_config_reports_an_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "model = \"tracer\"\n[tracer]\nmesh_fine = 8\n");
    let out = hdsa(&["solve", "--config", s(&cfg), "--out", s(&tmp.path().join("x"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("inverse crime"));
    let missing = hdsa(&["solve", "--config", "/nonexistent/run.toml", "--out", s(tmp.path())]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn tracer_desk_solve_finishes_within_ten_minutes() {
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/tracer.toml");
    let tmp = TempDir::new().unwrap();
    let start = Instant::now();
    ok(&["solve", "--config", s(&cfg), "--out", s(tmp.path())]);
    let secs = start.elapsed().as_secs_f64();
    println!("desk solve {secs:.1}s");
    assert!(secs < 600.0);
    let summary = fs::read_to_string(tmp.path().join("solve.json")).unwrap();
    assert!(summary.contains("\"failure\": null"), "{summary}");
}
