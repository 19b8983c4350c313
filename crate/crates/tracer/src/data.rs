//! Synthetic data: a fine-mesh forward solve at `κ_true`, `θ = 0`, restricted
//! to the sensors with multiplicative Gaussian noise.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::TracerConfig;
use crate::mesh::Mesh;
use crate::model::{Discretization, Observations};
use hdsa::linops::csv;
use hdsa::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataBundle {
    pub observations: Observations,
    /// Mean magnitude of the concentration data.
    pub w_c: f64,
    /// Mean magnitude of the pressure data.
    pub w_p: f64,
    pub seed: u64,
    pub noise_rel: f64,
    pub mesh: usize,
    pub n_steps: usize,
    /// Observation times.
    pub times: Vec<f64>,
    pub concentration_sensors: Vec<[f64; 2]>,
    pub pressure_sensors: Vec<[f64; 2]>,
}

fn mean_abs<'a>(v: impl Iterator<Item = &'a f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x.abs(), n + 1));
    if n == 0 {
        1.0
    } else {
        s / n as f64
    }
}

/// Noise-free sensor readings of the fine-mesh solve at the coarse
/// observation times.
pub fn clean_observations(cfg: &TracerConfig) -> Result<Observations> {
    cfg.validate()?;
    let mesh = Mesh::new(cfg.mesh_fine)?;
    let disc = Discretization::new(mesh, cfg.n_steps_fine, cfg)?;
    let kappa = mesh.interpolate(|x, y| cfg.kappa_true.eval(x, y));
    let state = disc.forward(&kappa, &vec![0.0; cfg.layout.dim()])?;
    Ok(disc.observe(&state, cfg.n_steps_fine / cfg.n_observations))
}

/// `d = clean·(1 + noise_rel·ξ)` with `ξ ~ N(0, 1)` per datum.
pub fn add_noise(clean: &Observations, noise_rel: f64, seed: u64) -> Observations {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perturb = |v: f64| {
        let xi: f64 = StandardNormal.sample(&mut rng);
        v + noise_rel * v.abs() * xi
    };
    let concentration = clean
        .concentration
        .iter()
        .map(|row| row.iter().map(|&v| perturb(v)).collect())
        .collect();
    let pressure = clean.pressure.iter().map(|&v| perturb(v)).collect();
    Observations {
        concentration,
        pressure,
    }
}

pub fn generate_data(cfg: &TracerConfig) -> Result<DataBundle> {
    let clean = clean_observations(cfg)?;
    let observations = add_noise(&clean, cfg.noise_rel, cfg.seed);
    let dt = cfg.t_final / cfg.n_observations as f64;
    Ok(DataBundle {
        w_c: mean_abs(observations.concentration.iter().flatten()),
        w_p: mean_abs(observations.pressure.iter()),
        observations,
        seed: cfg.seed,
        noise_rel: cfg.noise_rel,
        mesh: cfg.mesh_fine,
        n_steps: cfg.n_steps_fine,
        times: (1..=cfg.n_observations).map(|k| k as f64 * dt).collect(),
        concentration_sensors: cfg.sensors.concentration.clone(),
        pressure_sensors: cfg.sensors.pressure.clone(),
    })
}

#[derive(Serialize, Deserialize)]
struct BundleMeta {
    w_c: f64,
    w_p: f64,
    seed: u64,
    noise_rel: f64,
    mesh: usize,
    n_steps: usize,
    times: Vec<f64>,
    concentration_sensors: Vec<[f64; 2]>,
    pressure_sensors: Vec<[f64; 2]>,
}

impl DataBundle {
    /// Writes `concentration.csv` (time × sensor), `pressure.csv` and
    /// `data.json` with the remaining metadata.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let rows = self.observations.concentration.len();
        let cols = self.concentration_sensors.len();
        let c = DMatrix::from_fn(rows, cols, |i, j| self.observations.concentration[i][j]);
        csv::write_matrix_csv(dir.join("concentration.csv"), &c)?;
        csv::write_vector_csv(
            dir.join("pressure.csv"),
            &DVector::from_vec(self.observations.pressure.clone()),
        )?;
        let meta = BundleMeta {
            w_c: self.w_c,
            w_p: self.w_p,
            seed: self.seed,
            noise_rel: self.noise_rel,
            mesh: self.mesh,
            n_steps: self.n_steps,
            times: self.times.clone(),
            concentration_sensors: self.concentration_sensors.clone(),
            pressure_sensors: self.pressure_sensors.clone(),
        };
        fs::write(dir.join("data.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join("data.json"))?;
        let meta: BundleMeta = serde_json::from_str(&text)?;
        let c = csv::read_matrix_csv(dir.join("concentration.csv"))?;
        let p = csv::read_vector_csv(dir.join("pressure.csv"))?;
        if c.ncols() != meta.concentration_sensors.len() || p.len() != meta.pressure_sensors.len() {
            return Err(Error::Parse {
                path: dir.display().to_string(),
                message: "data files disagree with the recorded sensor layout".into(),
            });
        }
        Ok(Self {
            observations: Observations {
                concentration: c.row_iter().map(|r| r.iter().copied().collect()).collect(),
                pressure: p.iter().copied().collect(),
            },
            w_c: meta.w_c,
            w_p: meta.w_p,
            seed: meta.seed,
            noise_rel: meta.noise_rel,
            mesh: meta.mesh,
            n_steps: meta.n_steps,
            times: meta.times,
            concentration_sensors: meta.concentration_sensors,
            pressure_sensors: meta.pressure_sensors,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> TracerConfig {
        TracerConfig {
            mesh_fine: 12,
            mesh_coarse: 6,
            n_steps_fine: 8,
            n_steps_coarse: 4,
            n_observations: 4,
            ..TracerConfig::default()
        }
    }

    #[test]
    fn noiseless_data_is_the_restricted_fine_solve() {
        let cfg = TracerConfig {
            noise_rel: 0.0,
            ..tiny()
        };
        let b = generate_data(&cfg).unwrap();
        assert_eq!(b.observations, clean_observations(&cfg).unwrap());
        assert_eq!(b.observations.concentration.len(), 4);
        assert_eq!(b.times.len(), 4);
    }

    #[test]
    fn same_seed_same_bits() {
        let cfg = tiny();
        let a = generate_data(&cfg).unwrap();
        let b = generate_data(&cfg).unwrap();
        assert_eq!(a, b);
        let c = generate_data(&TracerConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a.observations, c.observations);
    }

    #[test]
    fn round_trip_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let b = generate_data(&tiny()).unwrap();
        b.write(dir.path()).unwrap();
        assert_eq!(DataBundle::read(dir.path()).unwrap(), b);
    }
}
