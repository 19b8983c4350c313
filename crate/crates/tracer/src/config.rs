use serde::{Deserialize, Serialize};

use crate::params::AuxLayout;
use hdsa::{Error, Result};

/// How the misfit Hessian is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HessianMode {
    #[default]
    Full,
    GaussNewton,
}

/// Treatment of the advective flux through the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransportBoundary {
    /// Tracer leaves with the flow through `x = 0`.
    #[default]
    Open,
    /// Zero total flux everywhere; conserves tracer mass. Tracer carried
    /// against a wall accumulates there, so with strong flow through the
    /// Dirichlet sides the step is only stable for small `dt`.
    Closed,
}

/// Gaussian bump `amplitude·exp(−((x−x₀)²/sx + (y−y₀)²/sy))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    pub amplitude: f64,
    pub center: [f64; 2],
    pub scale: [f64; 2],
}

/// Log-permeability as a background value plus bumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KappaField {
    pub background: f64,
    pub bumps: Vec<Bump>,
}

impl Default for KappaField {
    /// A high-permeability channel around `y = 0.5` flanked by two
    /// low-permeability lenses, plus mild small-scale texture bumps.
    fn default() -> Self {
        let b = |amplitude, cx, cy, sx, sy| Bump {
            amplitude,
            center: [cx, cy],
            scale: [sx, sy],
        };
        Self {
            background: 0.0,
            bumps: vec![
                b(1.0, 0.5, 0.5, 0.06, 0.01),
                b(-0.8, 0.45, 0.22, 0.015, 0.015),
                b(-0.8, 0.55, 0.78, 0.015, 0.015),
                b(0.3, 0.2, 0.8, 0.004, 0.004),
                b(-0.3, 0.8, 0.25, 0.004, 0.004),
            ],
        }
    }
}

impl KappaField {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.background
            + self
                .bumps
                .iter()
                .map(|b| {
                    let dx = x - b.center[0];
                    let dy = y - b.center[1];
                    b.amplitude * (-(dx * dx / b.scale[0] + dy * dy / b.scale[1])).exp()
                })
                .sum::<f64>()
    }
}

/// Concentration and pressure sensor locations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorLayout {
    pub concentration: Vec<[f64; 2]>,
    pub pressure: Vec<[f64; 2]>,
}

impl Default for SensorLayout {
    /// A 7×7 interior grid for concentration and a ring of pressure sensors
    /// one sixteenth inside the boundary.
    fn default() -> Self {
        let grid: Vec<f64> = (1..=7).map(|i| i as f64 / 8.0).collect();
        let concentration = grid
            .iter()
            .flat_map(|&y| grid.iter().map(move |&x| [x, y]))
            .collect();
        let (lo, hi) = (0.0625, 0.9375);
        let side: Vec<f64> = (0..8).map(|i| lo + i as f64 * 0.125).collect();
        let mut pressure = Vec::new();
        for &y in &side {
            pressure.push([lo, y]);
            pressure.push([hi, y]);
        }
        for &x in &side[1..7] {
            pressure.push([x, lo]);
            pressure.push([x, hi]);
        }
        Self {
            concentration,
            pressure,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TracerConfig {
    /// Cells per side of the data-generation mesh.
    pub mesh_fine: usize,
    /// Cells per side of the inversion mesh.
    pub mesh_coarse: usize,
    pub n_steps_fine: usize,
    pub n_steps_coarse: usize,
    /// Concentration observation times, evenly spaced and ending at
    /// `t_final`; must divide `n_steps_coarse`.
    pub n_observations: usize,
    pub t_final: f64,
    /// Noise standard deviation relative to each datum.
    pub noise_rel: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    /// Misfit weights; the mean magnitude of the respective data if unset.
    pub w_c: Option<f64>,
    pub w_p: Option<f64>,
    pub seed: u64,
    pub layout: AuxLayout,
    pub sensors: SensorLayout,
    pub kappa_true: KappaField,
    /// Initial iterate of the inversion.
    pub kappa_initial: KappaField,
    pub hessian: HessianMode,
    pub boundary: TransportBoundary,
    /// Constant added to the diffusion coefficient; zero by default.
    pub artificial_diffusion: f64,
}

impl Default for TracerConfig {
    fn default() -> Self {
        Self {
            mesh_fine: 64,
            mesh_coarse: 32,
            n_steps_fine: 80,
            n_steps_coarse: 40,
            n_observations: 5,
            t_final: 0.25,
            noise_rel: 0.01,
            gamma1: 1e-5,
            gamma2: 1e-7,
            w_c: None,
            w_p: None,
            seed: 0,
            layout: AuxLayout::default(),
            sensors: SensorLayout::default(),
            kappa_true: KappaField::default(),
            kappa_initial: KappaField {
                background: 0.0,
                bumps: Vec::new(),
            },
            hessian: HessianMode::Full,
            boundary: TransportBoundary::Open,
            artificial_diffusion: 0.0,
        }
    }
}

impl TracerConfig {
    /// A small configuration for derivative checks and tests.
    pub fn small() -> Self {
        Self {
            mesh_fine: 32,
            mesh_coarse: 16,
            n_steps_fine: 20,
            n_steps_coarse: 10,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mesh_coarse < 2 || self.mesh_fine < 2 {
            return Err(Error::Config("meshes need at least 2 cells per side".into()));
        }
        if self.mesh_fine <= self.mesh_coarse {
            return Err(Error::Config(format!(
                "mesh_fine ({}) must exceed mesh_coarse ({}) to avoid the inverse crime",
                self.mesh_fine, self.mesh_coarse
            )));
        }
        if self.n_steps_coarse == 0 || self.n_steps_fine % self.n_steps_coarse != 0 {
            return Err(Error::Config(format!(
                "n_steps_fine ({}) must be a positive multiple of n_steps_coarse ({})",
                self.n_steps_fine, self.n_steps_coarse
            )));
        }
        if self.n_observations == 0 || self.n_steps_coarse % self.n_observations != 0 {
            return Err(Error::Config(format!(
                "n_observations ({}) must be a positive divisor of n_steps_coarse ({})",
                self.n_observations, self.n_steps_coarse
            )));
        }
        if !(self.t_final > 0.0) {
            return Err(Error::Config("t_final must be positive".into()));
        }
        if !(self.gamma1 >= 0.0 && self.gamma2 >= 0.0) || self.gamma1 + self.gamma2 == 0.0 {
            return Err(Error::Config("gamma1, gamma2 must be nonnegative and not both zero".into()));
        }
        if !(self.noise_rel >= 0.0) {
            return Err(Error::Config("noise_rel must be nonnegative".into()));
        }
        for w in [self.w_c, self.w_p].into_iter().flatten() {
            if !(w > 0.0) {
                return Err(Error::Config("misfit weights must be positive".into()));
            }
        }
        if !(self.artificial_diffusion >= 0.0) {
            return Err(Error::Config("artificial_diffusion must be nonnegative".into()));
        }
        self.layout.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        TracerConfig::default().validate().unwrap();
        TracerConfig::small().validate().unwrap();
        let s = SensorLayout::default();
        assert_eq!(s.concentration.len(), 49);
        assert_eq!(s.pressure.len(), 28);
    }

    #[test]
    fn inverse_crime_is_rejected() {
        let cfg = TracerConfig {
            mesh_fine: 32,
            ..TracerConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = TracerConfig {
            n_steps_fine: 50,
            ..TracerConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn toml_overrides() {
        let cfg = TracerConfig::from_toml(
            r#"
            mesh_coarse = 16
            mesh_fine = 48
            n_steps_coarse = 20
            n_observations = 10
            hessian = "gauss-newton"
            [layout]
            boundary_hats = 11
            [layout.pressure_left]
            mean = 9.0
            "#,
        )
        .unwrap();
        assert_eq!(cfg.hessian, HessianMode::GaussNewton);
        assert_eq!(cfg.layout.boundary_hats, 11);
        assert_eq!(cfg.layout.pressure_left.cos2, 0.0);
        assert_eq!(cfg.layout.dim(), 22 + 144 + 1);
        assert!(TracerConfig::from_toml("mesh_corse = 3").is_err());
    }
}
