use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use hdsa::optim::TrustRegionOptions;
use hdsa::problem::QuadraticConfig;
use hdsa::sensitivity::PipelineConfig;
use hdsa::{Error, Result};
use hdsa_tracer::TracerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    #[default]
    Quadratic,
    Tracer,
}

/// One TOML file describing a run. `seed` drives the data noise and the
/// eigensolver sketch, and replaces `tracer.seed` and `sensitivity.gevp.seed`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelKind,
    pub seed: u64,
    pub quadratic: QuadraticConfig,
    pub tracer: TracerConfig,
    pub solver: TrustRegionOptions,
    pub sensitivity: PipelineConfig,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub lambda_min: Option<f64>,
    pub max_iter: Option<usize>,
}

/// A parsed config with the bytes it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    /// Directory that relative paths in the config resolve against.
    pub base: PathBuf,
    pub sha256: String,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<LoadedConfig> {
        let bytes = fs::read(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let text = String::from_utf8(bytes.clone())
            .map_err(|_| Error::Config(format!("{}: not UTF-8", path.display())))?;
        let config = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        Ok(LoadedConfig {
            config,
            base: path.parent().map(Path::to_path_buf).unwrap_or_default(),
            sha256: crate::manifest::sha256_hex(&bytes),
        })
    }

    /// Applies overrides and propagates the run seed.
    pub fn finalize(mut self, o: Overrides) -> Result<Self> {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(l) = o.lambda_min {
            self.sensitivity.headline_lambda_min = l;
        }
        if let Some(n) = o.max_iter {
            self.solver.max_iter = n;
        }
        self.tracer.seed = self.seed;
        self.sensitivity.gevp.seed = self.seed;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.model == ModelKind::Tracer {
            self.tracer.validate()?;
        }
        self.sensitivity.gevp.validate()?;
        let s = &self.sensitivity;
        if !(s.headline_lambda_min > 0.0) || s.lambda_grid.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::Config("eigenvalue thresholds must be positive".into()));
        }
        if s.alpha.is_some_and(|a| !(a > 0.0)) {
            return Err(Error::Config("alpha must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_and_overrides_propagate() {
        let cfg = RunConfig::from_toml("model = \"tracer\"\nseed = 3\n[sensitivity]\nlambda_grid = [0.5, 1.0]\n")
            .unwrap()
            .finalize(Overrides {
                seed: Some(9),
                lambda_min: Some(2.0),
                max_iter: Some(4),
            })
            .unwrap();
        assert_eq!(cfg.model, ModelKind::Tracer);
        assert_eq!((cfg.seed, cfg.tracer.seed, cfg.sensitivity.gevp.seed), (9, 9, 9));
        assert_eq!(cfg.sensitivity.headline_lambda_min, 2.0);
        assert_eq!(cfg.sensitivity.lambda_grid, vec![0.5, 1.0]);
        assert_eq!(cfg.solver.max_iter, 4);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_thresholds() {
        assert!(RunConfig::from_toml("modle = \"tracer\"").is_err());
        let bad = Overrides {
            lambda_min: Some(0.0),
            ..Default::default()
        };
        assert!(RunConfig::default().finalize(bad).is_err());
    }
}
