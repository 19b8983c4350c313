//! The `hdsa` command: synthetic data, trust-region solves, sensitivity
//! reports and the verification suite, driven by one TOML config.
//!
//! ```text
//! hdsa generate --config run.toml --out data/
//! hdsa solve    --config run.toml --data data/ --out solve/
//! hdsa sens     --config run.toml --data data/ --z-star solve/z_star.csv --out sens/
//! hdsa verify   --level full
//! ```
//!
//! Every output directory gets a `manifest.json` with the config hash, the
//! effective config, the seed and hashes of all inputs and outputs.

pub mod commands;
pub mod config;
pub mod manifest;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::{Overrides, RunConfig};
use hdsa::verify::Level;
use hdsa::{Error, Result};
use hdsa_tracer::Fault;

#[derive(Debug, Parser)]
#[command(name = "hdsa", version, about = "Hyper-differential sensitivity analysis driver")]
pub struct Cli {
    /// Caps the worker threads used inside each stage.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Writes the synthetic data set.
    Generate(#[command(flatten)] Common),
    /// Solves the inverse problem.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Directory written by `generate`; regenerated in memory if absent.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        max_iter: Option<usize>,
    },
    /// Computes sensitivity indices at a stored solve.
    Sens {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        z_star: PathBuf,
        /// Threshold of the headline report.
        #[arg(long)]
        lambda_min: Option<f64>,
    },
    /// Runs the oracle suite and prints one line per check.
    Verify {
        #[arg(long, value_enum, default_value = "fast")]
        level: LevelArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Plants a derivative defect, which the suite must catch.
        #[arg(long, value_enum)]
        fault: Option<FaultArg>,
        /// Tracer configuration for the desk-scale run (its `tracer` table).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Writes `verify.json` here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        max_iter: usize,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LevelArg {
    Fast,
    Full,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FaultArg {
    DropPressureAdjoint,
}

fn load(common: &Common, o: Overrides) -> Result<(config::LoadedConfig, RunConfig)> {
    let loaded = RunConfig::load(&common.config)?;
    let cfg = loaded.config.clone().finalize(Overrides {
        seed: common.seed,
        ..o
    })?;
    Ok((loaded, cfg))
}

/// Runs one command. Returns whether it succeeded; `verify` fails when any
/// check fails.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<bool> {
    if let Some(n) = cli.workers {
        // Fails only if a pool already exists, e.g. a second call in-process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match cli.command {
        Command::Generate(common) => {
            let (loaded, cfg) = load(&common, Overrides::default())?;
            commands::generate(&loaded, &cfg, &common.out)?;
            writeln!(out, "wrote {}", common.out.display())?;
        }
        Command::Solve { common, data, max_iter } => {
            let (loaded, cfg) = load(&common, Overrides { max_iter, ..Default::default() })?;
            commands::solve(&loaded, &cfg, data.as_deref(), &common.out)?;
            writeln!(out, "wrote {}", common.out.display())?;
        }
        Command::Sens { common, data, z_star, lambda_min } => {
            let (loaded, cfg) = load(&common, Overrides { lambda_min, ..Default::default() })?;
            let report = commands::sens(&loaded, &cfg, data.as_deref(), &z_star, &common.out)?;
            writeln!(out, "rank {} at lambda_min {}", report.rank, report.headline_lambda_min)?;
            for (group, values) in report.grouped() {
                let max = values.iter().map(|v| v.1).fold(0.0, f64::max);
                writeln!(out, "{group:<16} {:>4} indices, max {max:.4e}", values.len())?;
            }
            writeln!(out, "wrote {}", common.out.display())?;
        }
        Command::Verify { level, seed, fault, config, out: dir, max_iter } => {
            let tracer = match config {
                Some(p) => RunConfig::load(&p)?.config.tracer,
                None => Default::default(),
            };
            let opts = commands::VerifyOptions {
                level: match level {
                    LevelArg::Fast => Level::Fast,
                    LevelArg::Full => Level::Full,
                },
                seed,
                fault: fault.map(|FaultArg::DropPressureAdjoint| Fault::DropPressureAdjoint),
                tracer,
                max_iter,
            };
            let mut io_err = None;
            let checks = commands::verify_suite(&opts, |c| {
                if let Err(e) = writeln!(out, "{}", c.line()).and_then(|_| out.flush()) {
                    io_err.get_or_insert(e);
                }
            })?;
            if let Some(e) = io_err {
                return Err(Error::Io(e));
            }
            let failed = checks.iter().filter(|c| !c.passed()).count();
            writeln!(out, "{} of {} checks passed", checks.len() - failed, checks.len())?;
            if let Some(dir) = dir {
                commands::write_checks(&checks, &dir)?;
            }
            return Ok(failed == 0);
        }
    }
    Ok(true)
}

/// The user guide under `book/`, compiled so its examples run as doctests.
#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/quickstart.md")]
    pub mod quickstart {}
    #[doc = include_str!("../../../book/src/library.md")]
    pub mod library {}
    #[doc = include_str!("../../../book/src/tracer.md")]
    pub mod tracer {}
    #[doc = include_str!("../../../book/src/configuration.md")]
    pub mod configuration {}
}
