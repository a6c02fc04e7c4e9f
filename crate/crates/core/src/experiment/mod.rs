//! Config-driven experiment runs that write CSV tables plus a JSON manifest.

mod config;
mod runners;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{
    DensityConfig, DistHistConfig, ExperimentConfig, GridConfig, LyapunovConfig,
    MeasureGrowthConfig, MomentConfig, NoiseConfig, PassageConfig, PowerIterConfig,
    PreflightConfig, SweepConfig, TwoPointConfig,
};

use crate::circle_map::CircleMap;
use crate::hypothesis::{preflight, HypothesisReport};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(String),
    #[error("preflight failed: {0}")]
    Preflight(String),
    #[error(transparent)]
    Core(#[from] crate::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl ExperimentError {
    /// Process exit code: 2 config, 3 preflight, 4 numerical non-convergence.
    pub fn exit_code(&self) -> i32 {
        use crate::Error as E;
        match self {
            ExperimentError::Config(_) => 2,
            ExperimentError::Preflight(_) => 3,
            ExperimentError::Core(E::NoConvergence { .. } | E::NoBracket { .. }) => 4,
            ExperimentError::Core(
                E::InvalidArgument(_) | E::BadBand { .. } | E::FailsH1 { .. },
            ) => 2,
            _ => 1,
        }
    }
}

pub type ExpResult<T> = std::result::Result<T, ExperimentError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Preflight,
    Lyapunov,
    TwoPoint,
    Density,
    Moment,
    Gamma,
    Passage,
    MeasureGrowth,
    DistHist,
    Sweep,
}

impl Command {
    pub const ALL: [Command; 10] = [
        Command::Preflight,
        Command::Lyapunov,
        Command::TwoPoint,
        Command::Density,
        Command::Moment,
        Command::Gamma,
        Command::Passage,
        Command::MeasureGrowth,
        Command::DistHist,
        Command::Sweep,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Command::Preflight => "preflight",
            Command::Lyapunov => "lyapunov",
            Command::TwoPoint => "two-point",
            Command::Density => "density",
            Command::Moment => "moment",
            Command::Gamma => "gamma",
            Command::Passage => "passage",
            Command::MeasureGrowth => "measure-growth",
            Command::DistHist => "dist-hist",
            Command::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config_hash: String,
    pub code_version: String,
    pub seed: u64,
    pub workers: usize,
    pub thetas: Vec<f64>,
    pub hypothesis_report_hashes: Vec<String>,
    pub outputs: Vec<OutputFile>,
    pub notes: Vec<String>,
    pub wall_clock_seconds: f64,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Shared state of one run: where outputs go and what has been written.
pub(crate) struct RunContext<'a> {
    pub cfg: &'a ExperimentConfig,
    pub map: CircleMap,
    pub out: PathBuf,
    pub force: bool,
    pub outputs: Vec<OutputFile>,
    pub hashes: Vec<String>,
    pub thetas: Vec<f64>,
    pub notes: Vec<String>,
}

fn sha256_file(path: &Path) -> ExpResult<(String, u64)> {
    let bytes = fs::read(path)?;
    Ok((format!("{:x}", Sha256::digest(&bytes)), bytes.len() as u64))
}

impl RunContext<'_> {
    fn record(&mut self, name: &str) -> ExpResult<()> {
        let (sha256, bytes) = sha256_file(&self.out.join(name))?;
        self.outputs.push(OutputFile {
            file: name.to_string(),
            sha256,
            bytes,
        });
        Ok(())
    }

    pub fn write_csv<T: Serialize>(&mut self, name: &str, rows: impl IntoIterator<Item = T>) -> ExpResult<()> {
        let mut w = csv::Writer::from_path(self.out.join(name))?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        drop(w);
        self.record(name)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> ExpResult<()> {
        let text = serde_json::to_string_pretty(value).expect("json value");
        fs::write(self.out.join(name), text + "\n")?;
        self.record(name)
    }

    /// Run the hypothesis checks at `theta` and refuse to go on after a
    /// failed verdict unless forced.
    pub fn gate(&mut self, map: &CircleMap, theta: f64) -> ExpResult<HypothesisReport> {
        let report = preflight(map, theta, &self.cfg.preflight.settings())?;
        self.admit(report)
    }

    /// `gate` over several cases, with the checks run in parallel.
    pub fn gate_all(&mut self, cases: &[(CircleMap, f64)]) -> ExpResult<Vec<HypothesisReport>> {
        let settings = self.cfg.preflight.settings();
        let reports = cases
            .par_iter()
            .map(|(m, t)| preflight(m, *t, &settings))
            .collect::<crate::Result<Vec<_>>>()?;
        reports.into_iter().map(|r| self.admit(r)).collect()
    }

    fn admit(&mut self, report: HypothesisReport) -> ExpResult<HypothesisReport> {
        let theta = report.theta;
        self.hashes.push(report.hash());
        if !report.no_failures() {
            let msg = format!(
                "{} at theta = {theta}: verdicts {:?}",
                report.family,
                report.verdicts()
            );
            if !self.force {
                return Err(ExperimentError::Preflight(msg));
            }
            self.notes.push(format!("forced past failed preflight: {msg}"));
        }
        Ok(report)
    }
}

/// Run `cmd` with `cfg`, writing outputs and `manifest.json` into `out`.
pub fn run(cmd: Command, cfg: &ExperimentConfig, out: &Path, force: bool) -> ExpResult<RunManifest> {
    cfg.validate()?;
    let start = Instant::now();
    let workers = cfg.workers.unwrap_or_else(rayon::current_num_threads);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| ExperimentError::Config(format!("thread pool: {e}")))?;
    fs::create_dir_all(out)?;
    let map = cfg
        .map
        .build()
        .map_err(|e| ExperimentError::Config(e.to_string()))?;
    let mut ctx = RunContext {
        cfg,
        map,
        out: out.to_path_buf(),
        force,
        outputs: Vec::new(),
        hashes: Vec::new(),
        thetas: Vec::new(),
        notes: Vec::new(),
    };
    let result = pool.install(|| runners::dispatch(cmd, &mut ctx));
    let manifest = RunManifest {
        subcommand: cmd.name().to_string(),
        config_hash: format!(
            "{:x}",
            Sha256::digest(serde_json::to_vec(cfg).expect("config serialises"))
        ),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        workers,
        thetas: ctx.thetas.clone(),
        hypothesis_report_hashes: ctx.hashes.clone(),
        outputs: ctx.outputs.clone(),
        notes: ctx.notes.clone(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    fs::write(out.join(MANIFEST_FILE), text + "\n")?;
    result.map(|_| manifest)
}
