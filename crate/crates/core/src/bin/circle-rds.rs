use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use circle_rds::experiment::{run, Command, ExperimentConfig, ExperimentError};

#[derive(Parser)]
#[command(name = "circle-rds", version, about = "Experiments on random circle maps with additive noise")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// TOML config file; flags below override its keys
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// output directory (default: ./out/<subcommand>)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// run even when a hypothesis check fails
    #[arg(long, global = true)]
    force: bool,
    /// noise level, overrides noise.theta and noise.thetas
    #[arg(long, global = true)]
    theta: Option<f64>,
}

#[derive(Args)]
struct PassageArgs {
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    d0: Option<f64>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    max_iter: Option<u64>,
    /// also run the verification designs for the sign of the exponent
    #[arg(long)]
    designs: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// hypothesis checks, written as JSON
    Preflight,
    /// Lyapunov exponent per noise level
    Lyapunov,
    /// distance series of two orbits under common noise
    TwoPoint,
    /// stationary density and an orbit histogram
    Density,
    /// moment Lyapunov curve, its derivatives at 0 and Monte Carlo checks
    Moment,
    /// nonzero root of the moment Lyapunov function
    Gamma,
    /// barrier passage ensembles
    Passage(PassageArgs),
    /// near-diagonal occupation growth
    MeasureGrowth,
    /// histogram of the two-point distance
    DistHist,
    /// Lyapunov exponent over a grid of (nu, theta)
    Sweep,
}

fn configure(cli: &Cli) -> Result<(Command, ExperimentConfig, PathBuf), ExperimentError> {
    let c = &cli.common;
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if c.workers.is_some() {
        cfg.workers = c.workers;
    }
    if let Some(t) = c.theta {
        cfg.noise.theta = Some(t);
        cfg.noise.thetas = None;
        cfg.noise.zero_exponent_bracket = None;
    }
    let cmd = match &cli.command {
        Cmd::Preflight => Command::Preflight,
        Cmd::Lyapunov => Command::Lyapunov,
        Cmd::TwoPoint => Command::TwoPoint,
        Cmd::Density => Command::Density,
        Cmd::Moment => Command::Moment,
        Cmd::Gamma => Command::Gamma,
        Cmd::Passage(a) => {
            let p = &mut cfg.passage;
            p.epsilon = a.epsilon.or(p.epsilon);
            p.delta = a.delta.or(p.delta);
            p.d0 = a.d0.or(p.d0);
            if let Some(n) = a.count {
                p.count = n;
            }
            if let Some(n) = a.max_iter {
                p.max_iter = n;
            }
            p.designs |= a.designs;
            Command::Passage
        }
        Cmd::MeasureGrowth => Command::MeasureGrowth,
        Cmd::DistHist => Command::DistHist,
        Cmd::Sweep => Command::Sweep,
    };
    cfg.validate()?;
    let out = c
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(cmd.name()));
    Ok((cmd, cfg, out))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = configure(&cli).and_then(|(cmd, cfg, out)| {
        let m = run(cmd, &cfg, &out, cli.common.force)?;
        eprintln!(
            "{}: wrote {} files to {} in {:.1} s",
            m.subcommand,
            m.outputs.len(),
            out.display(),
            m.wall_clock_seconds
        );
        for n in &m.notes {
            eprintln!("note: {n}");
        }
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
