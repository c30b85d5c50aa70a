//! `vasiplab` command-line front end.
//!
//! Exit status: 0 when every check in the report passed, 1 when a check
//! failed, 2 on usage or configuration errors (nothing is written then).

mod config;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::ExperimentConfig;
use run::{Outcome, ParamsOverrides};

#[derive(Parser)]
#[command(name = "vasiplab", version, about = "Simulations and limit-law diagnostics for sequential intermittent maps")]
struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "VASIPLAB_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out` in the config (default `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct WithParams {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    margin: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Orbits of the schedule (one deterministic orbit or an ensemble).
    Simulate(Common),
    /// Ulam density: fixed point or push-forward, optional Green-Kubo sum.
    Ulam(Common),
    /// Decay-of-correlation integrand and its log-log slope.
    Decay(Common),
    /// Cone decomposition of the observable and cone invariance.
    Cone(Common),
    /// Block plan and its partition laws.
    Blocks(WithParams),
    /// Self-norming central limit theorem.
    Clt(Common),
    /// Law of the iterated logarithm band.
    Lil(Common),
    /// Moment scaling of block sums.
    Lemmas(Common),
    /// Gaussian embedding error and the Berkes-Philipp series.
    Embed(Common),
    /// Parameter chain for given alpha and dimension.
    Params(WithParams),
    /// Fiberwise densities and statistics of a random driver.
    Quenched(Common),
    /// Split of a covariance matrix into its null and range parts.
    Split(Common),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(w) = cli.workers {
        if w == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w).build_global() {
            eprintln!("error: cannot start {w} workers: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn prepare(path: Option<&Path>, seed: Option<u64>) -> Result<ExperimentConfig, String> {
    let mut cfg = match path {
        Some(p) => config::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn dispatch(command: Command) -> Result<bool, String> {
    let (cfg, out, outcome) = match command {
        Command::Blocks(a) => {
            let cfg = prepare(a.config.as_deref(), a.seed)?;
            let o = ParamsOverrides { alpha: a.alpha, d: a.d, margin: a.margin };
            let r = run::blocks(&cfg, &o)?;
            (cfg, a.out, r)
        }
        Command::Params(a) => {
            let cfg = prepare(a.config.as_deref(), a.seed)?;
            let o = ParamsOverrides { alpha: a.alpha, d: a.d, margin: a.margin };
            let r = run::params(&cfg, &o)?;
            (cfg, a.out, r)
        }
        Command::Simulate(c) => common(c, run::simulate)?,
        Command::Ulam(c) => common(c, run::ulam)?,
        Command::Decay(c) => common(c, run::decay)?,
        Command::Cone(c) => common(c, run::cone)?,
        Command::Clt(c) => common(c, run::clt)?,
        Command::Lil(c) => common(c, run::lil)?,
        Command::Lemmas(c) => common(c, run::lemmas)?,
        Command::Embed(c) => common(c, run::embed)?,
        Command::Quenched(c) => common(c, run::quenched)?,
        Command::Split(c) => common(c, run::split)?,
    };
    let dir = out.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    write_all(&dir, &outcome)?;
    Ok(outcome.pass)
}

type Loaded = (ExperimentConfig, Option<PathBuf>, Outcome);

fn common(c: Common, f: fn(&ExperimentConfig) -> Result<Outcome, String>) -> Result<Loaded, String> {
    let cfg = prepare(Some(&c.config), c.seed)?;
    let r = f(&cfg)?;
    Ok((cfg, c.out, r))
}

fn write_all(dir: &Path, outcome: &Outcome) -> Result<(), String> {
    std::fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    for (name, body) in &outcome.files {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| format!("cannot write {}: {e}", p.display()))?;
    }
    Ok(())
}
