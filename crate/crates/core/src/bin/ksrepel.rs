use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ksrepel::app::{self, Command};
use ksrepel::config::RunConfig;

#[derive(Parser)]
#[command(name = "ksrepel", version, about = "Repulsive chemotaxis with logarithmic sensitivity: simulation and checks")]
struct Cli {
    /// TOML run configuration; defaults apply to absent sections.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    /// Seed for all random draws (overrides `run.seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 lets the runtime decide.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Evolve the nonlinear system and record diagnostics.
    Simulate,
    /// Discrete versus continuum Neumann eigenvalues.
    Eigs,
    /// Linearized decay and semigroup constants.
    Linearized,
    /// Newton solves of the stationary problem.
    Stationary,
    /// Functional inequality ensembles.
    Ineq,
    /// Trajectories for a family of ε values.
    SweepEps,
    /// Markdown summary of earlier runs.
    Report,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Simulate => Command::Simulate,
            Cmd::Eigs => Command::Eigs,
            Cmd::Linearized => Command::Linearized,
            Cmd::Stationary => Command::Stationary,
            Cmd::Ineq => Command::Ineq,
            Cmd::SweepEps => Command::SweepEps,
            Cmd::Report => Command::Report,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    #[cfg(feature = "parallel")]
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p),
        None => RunConfig::from_toml_with_env("", std::env::vars()),
    };
    let mut cfg = match cfg {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    if let Some(s) = cli.seed {
        cfg.run.seed = s;
    }
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    match app::run(cli.cmd.into(), &cfg, &out) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}

fn fail(e: &ksrepel::Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}
