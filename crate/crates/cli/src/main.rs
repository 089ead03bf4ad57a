use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gabor_cli::{run, Command, Output, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "gabor",
    version,
    about = "Frame bounds and Hamiltonian deformations of Gabor systems"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,

    /// Scenario file (JSON); built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Omit the `# generated_unix=` line from CSV files.
    #[arg(long, global = true)]
    no_timestamp: bool,

    /// Worker threads for dense linear algebra.
    #[arg(long, global = true, env = "GABOR_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Frame bounds of the configured system.
    Bounds,
    /// Ellipsoid deformation reports over the t (and E) sweep.
    Deform,
    /// Trajectory of the truncated flow from `flow.start`.
    Flow,
    /// Largest safe thickening radius.
    Epsilon,
    /// Lattice points inside the ellipsoid.
    Count,
    /// Covariance defects over the (t, z) grid.
    Covariance,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(k) = cli.threads {
        gabor_core::set_threads(k);
    }
    let cfg = match &cli.config {
        Some(p) => ScenarioConfig::load(p),
        None => Ok(ScenarioConfig::default()),
    };
    let cmd = match cli.cmd {
        Cmd::Bounds => Command::Bounds,
        Cmd::Deform => Command::Deform,
        Cmd::Flow => Command::Flow,
        Cmd::Epsilon => Command::Epsilon,
        Cmd::Count => Command::Count,
        Cmd::Covariance => Command::Covariance,
    };
    let out = Output {
        dir: cli.out,
        timestamp: !cli.no_timestamp,
    };
    match cfg.and_then(|c| run(cmd, &c, &out)) {
        Ok(files) => {
            for f in files {
                log::info!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
