use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tracefem::commands::Dumps;
use tracefem::{execute, Command, LoadedConfig};

#[derive(Parser)]
#[command(name = "tracefem", version, about = "Trace finite elements for PDEs on implicit surfaces")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Run configuration (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Also write the octree as VTK.
    #[arg(long, global = true)]
    dump_grid: bool,
    /// Also write the reconstructed surface for every level.
    #[arg(long, global = true)]
    dump_surface: bool,
    /// Also write the system matrix in MatrixMarket format.
    #[arg(long, global = true)]
    dump_matrix: bool,
    /// Write the human-readable summary to this file.
    #[arg(long, global = true)]
    report: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// One solve on a uniform grid.
    Solve,
    /// Uniform refinement sweep with convergence rates.
    Converge {
        /// Number of grids (overrides `converge.levels`).
        #[arg(long)]
        levels: Option<usize>,
    },
    /// Adaptive solve-estimate-mark-refine loop.
    Adapt,
    /// Sequence of layer-fitted grids.
    Shishkin,
    /// Reconstruct the surface only.
    ExtractSurface,
    /// Audit grid, surface and patch test on the configured problem.
    Check,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let cfg = match &cli.config {
        Some(path) => LoadedConfig::load(path),
        None => LoadedConfig::parse(""),
    };
    let cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let cmd = match cli.command {
        Cmd::Solve => Command::Solve,
        Cmd::Converge { levels } => Command::Converge { levels },
        Cmd::Adapt => Command::Adapt,
        Cmd::Shishkin => Command::Shishkin,
        Cmd::ExtractSurface => Command::ExtractSurface,
        Cmd::Check => Command::Check,
    };
    let dumps = Dumps { grid: cli.dump_grid, surface: cli.dump_surface, matrix: cli.dump_matrix };
    let r = execute(cmd, &cfg, dumps, cli.report.as_ref());
    if r.exit_code == 0 {
        print!("{}", r.summary);
    } else {
        eprintln!("error: {}", r.summary);
    }
    ExitCode::from(r.exit_code as u8)
}
