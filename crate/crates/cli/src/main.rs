use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rendezvous_cli::{bundled, load, run, CliError, RunOptions};

#[derive(Parser)]
#[command(
    name = "rendezvous-lab",
    version,
    about = "Run lattice rendezvous experiments from JSON scenarios"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file or a bundled scenario by name.
    Run {
        scenario: String,
        /// Output directory (overrides the scenario's `output`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads.
        #[arg(long, env = "RENDEZVOUS_LAB_JOBS")]
        jobs: Option<usize>,
        /// Certified kernel truncation budget.
        #[arg(long)]
        eps_tail: Option<f64>,
    },
    /// List bundled scenarios.
    List,
    /// Check a scenario without running it.
    Validate { scenario: String },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::List => {
            print!("{}", bundled::listing());
            Ok(())
        }
        Command::Validate { scenario } => load(&scenario).map(|(sc, _)| {
            println!("ok: {} ({})", sc.name, sc.experiment.type_name());
        }),
        Command::Run {
            scenario,
            out,
            jobs,
            eps_tail,
        } => load(&scenario).and_then(|(sc, bytes)| {
            let opts = RunOptions {
                out_dir: out,
                eps_tail,
                jobs,
            };
            let summary = run(&sc, &bytes, &opts)?;
            for o in &summary.manifest.outputs {
                println!("{}", summary.out_dir.join(&o.file).display());
            }
            println!("{}", summary.out_dir.join("manifest.json").display());
            Ok(())
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let tag = match e {
                CliError::Validation(_) => "validation error",
                CliError::Numerical(_) => "numerical failure",
                CliError::Io(_) => "i/o error",
            };
            eprintln!("{tag}: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
