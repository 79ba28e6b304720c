use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ipslab_cli::{has_errors, load_config, run_experiment, validate, write_outputs, Config, Status};

#[derive(Parser)]
#[command(name = "ipslab", version, about = "Run and validate particle-system experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its artifacts.
    Run {
        config: PathBuf,
        /// Simulation worker threads (default: logical cores).
        #[arg(long)]
        workers: Option<usize>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config output directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Check a config and print diagnostics.
    Validate {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

const CONFIG_ERROR: u8 = 2;
const RUNTIME_ERROR: u8 = 1;

fn load(path: &Path, seed: Option<u64>) -> Result<Config, ExitCode> {
    match load_config(path) {
        Ok(mut c) => {
            if let Some(s) = seed {
                c.set_seed(s);
            }
            Ok(c)
        }
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            Err(ExitCode::from(CONFIG_ERROR))
        }
    }
}

/// Prints diagnostics and reports whether any is an error.
fn report(path: &Path, config: &Config) -> bool {
    let diags = validate(config);
    for d in &diags {
        eprintln!("{}: {d}", path.display());
    }
    has_errors(&diags)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { config, seed } => {
            let c = match load(&config, seed) {
                Ok(c) => c,
                Err(code) => return code,
            };
            if report(&config, &c) {
                ExitCode::from(CONFIG_ERROR)
            } else {
                println!("{}: ok ({})", config.display(), c.kind());
                ExitCode::SUCCESS
            }
        }
        Command::Run { config, workers, seed, output } => {
            let mut c = match load(&config, seed) {
                Ok(c) => c,
                Err(code) => return code,
            };
            if let Some(dir) = output {
                c.set_output_dir(dir);
            }
            if report(&config, &c) {
                return ExitCode::from(CONFIG_ERROR);
            }
            let workers = workers.or_else(|| std::thread::available_parallelism().ok().map(|n| n.get()));
            let dir = c.output_dir().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("ipslab-output").join(c.kind().name()));
            let out = run_experiment(&c, workers);
            if let Err(e) = write_outputs(&dir, &c, &out) {
                eprintln!("error: writing {}: {e}", dir.display());
                return ExitCode::from(RUNTIME_ERROR);
            }
            match out.status {
                Status::Ok => {
                    println!("{}", dir.display());
                    ExitCode::SUCCESS
                }
                Status::Failed => {
                    eprintln!("error: {}", out.error.as_deref().unwrap_or("estimator failure"));
                    eprintln!("partial results written to {}", dir.display());
                    ExitCode::from(RUNTIME_ERROR)
                }
            }
        }
    }
}
