use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use neurochan_cli::{configure_threads, execute, CliError, Overrides, BUNDLED};

#[derive(Parser)]
#[command(
    name = "neurochan",
    version,
    about = "Resilient multi-channel control experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a config file or bundled example name.
    Run {
        config: String,
        /// Output directory (default: neurochan-out/<name>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Exit with status 2 if a resilience certificate fails.
        #[arg(long)]
        expect_pass: bool,
    },
    /// List the bundled example configs.
    ListExamples,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads(std::env::var("NEUROCHAN_THREADS").ok().as_deref())
        .and_then(|()| dispatch(cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::ListExamples => {
            let width = BUNDLED.iter().map(|b| b.name.len()).max().unwrap_or(0);
            for b in BUNDLED {
                println!("{:width$}  {}", b.name, b.description);
            }
            Ok(())
        }
        Command::Run {
            config,
            out,
            seed,
            expect_pass,
        } => {
            let overrides = Overrides {
                seed,
                out,
                expect_pass,
            };
            let run = execute(&config, &overrides)?;
            for line in &run.outcome.report {
                println!("{line}");
            }
            for p in &run.written {
                println!("wrote {}", p.display());
            }
            Ok(())
        }
    }
}
