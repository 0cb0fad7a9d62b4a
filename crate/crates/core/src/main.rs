use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use beurling_lab::cli::{self, Format, Scenario};
use beurling_lab::funcspace::FamilySpec;
use beurling_lab::Error;

#[derive(Parser)]
#[command(name = "beurling-lab", version, about = "Numerical experiments on Beurling regular variation")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario described by a JSON config.
    Run {
        config: PathBuf,
        /// Output directory (default: the config's `output`, else the current directory).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// List the builtin function families.
    ListBuiltins,
}

fn init_threads() -> Result<(), Error> {
    let Ok(v) = std::env::var("BEURLING_LAB_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("BEURLING_LAB_THREADS must be a non-negative integer, got {v:?}")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    }
    Ok(())
}

fn run(config: PathBuf, out: Option<PathBuf>, format: Format) -> i32 {
    let text = match std::fs::read_to_string(&config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", config.display());
            return cli::EXIT_IO;
        }
    };
    let outcome = Scenario::from_json(&text).and_then(|s| Ok((cli::run_scenario(&s)?, s)));
    let (bundle, scenario) = match outcome {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return cli::error_exit_code(&e);
        }
    };
    let dir = out.or_else(|| scenario.output.as_ref().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("."));
    if let Err(e) = cli::emit_report(&bundle, format, &dir) {
        eprintln!("error: writing report to {}: {e}", dir.display());
        return cli::EXIT_IO;
    }
    println!("{}: {:?}", bundle.scenario, bundle.verdict);
    cli::verdict_exit_code(bundle.verdict)
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(cli::EXIT_INPUT as u8);
    }
    let code = match args.command {
        Command::Run { config, out, format } => run(config, out, format),
        Command::ListBuiltins => {
            for (name, desc) in FamilySpec::NAMES {
                println!("{name}\t{desc}");
            }
            cli::EXIT_OK
        }
    };
    ExitCode::from(code as u8)
}
