use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dichotomy_cli::{run, Command, Format, Invocation};
use time::format_description::well_known::Rfc3339;
use time::OffsetDateTime;

#[derive(Parser)]
#[command(name = "dichotomy", version, about = "Dichotomy spectra and Bohl exponents of linear time-varying systems")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Dichotomy spectrum with filtration and decomposition.
    Spectrum(Common),
    /// Upper and lower Bohl exponents of a subspace.
    Exponents(Common),
    /// Dichotomy certificate for one rate and splitting.
    Check(Common),
    /// Maximal uniformity dimensions and their dependence on the complement.
    ExploreUniformity(Common),
    /// Randomized search for complement-dependent uniformity dimensions.
    ConjectureSearch(Common),
}

#[derive(Args)]
struct Common {
    /// Run configuration document.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config's output_dir).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum, default_value = "both")]
    format: Format,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Sub::Spectrum(a) => (Command::Spectrum, a),
        Sub::Exponents(a) => (Command::Exponents, a),
        Sub::Check(a) => (Command::Check, a),
        Sub::ExploreUniformity(a) => (Command::ExploreUniformity, a),
        Sub::ConjectureSearch(a) => (Command::ConjectureSearch, a),
    };
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("configuration error: {e}");
            return ExitCode::from(2);
        }
    }
    let timestamp = OffsetDateTime::now_utc().format(&Rfc3339).unwrap_or_default();
    let inv = Invocation {
        command,
        config: args.config,
        output: args.output,
        seed: args.seed,
        format: args.format,
        timestamp,
    };
    match run(&inv) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
