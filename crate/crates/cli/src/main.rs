use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use aggmvh_cli::output::write_atomic;
use aggmvh_cli::{exit, parse_config, run, CliError, Mode, OutputFormat};

/// Bayes estimation for two-stage multivariate hypergeometric sampling with
/// aggregated second-stage counts.
///
/// Exit status: 0 success, 1 output could not be written, 2 malformed config
/// or infeasible inputs, 3 enumeration guard exceeded.
#[derive(Debug, Parser)]
#[command(name = "aggmvh", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// First-stage pmf of `observation.x` and, with `observation.y`, the conditional and joint pmf.
    Pmf(Common),
    /// Both Bayes estimates for `observation`.
    Estimate(Common),
    /// Exact risks of both rules by enumeration.
    RiskExact(Common),
    /// Monte Carlo risks of both rules.
    RiskMc(Common),
    /// Risk difference, its bound, and the dominance verdict for the design.
    Delta(Common),
    /// Dominance verdicts over the `[scan]` grid.
    Scan(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// TOML experiment config.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// RNG seed; overrides `seed` in the config.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Output file, written atomically; standard output when omitted.
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
    /// Output format; overrides `output_format` in the config.
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
    /// Monte Carlo replicates; overrides `replicates` in the config.
    #[arg(long, value_name = "N")]
    replicates: Option<u64>,
}

fn execute(mode: Mode, args: Common) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    let mut config = parse_config(&text)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(format) = args.format {
        config.output_format = format;
    }
    if let Some(r) = args.replicates {
        config.replicates = Some(r);
    }
    if let Some(path) = args.output {
        config.output_path = Some(path);
    }
    let config = config.with_mode(mode)?;
    let output = run(&config)?;
    let text = output.render(config.output_format)?;
    write_atomic(&text, config.output_path.as_deref())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, args) = match cli.command {
        Command::Pmf(a) => (Mode::Pmf, a),
        Command::Estimate(a) => (Mode::Estimate, a),
        Command::RiskExact(a) => (Mode::RiskExact, a),
        Command::RiskMc(a) => (Mode::RiskMc, a),
        Command::Delta(a) => (Mode::Delta, a),
        Command::Scan(a) => (Mode::Scan, a),
    };
    match execute(mode, args) {
        Ok(()) => ExitCode::from(exit::OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
