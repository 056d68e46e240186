//! Command-line front end for the skyfade channel simulator.
//!
//! Exit codes: 0 success, 2 configuration or argument error, 3 I/O error,
//! 4 failed verdict in `reproduce`.

use clap::{Args, Parser, Subcommand, ValueEnum};
use skyfade_cli::config::{parse_scenario, preset_config, ScenarioConfig, PRESET_NAMES};
use skyfade_cli::run::{self, DumpFormat, RunError, RunOptions};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "skyfade",
    version,
    about = "Air-to-ground MIMO channel simulator: time-variant impulse responses and \
             correlation statistics under 3D trajectories and attitude rotation"
)]
struct Cli {
    /// Size of the worker thread pool (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write curve files, impulse responses, and a summary.
    Simulate(SimulateArgs),
    /// Rebuild a bundled figure scenario and check its direction verdicts.
    Reproduce(ReproduceArgs),
    /// Compare two exported curve files and report their deviation.
    Compare(CompareArgs),
    /// Parse a scenario file and print its fully resolved form.
    ValidateConfig(ValidateArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Preset name: fig3 | fig4 | fig5 | fig6 | paper-fig3 | paper-fig7 |
    /// paper-fig8 | static | straight-line.
    #[arg(conflicts_with = "config")]
    preset: Option<String>,
    /// Scenario TOML file (alternative to a preset name).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Impulse-response dump format.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Write time-autocorrelation curves.
    #[arg(long)]
    acf: bool,
    /// Write spatial cross-correlation curves.
    #[arg(long)]
    ccf: bool,
    /// Write the per-tap impulse response of scene 0.
    #[arg(long)]
    cir: bool,
    /// Anchor times in seconds, comma separated (e.g. 0,1,2).
    #[arg(long, value_delimiter = ',')]
    anchor_times: Option<Vec<f64>>,
    /// Monte-Carlo realizations per curve (0 = analytic only).
    #[arg(long)]
    realizations: Option<usize>,
    /// Reference curve CSV to compare against the matching simulated curve.
    #[arg(long)]
    compare: Option<PathBuf>,
}

#[derive(Args)]
struct ReproduceArgs {
    /// Figure scenario: fig3 | fig4 | fig5 | fig6.
    figure: String,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// First curve CSV.
    a: PathBuf,
    /// Second curve CSV.
    b: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    /// Scenario TOML file.
    #[arg(long)]
    config: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Bin,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(workers) = cli.workers {
        if workers > 0 {
            if let Err(e) = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build_global()
            {
                eprintln!("error: worker pool: {e}");
                return ExitCode::from(2);
            }
        }
    }
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(RunError::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(RunError::Io(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode, RunError> {
    match command {
        Command::Simulate(args) => {
            let cfg = simulate_config(&args)?;
            let opts = RunOptions {
                out_dir: args.out_dir,
                format: match args.format {
                    Format::Csv => DumpFormat::Csv,
                    Format::Bin => DumpFormat::Bin,
                },
                compare: args.compare,
            };
            let report = run::simulate(&cfg, &opts)?;
            for line in &report.lines {
                println!("{line}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Reproduce(args) => {
            let opts = RunOptions {
                out_dir: args.out_dir,
                ..Default::default()
            };
            let report = if let Some(seed) = args.seed {
                run::reproduce_with_seed(&args.figure, seed, &opts)?
            } else {
                run::reproduce(&args.figure, &opts)?
            };
            for line in &report.lines {
                println!("{line}");
            }
            if report.all_verdicts_pass {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("error: one or more verdicts failed");
                Ok(ExitCode::from(4))
            }
        }
        Command::Compare(args) => {
            for line in run::compare_files(&args.a, &args.b)? {
                println!("{line}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::ValidateConfig(args) => {
            let cfg = parse_scenario(&args.config).map_err(RunError::from)?;
            println!("{}", cfg.to_toml());
            println!("# hash: {}", cfg.hash());
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// Resolves the scenario for `simulate` from a preset or a file and applies
/// the command-line overrides.
fn simulate_config(args: &SimulateArgs) -> Result<ScenarioConfig, RunError> {
    let mut cfg = match (&args.preset, &args.config) {
        (Some(name), None) => preset_config(name)?,
        (None, Some(path)) => parse_scenario(path)?,
        (None, None) => {
            return Err(RunError::Config(format!(
                "simulate needs a preset ({}) or --config FILE",
                PRESET_NAMES.join("|")
            )))
        }
        (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if args.acf || args.ccf || args.cir {
        cfg.output.acf = args.acf;
        cfg.output.ccf = args.ccf;
        cfg.output.cir = args.cir;
    }
    if let Some(times) = &args.anchor_times {
        if times.is_empty() {
            return Err(RunError::Config("output.anchor_times: needs at least one anchor".into()));
        }
        cfg.output.anchor_times = times.clone();
    }
    if let Some(r) = args.realizations {
        cfg.output.realizations = r;
    }
    Ok(cfg)
}
