use clap::{Args, Parser, Subcommand};
use qnd::commands::{self, CliError, ContinuousOverrides, DiscreteOverrides, Globals};
use qnd::output::OutDir;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

/// Simulate and analyse repeated QND measurement chains.
#[derive(Debug, Parser)]
#[command(name = "qnd", version)]
struct Cli {
    /// Master seed; overrides `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0: all cores); overrides `run.workers`.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Print errors only.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// JSON configuration file.
    config: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every structural check on a configuration.
    Validate(ConfigArg),
    /// Discrete trajectories, collapse statistics and step logs.
    SimulateDiscrete {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        trajectories: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        record_every: Option<usize>,
    },
    /// Continuous paths, ensemble means and fitted decay rates.
    SimulateContinuous {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long)]
        record_every: Option<usize>,
    },
    /// Relative-entropy rate tables and confidence steps.
    Rates(ConfigArg),
    /// Monte-Carlo moments of the rescaled counting process against the diffusive limit.
    ScalingCheck {
        #[command(flatten)]
        config: ConfigArg,
        /// Comma-separated δ values; overrides `run.deltas`.
        #[arg(long, value_delimiter = ',')]
        deltas: Option<Vec<f64>>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Write a built-in scenario or a config's scenario as an editable inline config.
    ExportScenario {
        /// Built-in scenario name or configuration file.
        source: String,
    },
}

fn run(cli: Cli) -> Result<Vec<String>, CliError> {
    let globals = Globals { seed: cli.seed, workers: cli.workers, out: cli.out.clone() };
    let out = || OutDir::create(&globals.out).map_err(CliError::from);
    match cli.command {
        Command::Validate(c) => {
            let doc = commands::load(&c.config, &globals)?;
            commands::validate(&doc)
        }
        Command::SimulateDiscrete { config, trajectories, steps, record_every } => {
            let doc = commands::load(&config.config, &globals)?;
            commands::simulate_discrete(&doc, &DiscreteOverrides { trajectories, steps, record_every }, &out()?)
        }
        Command::SimulateContinuous { config, paths, dt, t_max, record_every } => {
            let doc = commands::load(&config.config, &globals)?;
            commands::simulate_continuous(&doc, &ContinuousOverrides { paths, dt, t_max, record_every }, &out()?)
        }
        Command::Rates(c) => {
            let doc = commands::load(&c.config, &globals)?;
            commands::rates(&doc, &out()?)
        }
        Command::ScalingCheck { config, deltas, samples } => {
            let doc = commands::load(&config.config, &globals)?;
            commands::scaling_check(&doc, deltas, samples, &out()?)
        }
        Command::ExportScenario { source } => commands::export_scenario(&source, &globals, &out()?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let quiet = cli.quiet;
    match run(cli) {
        Ok(lines) => {
            if !quiet {
                let mut stdout = std::io::stdout().lock();
                for l in lines {
                    if writeln!(stdout, "{l}").is_err() {
                        break;
                    }
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
