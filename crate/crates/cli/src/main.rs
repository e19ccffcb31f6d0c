use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use repeater_cli::{
    cmd_analytic, cmd_discriminate, cmd_experiments, cmd_simulate, load_config, rows_to_csv,
    simulate_rows, CliError, ExperimentKind, ResultRecord,
};
use repeater_core::RepeaterConfig;

#[derive(Parser)]
#[command(
    name = "repeater",
    about = "Simulator of a photon-heralded quantum repeater chain",
    version
)]
struct Cli {
    /// TOML scenario file; omitted keys keep built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the rng seed from the scenario file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write the result record here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output format; `csv` emits per-trial rows (simulate only).
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Include a wall-clock timestamp in the record (breaks byte-level
    /// reproducibility of otherwise identical runs).
    #[arg(long, global = true)]
    timestamp: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Meanfield,
    Parallel,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form figures of merit for the configured chain.
    Analytic,
    /// Monte-Carlo ensemble of end-to-end distribution trials.
    Simulate {
        /// Number of independent trials.
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        /// Override the timing mode from the scenario file.
        #[arg(long, value_enum)]
        mode: Option<Mode>,
    },
    /// CHSH, key-distribution and teleportation runs on generated pairs.
    Experiments {
        /// Which experiment to run.
        #[arg(long, default_value = "all")]
        experiment: String,
        /// Rounds per experiment (per setting for CHSH).
        #[arg(long, default_value_t = 10_000)]
        shots: u64,
    },
    /// Photon-count discrimination profile of the detector model.
    Discriminate,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => load_config(path)?,
        None => RepeaterConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }

    let (name, body): (&str, String) = match &cli.command {
        Command::Analytic => {
            require_json(cli.format, "analytic")?;
            let outputs = cmd_analytic(&cfg)?;
            ("analytic", ResultRecord::new("analytic", &cfg, outputs, cli.timestamp).to_json())
        }
        Command::Simulate { trials, mode } => {
            if let Some(mode) = mode {
                cfg.timing_mode = match mode {
                    Mode::Meanfield => repeater_core::TimingMode::MeanField,
                    Mode::Parallel => repeater_core::TimingMode::ParallelChildren,
                };
            }
            match cli.format {
                Format::Json => {
                    let outputs = cmd_simulate(&cfg, *trials)?;
                    (
                        "simulate",
                        ResultRecord::new("simulate", &cfg, outputs, cli.timestamp).to_json(),
                    )
                }
                Format::Csv => ("simulate", rows_to_csv(&simulate_rows(&cfg, *trials)?)),
            }
        }
        Command::Experiments { experiment, shots } => {
            require_json(cli.format, "experiments")?;
            let which = ExperimentKind::parse(experiment)?;
            let outputs = cmd_experiments(&cfg, which, *shots)?;
            (
                "experiments",
                ResultRecord::new("experiments", &cfg, outputs, cli.timestamp).to_json(),
            )
        }
        Command::Discriminate => {
            require_json(cli.format, "discriminate")?;
            let outputs = cmd_discriminate(&cfg)?;
            (
                "discriminate",
                ResultRecord::new("discriminate", &cfg, outputs, cli.timestamp).to_json(),
            )
        }
    };

    match &cli.out {
        Some(path) => std::fs::write(path, body)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(body.as_bytes())
                .map_err(|e| CliError::Io(format!("{name}: {e}")))?;
        }
    }
    Ok(())
}

fn require_json(format: Format, command: &str) -> Result<(), CliError> {
    if format == Format::Csv {
        return Err(CliError::Config(format!(
            "`{command}` only supports --format json"
        )));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
