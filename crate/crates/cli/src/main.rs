use std::path::PathBuf;

use clap::{Parser, Subcommand};
use reliab_cli::commands;
use reliab_cli::config::RunConfig;
use reliab_cli::error::CliError;

#[derive(Parser)]
#[command(name = "reliab", version, about = "Reliability of survey incomes against register data")]
struct Cli {
    /// Worker threads (defaults to the number of cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a linked panel from the `[dgp]` section.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the configured analyses on a linked panel CSV.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to `io.input` from the config.
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Link survey records to register spells and apply the sample restrictions.
    Harmonize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        spells: Option<PathBuf>,
        #[arg(long)]
        survey: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn required(arg: Option<PathBuf>, fallback: &Option<PathBuf>, flag: &str, key: &str) -> Result<PathBuf, CliError> {
    arg.or_else(|| fallback.clone())
        .ok_or_else(|| CliError::config(format!("missing --{flag} (or `io.{key}` in the config)")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::Simulate { config, out } => commands::simulate(&RunConfig::load(&config)?, &out),
        Command::Analyze { config, input, out } => {
            let cfg = RunConfig::load(&config)?;
            let input = required(input, &cfg.io.input, "in", "input")?;
            let out = required(out, &cfg.io.output_dir, "out", "output_dir")?;
            commands::analyze(&cfg, &input, &out)
        }
        Command::Harmonize { config, spells, survey, out } => {
            let cfg = RunConfig::load(&config)?;
            let spells = required(spells, &cfg.io.spells, "spells", "spells")?;
            let survey = required(survey, &cfg.io.survey, "survey", "survey")?;
            let out = required(out, &cfg.io.output_dir, "out", "output_dir")?;
            commands::harmonize(&cfg, &spells, &survey, &out)
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        log::error!("{e}");
        std::process::exit(e.exit_code());
    }
}
