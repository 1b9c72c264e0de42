use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cavity_homodyne::config::{validate_config, ExperimentConfig};
use cavity_homodyne::error::Error;
use cavity_homodyne::experiments::{run, run_all_criteria, CODE_VERSION};
use cavity_homodyne::output::OutputFormat;

/// Driven cavity-QED simulator under continuous homodyne monitoring:
/// stochastic master equation trajectories, steady-state validation, and
/// information-rate experiments.
#[derive(Parser)]
#[command(name = "cavity-homodyne", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment described by a key = value config file.
    Run {
        /// Path to the experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Override the seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output path from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the output format (csv or json).
        #[arg(long)]
        format: Option<String>,
    },
    /// Run the built-in acceptance battery (and optionally a directory of
    /// experiment configs), printing one pass/fail line per criterion.
    All {
        /// Directory of additional *.conf experiment files to run.
        #[arg(long)]
        config_dir: Option<PathBuf>,
        /// Where to write the machine-readable summary.
        #[arg(long, default_value = "acceptance_summary.json")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Config(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn dispatch() -> Result<ExitCode, Error> {
    match Cli::parse().command {
        Command::Run {
            config,
            seed,
            out,
            format,
        } => {
            let raw = std::fs::read_to_string(&config)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", config.display())))?;
            let mut cfg: ExperimentConfig = validate_config(&raw)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(path) = out {
                cfg.output_path = Some(path);
            }
            if let Some(f) = format {
                cfg.format = f.parse::<OutputFormat>()?;
            }
            let written = run(&cfg)?;
            for path in written {
                println!("wrote {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::All { config_dir, out } => {
            let reports = run_all_criteria();
            for report in &reports {
                println!("{}", report.line());
            }
            let summary = serde_json::json!({
                "version": CODE_VERSION,
                "criteria": reports.iter().map(|r| serde_json::json!({
                    "id": r.id,
                    "name": r.name,
                    "passed": r.passed,
                    "details": r.details,
                })).collect::<Vec<_>>(),
                "all_passed": reports.iter().all(|r| r.passed),
            });
            std::fs::write(&out, format!("{}\n", serde_json::to_string_pretty(&summary).unwrap()))?;
            println!("wrote {}", out.display());

            if let Some(dir) = config_dir {
                let mut entries: Vec<PathBuf> = std::fs::read_dir(&dir)?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.extension().is_some_and(|ext| ext == "conf"))
                    .collect();
                entries.sort();
                for path in entries {
                    let raw = std::fs::read_to_string(&path).map_err(|e| {
                        Error::Config(format!("cannot read {}: {e}", path.display()))
                    })?;
                    let cfg = validate_config(&raw)?;
                    for written in run(&cfg)? {
                        println!("wrote {}", written.display());
                    }
                }
            }

            if reports.iter().all(|r| r.passed) {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(2))
            }
        }
    }
}
