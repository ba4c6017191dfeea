//! Config-driven experiment runner for the anti-invariant cohomology
//! laboratory.

mod config;
mod expr;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use acs4::error::Error;
use config::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "acs4",
    about = "Numerical experiments on anti-invariant cohomology of almost complex 4-manifolds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's random seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the grid resolution.
        #[arg(long)]
        resolution_override: Option<usize>,
        /// Output directory for result records.
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Parse and validate a config without running it.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write the configured structure's fundamental form as a binary field
    /// with a JSON sidecar.
    DumpField {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Run a named verification bundle (or `all`) and print one line per
    /// check.
    Reproduce {
        /// Bundle name; `list` prints the available names.
        suite: String,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
}

fn load_config(path: &PathBuf) -> Result<ExperimentConfig, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    ExperimentConfig::from_json(&text)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            // A machine-readable error record on stderr.
            let record = serde_json::json!({"error": format!("{e}")});
            eprintln!("{record}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Run {
            config,
            seed,
            resolution_override,
            out_dir,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(n) = resolution_override {
                cfg.grid.resolution = n;
            }
            cfg.validate()?;
            let out = runner::run(&cfg)?;
            runner::write_outputs(&out, &out_dir)?;
            println!("{}", serde_json::to_string_pretty(&out.record).unwrap());
            Ok(ExitCode::SUCCESS)
        }
        Command::ValidateConfig { config } => {
            load_config(&config)?;
            println!("config ok");
            Ok(ExitCode::SUCCESS)
        }
        Command::DumpField { config, out_dir } => {
            let cfg = load_config(&config)?;
            runner::dump_field(&cfg, &out_dir)?;
            println!("wrote {}", out_dir.join("fundamental-form.bin").display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Reproduce { suite, out_dir } => {
            if suite == "list" {
                for name in acs4::suites::suite_names() {
                    println!("{name}");
                }
                return Ok(ExitCode::SUCCESS);
            }
            let names: Vec<String> = if suite == "all" {
                acs4::suites::suite_names()
                    .into_iter()
                    .map(String::from)
                    .collect()
            } else {
                vec![suite]
            };
            std::fs::create_dir_all(&out_dir)?;
            let mut all_passed = true;
            let mut results = Vec::new();
            for name in &names {
                let result = acs4::suites::run_suite(name)?;
                print!("{}", result.render());
                all_passed &= result.passed;
                results.push(result);
            }
            let json = serde_json::to_string_pretty(&results)
                .map_err(|e| Error::Io(e.to_string()))?;
            std::fs::write(out_dir.join("reproduce.json"), json)?;
            if all_passed {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(1))
            }
        }
    }
}
