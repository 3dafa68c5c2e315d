use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nplab::lab::{self, OBSERVABLES, OUTPUT_DIR_ENV};

/// Neumann-Poincare spectra on planar curves: scenario runner.
#[derive(Parser)]
#[command(name = "nplab", version, about, after_help = format!("Artifacts go to ${OUTPUT_DIR_ENV}/<scenario> when set."))]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario (bundled name or TOML path).
    Run { config: String },
    /// Run every bundled scenario.
    Suite,
    /// Tabulate an observable across a scenario's mesh ladder.
    Convergence {
        config: String,
        #[arg(help = format!("one of {}", OBSERVABLES.join(", ")))]
        observable: String,
    },
    /// List the bundled scenarios.
    ListScenarios,
}

fn run_one(config: &str) -> Result<bool, nplab::Error> {
    let sc = lab::load_scenario(config)?;
    let report = lab::run(&sc)?;
    print!("{}", report.summary());
    println!("  artifacts: {}", lab::output_dir(&sc).display());
    Ok(report.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config } => run_one(&config),
        Command::Suite => {
            let mut all = true;
            for name in lab::bundled_names() {
                match run_one(name) {
                    Ok(p) => all &= p,
                    Err(e) => {
                        eprintln!("{e}");
                        all = false;
                    }
                }
            }
            println!("suite {}", if all { "PASSED" } else { "FAILED" });
            Ok(all)
        }
        Command::Convergence { config, observable } => lab::load_scenario(&config).and_then(|sc| lab::convergence_study(&sc, &observable)).map(|t| {
            print!("{}", t.to_csv());
            true
        }),
        Command::ListScenarios => {
            for (name, src) in lab::BUNDLED {
                let desc = lab::Scenario::from_toml(src).map(|s| s.description).unwrap_or_else(|e| format!("<invalid: {e}>"));
                println!("{name:<24} {desc}");
            }
            Ok(true)
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
