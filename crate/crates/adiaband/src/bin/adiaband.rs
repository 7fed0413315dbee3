use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use adiaband::config::RunConfig;
use adiaband::report::{read_run, summarize};
use adiaband::runner::run_to_dir;

/// Band-structure symbol calculus experiments: configured runs and report
/// summaries.
#[derive(Parser)]
#[command(name = "adiaband", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the experiment described by a JSON config and write artifacts.
    Run {
        /// Path to the run configuration (JSON, schema v1).
        config: PathBuf,
        /// Output directory for report.json and CSV tables.
        #[arg(long, default_value = "runs/latest")]
        out: PathBuf,
        /// Worker threads (defaults to the number of cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Print the summary after the run.
        #[arg(long, short)]
        verbose: bool,
    },
    /// Summarize a completed run directory.
    Report {
        /// Directory containing report.json.
        dir: PathBuf,
    },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config, out, threads, verbose } => {
            if let Some(n) = threads {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("error: could not configure {n} threads: {e}");
                    return ExitCode::from(1);
                }
            }
            let text = match std::fs::read_to_string(&config) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: cannot read {}: {e}", config.display());
                    return ExitCode::from(1);
                }
            };
            let cfg = match RunConfig::from_json(&text) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: invalid config: {e}");
                    return ExitCode::from(1);
                }
            };
            match run_to_dir(&cfg, &out) {
                Ok(report) => {
                    if verbose {
                        print!("{}", summarize(&report, &out));
                    }
                    if report.passed() {
                        println!("PASS {} ({})", report.experiment, out.display());
                        ExitCode::from(0)
                    } else {
                        let (a, s) = report.failures();
                        println!(
                            "FAIL {}: {} failed checks (see {})",
                            report.experiment,
                            a.len() + s.len(),
                            out.join("failures.json").display()
                        );
                        ExitCode::from(2)
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            }
        }
        Command::Report { dir } => match read_run(&dir) {
            Ok(report) => {
                print!("{}", summarize(&report, &dir));
                ExitCode::from(if report.passed() { 0 } else { 2 })
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
    }
}
