//! `expertloop-sim`: run scenario scripts against the service on a virtual
//! clock. Exit code 0 iff every expectation passes.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use expertloop_sim::random::random_script;
use expertloop_sim::{EdgeCoverage, RunReport, ScenarioScript, SimError, Simulation};

#[derive(Parser)]
#[command(name = "expertloop-sim", about = "Scenario simulator for the expert-in-the-loop chatbot")]
struct Cli {
    /// Seed for randomized scenarios.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Write the transcript (JSON Lines) here.
    #[arg(long, global = true)]
    transcript_out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one script.
    Run { script: PathBuf },
    /// Run every `*.yaml` script in a directory and report edge coverage.
    Suite { dir: PathBuf },
    /// Run a randomized script built from `--seed`.
    Random {
        #[arg(long, default_value_t = 40)]
        steps: usize,
    },
}

fn print_report(r: &RunReport) {
    for e in &r.results {
        let mark = if e.passed { "PASS" } else { "FAIL" };
        if e.detail.is_empty() {
            println!("  {mark} {}. {}", e.index, e.description);
        } else {
            println!("  {mark} {}. {} ({})", e.index, e.description, e.detail);
        }
    }
    println!("{}: {} transcript lines, {}", r.name, r.transcript.len(), if r.passed() { "ok" } else { "FAILED" });
}

fn write_transcript(path: &Path, text: &str) -> Result<(), SimError> {
    std::fs::write(path, text).map_err(|e| SimError::Script(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<bool, SimError> {
    match cli.command {
        Command::Run { script } => {
            let report = Simulation::new(ScenarioScript::load(&script)?)?.run()?;
            print_report(&report);
            if let Some(p) = &cli.transcript_out {
                write_transcript(p, &report.transcript_jsonl())?;
            }
            Ok(report.passed())
        }
        Command::Suite { dir } => {
            let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
                .map_err(|e| SimError::Script(format!("{}: {e}", dir.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "yaml") && !p.ends_with("schema.yaml"))
                .collect();
            paths.sort();
            let mut coverage = EdgeCoverage::default();
            let mut all = true;
            let mut transcripts = String::new();
            for p in paths {
                let report = Simulation::new(ScenarioScript::load(&p)?)?.run()?;
                print_report(&report);
                coverage.merge(&report.coverage);
                transcripts.push_str(&report.transcript_jsonl());
                all &= report.passed();
            }
            print!("{coverage}");
            if let Some(p) = &cli.transcript_out {
                write_transcript(p, &transcripts)?;
            }
            Ok(all)
        }
        Command::Random { steps } => {
            let report = Simulation::new(random_script(cli.seed, steps))?.run()?;
            print_report(&report);
            print!("{}", report.coverage);
            if let Some(p) = &cli.transcript_out {
                write_transcript(p, &report.transcript_jsonl())?;
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
