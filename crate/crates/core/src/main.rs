use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use audit_kernel::orchestrator::{self, OutcomeStatus, RunOptions};

const EXIT_USAGE: u8 = 1;
const EXIT_VERIFY: u8 = 2;
const EXIT_ABORTED: u8 = 3;

#[derive(Parser)]
#[command(
    name = "auditk",
    version,
    about = "Governed, replay-verifiable repository security audits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create a run directory and record the configuration.
    Init {
        #[arg(long)]
        config: PathBuf,
        run_dir: PathBuf,
    },
    /// Drive the run until every task is done or blocked.
    Run {
        run_dir: PathBuf,
        /// Feed agents the outputs recorded by an earlier run instead of their bindings.
        #[arg(long)]
        replay_from: Option<PathBuf>,
    },
    /// Replay the log and check the recorded state hash.
    Verify { run_dir: PathBuf },
    /// Summarize the projected state.
    Status {
        #[arg(long)]
        json: bool,
        run_dir: PathBuf,
    },
    /// Re-render the final reports from the log.
    Report { run_dir: PathBuf },
    /// Return a blocked task to todo (operator only).
    Unblock {
        run_dir: PathBuf,
        task_id: String,
        #[arg(long)]
        reason: String,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    let failure_code = match cli.command {
        Command::Run { .. } => EXIT_ABORTED,
        Command::Verify { .. } => EXIT_VERIFY,
        _ => EXIT_USAGE,
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(failure_code)
        }
    }
}

fn execute(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::Init { config, run_dir } => {
            let event = orchestrator::cmd_init(&config, &run_dir)
                .with_context(|| format!("initializing {}", run_dir.display()))?;
            println!(
                "initialized {} (event {} {})",
                run_dir.display(),
                event.sequence,
                event.hash
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Run { run_dir, replay_from } => run(&run_dir, replay_from.as_deref()),
        Command::Verify { run_dir } => {
            let result = orchestrator::cmd_verify(&run_dir)?;
            println!("chain valid: {}", result.chain.valid);
            println!("events checked: {}", result.chain.events_checked);
            if let Some(seq) = result.chain.first_bad_sequence {
                println!("first bad sequence: {seq}");
            }
            if let Some(h) = &result.state_hash {
                println!("state hash: {h}");
            }
            println!("matches recorded: {}", result.matches_recorded.as_str());
            if let Some(e) = &result.projection_error {
                println!("projection error: {e}");
            }
            Ok(if result.ok() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_VERIFY)
            })
        }
        Command::Status { json, run_dir } => {
            let summary = orchestrator::cmd_status(&run_dir)?;
            if json {
                println!("{}", summary.to_canonical_json());
            } else {
                print!("{}", summary.to_text());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { run_dir } => {
            let bundle = orchestrator::cmd_report(&run_dir)?;
            println!("reports rendered from state {}", bundle.generated_from_state_hash);
            Ok(ExitCode::SUCCESS)
        }
        Command::Unblock {
            run_dir,
            task_id,
            reason,
        } => {
            let event = orchestrator::cmd_unblock(&run_dir, &task_id, &reason)?;
            println!("{task_id} unblocked at sequence {}", event.sequence);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn run(run_dir: &Path, replay_from: Option<&Path>) -> anyhow::Result<ExitCode> {
    let options = match replay_from {
        Some(source) => {
            let events = audit_kernel::event_store::read_all(&run_dir.join(orchestrator::EVENTS_FILE))?;
            let ctx = orchestrator::load_context(run_dir, &events)?;
            RunOptions::replay_from(source, &ctx.config)?
        }
        None => RunOptions::default(),
    };
    let outcome = orchestrator::run_with(run_dir, options)?;
    println!("outcome: {}", outcome.status);
    if let Some(h) = &outcome.state_hash {
        println!("state hash: {h}");
    }
    println!("events: {}", outcome.events);
    println!("rejections: {}", outcome.rejections);
    println!("dispatch failures: {}", outcome.dispatch_failures);
    if !outcome.blocked_tasks.is_empty() {
        println!("blocked: {}", outcome.blocked_tasks.join(", "));
    }
    if let Some(r) = &outcome.reason {
        println!("reason: {r}");
    }
    Ok(match outcome.status {
        OutcomeStatus::Aborted => ExitCode::from(EXIT_ABORTED),
        _ => ExitCode::SUCCESS,
    })
}
