//! `hypersearch`: run and inspect hyperparameter optimization experiments.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data or store errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use hypersearch::run::{
    self, builtin_losses, find_loss, report, run_experiment, trial_seed, Algorithm,
    ExperimentConfig, RunError,
};
use hypersearch::space::parse_space;
use hypersearch::tpe::suggest_random;
use hypersearch::TrialStore;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;

#[derive(Parser)]
#[command(name = "hypersearch", version, about = "Hyperparameter optimization toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Random,
    Tpe,
}

impl From<AlgoArg> for Algorithm {
    fn from(a: AlgoArg) -> Algorithm {
        match a {
            AlgoArg::Random => Algorithm::Random,
            AlgoArg::Tpe => Algorithm::Tpe,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run an optimization experiment against a trial database.
    Optimize {
        /// Search-space file; defaults to the loss's paired space.
        #[arg(long)]
        space: Option<PathBuf>,
        /// Loss name from the builtin registry.
        #[arg(long)]
        loss: String,
        #[arg(long, value_enum, default_value = "tpe")]
        algo: AlgoArg,
        #[arg(long, default_value_t = 100)]
        max_trials: u64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Trial database file (JSON lines, append-only).
        #[arg(long)]
        db: PathBuf,
    },
    /// Print the convergence table for a trial database.
    Report {
        #[arg(long)]
        db: PathBuf,
        /// Also write the table to this file.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Draw configurations from a space's prior and print them.
    Sample {
        #[arg(long)]
        space: PathBuf,
        #[arg(long, default_value_t = 5)]
        n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Parse a space file and report diagnostics.
    Validate {
        #[arg(long)]
        space: PathBuf,
    },
    /// List the builtin losses.
    Losses,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(CliError::Data(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(EXIT_DATA)
        }
    }
}

enum CliError {
    Usage(String),
    Data(String),
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> CliError {
        match e {
            RunError::UnknownLoss(_) | RunError::Config(_) => CliError::Usage(e.to_string()),
            RunError::Space(_) | RunError::Store(_) => CliError::Data(e.to_string()),
        }
    }
}

fn read_space(path: &PathBuf) -> Result<hypersearch::ExprGraph, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let graph = parse_space(&text)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let diagnostics = graph.validate();
    if !diagnostics.is_empty() {
        let mut message = format!("{} failed validation:", path.display());
        for d in &diagnostics {
            message.push_str(&format!("\n  {d}"));
        }
        return Err(CliError::Data(message));
    }
    Ok(graph)
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Optimize { space, loss, algo, max_trials, workers, seed, db } => {
            let loss = find_loss(&loss)?;
            let graph = match &space {
                Some(path) => read_space(path)?,
                None => loss
                    .space()
                    .map_err(|e| CliError::Data(format!("loss space: {e}")))?,
            };
            let config = ExperimentConfig {
                space: graph,
                loss,
                algorithm: algo.into(),
                max_trials,
                workers,
                seed,
                store_path: Some(db),
            };
            let store = run_experiment(&config)?;
            let trials = store.snapshot();
            let ok = trials.iter().filter(|t| t.loss.is_some()).count();
            println!("{} trials in store ({ok} ok)", trials.len());
            if let Some(best) = store.best_trial() {
                println!("best: trial {} loss {}", best.trial_id, best.loss.expect("ok trial"));
            }
            Ok(())
        }
        Command::Report { db, csv } => {
            if !db.exists() {
                return Err(CliError::Data(format!("no trial database at {}", db.display())));
            }
            let store = TrialStore::open(&db).map_err(RunError::from)?;
            let text = report(&store.snapshot());
            if let Some(path) = csv {
                std::fs::write(&path, &text)
                    .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
            }
            print!("{text}");
            Ok(())
        }
        Command::Sample { space, n, seed } => {
            let graph = read_space(&space)?;
            for i in 0..n {
                let assignment = suggest_random(&graph, &[], trial_seed(seed, i))
                    .map_err(|e| CliError::Data(e.to_string()))?;
                let line = serde_json::to_string(&assignment.values)
                    .map_err(|e| CliError::Data(e.to_string()))?;
                println!("{line}");
            }
            Ok(())
        }
        Command::Validate { space } => {
            let graph = read_space(&space)?;
            println!("ok: {} labels", graph.all_labels().len());
            for label in graph.all_labels() {
                println!("  {label}");
            }
            Ok(())
        }
        Command::Losses => {
            for loss in builtin_losses() {
                println!("{}", loss.name);
            }
            println!("dataset root: set via {}", run::DATA_ENV);
            Ok(())
        }
    }
}
