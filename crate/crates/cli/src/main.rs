mod args;
mod commands;
mod merge;

use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches};

use args::{Cli, Command};

/// How a command failed: bad invocation (exit 1) or bad data (exit 2).
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
}

impl From<reverbnet::Error> for Failure {
    fn from(e: reverbnet::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

fn run() -> Result<(), Failure> {
    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => Ok(()),
                _ => Err(Failure::Usage(String::new())),
            };
        }
    };
    let cli = Cli::from_arg_matches(&matches).map_err(|e| Failure::Usage(e.to_string()))?;
    let (_, sub) = matches.subcommand().expect("subcommand required");
    match cli.command {
        Command::SimulateRir(a) => commands::simulate_rir(commands::merged(a, sub, |a| &a.config)?),
        Command::SynthDataset(a) => commands::synth_dataset(commands::merged(a, sub, |a| &a.config)?),
        Command::Featurize(a) => commands::featurize(commands::merged(a, sub, |a| &a.config)?),
        Command::Train(a) => commands::train(commands::merged(a, sub, |a| &a.config)?),
        Command::Eval(a) => commands::eval(commands::merged(a, sub, |a| &a.config)?),
        Command::Doa(a) => commands::doa(commands::merged(a, sub, |a| &a.config)?),
        Command::Wpe(a) => commands::wpe(commands::merged(a, sub, |a| &a.config)?),
        Command::Reconstruct(a) => commands::reconstruct(commands::merged(a, sub, |a| &a.config)?),
        Command::PlotData(a) => commands::plot_data(commands::merged(a, sub, |a| &a.config)?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            if !msg.is_empty() {
                eprintln!("error: {msg}");
            }
            ExitCode::from(1)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
