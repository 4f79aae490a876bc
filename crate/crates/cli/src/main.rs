mod args;
mod commands;
mod error;
mod inputs;
mod report;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use error::CliError;

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Encode {
            input,
            output,
            checkpoint,
            depth,
            csv,
            model,
        } => commands::encode(&input, &output, &checkpoint, depth, csv.as_deref(), &model),
        Command::Decode {
            input,
            output,
            checkpoint,
            model,
        } => commands::decode(&input, &output, &checkpoint, &model),
        Command::Train {
            dataset,
            out,
            epochs,
            steps,
            lr,
            depth,
            frames,
            sequences,
            width,
            seed,
            checkpoint_dir,
            model,
        } => commands::train_cmd(
            &dataset,
            &out,
            epochs,
            steps,
            lr,
            depth,
            frames,
            sequences,
            width,
            seed,
            checkpoint_dir.as_deref(),
            &model,
        ),
        Command::Bench {
            dataset,
            checkpoint,
            csv,
            depth,
            frames,
            sequences,
            seed,
            jobs,
            model,
        } => commands::bench(
            &dataset,
            &checkpoint,
            csv.as_deref(),
            depth,
            frames,
            sequences,
            seed,
            jobs,
            &model,
        ),
        Command::Verify {
            original,
            decoded,
            depth,
        } => commands::verify(&original, &decoded, depth),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HINTPC_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::from(error::exit::OK as u8),
        Err(e) => {
            eprintln!("hintpc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
