use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use docsynth_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            let mut stdout = std::io::stdout().lock();
            let text = match outcome.stdout {
                Some(records) => {
                    eprintln!("{}", outcome.summary["stats"]);
                    records
                }
                None => serde_json::to_string_pretty(&outcome.summary).unwrap_or_default() + "\n",
            };
            if stdout.write_all(text.as_bytes()).is_err() {
                return ExitCode::from(1);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(1)
        }
    }
}
