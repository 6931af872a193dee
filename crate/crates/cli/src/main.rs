use std::io::{self, Write};
use std::process::ExitCode;

use aurelian_cli::{run, Cli};
use clap::Parser;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            let mut out = io::stdout().lock();
            let mut text = outcome.output.console;
            for path in &outcome.written {
                text.push_str(&format!("wrote {}\n", path.display()));
            }
            // a closed pipe (e.g. `| head`) is not an error once the files are written
            let _ = out.write_all(text.as_bytes()).and_then(|_| out.flush());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
