use std::process::ExitCode;

use clap::Parser;

use lecomh::cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli).map_err(anyhow::Error::from) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<lecomh::Error>().map_or(2, |e| e.exit_code());
            ExitCode::from(code as u8)
        }
    }
}
