use std::process::ExitCode;

use clap::Parser;
use mcpd_cli::Cli;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MCPD_LOG", "info")).init();
    let cli = Cli::parse();
    match cli.command.run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mcpd: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
