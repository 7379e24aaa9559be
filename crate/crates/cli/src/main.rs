use clap::Parser;
use linhop_cli::{execute, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = execute(&cli) {
        eprintln!("linhop {}: {e}", cli.command.name());
        std::process::exit(e.exit_code());
    }
}
