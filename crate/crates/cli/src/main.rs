use clap::Parser;
use explore_cli::{execute, exit_kind, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(err) = execute(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(exit_kind(&err).code());
    }
}
