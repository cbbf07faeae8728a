//! Batch front end for the reach-avoid certificate workbench.

use clap::Parser;

mod commands;

fn main() {
    let cli = commands::Cli::parse();
    let code = match commands::run(cli) {
        Ok(code) => code,
        Err(err @ reachcert::Error::ResourceLimit(_)) => {
            eprintln!("error: {err}");
            3
        }
        Err(err) => {
            eprintln!("error: {err}");
            64
        }
    };
    std::process::exit(code);
}
