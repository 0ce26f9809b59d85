use clap::Parser;

use canard_lab::cli::{configure_threads, exit_code_for, run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("canard-lab: {e}");
        std::process::exit(exit_code_for(&e));
    }
    std::process::exit(run(&cli));
}
