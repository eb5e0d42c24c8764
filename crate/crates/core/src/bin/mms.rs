use clap::Parser;
use mms_core::cli::{run, Cli};

fn main() {
    std::process::exit(run(&Cli::parse()));
}
