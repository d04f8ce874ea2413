use clap::Parser;
use mixlap_cli::{execute, Cli};

fn main() {
    std::process::exit(execute(Cli::parse()));
}
