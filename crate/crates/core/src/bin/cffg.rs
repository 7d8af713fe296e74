use clap::Parser;

fn main() {
    std::process::exit(cffg::cli::main_with(cffg::cli::Cli::parse()));
}
