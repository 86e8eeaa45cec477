use clap::Parser;

fn main() {
    let cli = wplab::cli::Cli::parse();
    std::process::exit(wplab::cli::run(&cli));
}
