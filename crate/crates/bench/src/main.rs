use clap::Parser;

fn main() {
    let cli = despot_bench::cli::Cli::parse();
    std::process::exit(despot_bench::cli::run(cli));
}
