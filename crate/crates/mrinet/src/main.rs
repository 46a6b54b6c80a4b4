use clap::Parser;

fn main() {
    let cli = mrinet::cli::Cli::parse();
    std::process::exit(mrinet::cli::run(cli));
}
