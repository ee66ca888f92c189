use clap::Parser;

fn main() {
    let cli = knockout_cli::args::Cli::parse();
    std::process::exit(knockout_cli::run(&cli));
}
