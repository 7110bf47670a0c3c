use clap::Parser;

fn main() {
    let cli = pbb::cli::Cli::parse();
    std::process::exit(pbb::cli::run(cli));
}
