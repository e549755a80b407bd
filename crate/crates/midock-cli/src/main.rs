use clap::Parser;

fn main() {
    let cli = midock_cli::Cli::parse();
    std::process::exit(midock_cli::run(cli));
}
