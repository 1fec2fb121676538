use clap::Parser;

fn main() {
    let cli = satarq::cli::Cli::parse();
    std::process::exit(satarq::cli::run(cli));
}
