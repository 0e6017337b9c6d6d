use clap::Parser;

use avh_cli::Cli;

fn main() {
    let cli = Cli::parse();
    if let Err(e) = avh_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
