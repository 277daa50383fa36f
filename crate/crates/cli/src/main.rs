use clap::Parser;
use mcal_cli::cli::Cli;

fn main() {
    let cli = Cli::parse();
    if let Err(e) = mcal_cli::execute(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
