use clap::Parser;

fn main() {
    let cli = dbar_cli::Cli::parse();
    if let Err(e) = dbar_cli::run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
