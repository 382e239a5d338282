use clap::Parser;

fn main() {
    let cli = kbnn_cli::Cli::parse();
    if let Err(e) = kbnn_cli::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
