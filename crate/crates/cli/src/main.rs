use clap::Parser;

fn main() {
    let cli = twr::cli::Cli::parse();
    if let Err(e) = twr::cli::run(cli) {
        eprintln!("twr: {e}");
        std::process::exit(e.exit_code());
    }
}
