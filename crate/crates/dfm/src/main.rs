use clap::Parser;

fn main() {
    let cli = dfm::cli::Cli::parse();
    if let Err(e) = dfm::cli::run(cli) {
        eprintln!("dfm: {e}");
        std::process::exit(e.exit_code());
    }
}
