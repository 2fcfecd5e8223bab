use clap::Parser;

fn main() {
    let cli = tdanet::cli::Cli::parse();
    if let Err(err) = tdanet::cli::run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
