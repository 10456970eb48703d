use clap::Parser;

fn main() {
    let cli = svdc_cli::Cli::parse();
    if let Err(err) = svdc_cli::run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
