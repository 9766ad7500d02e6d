use clap::Parser;

fn main() {
    let cli = esh_cli::Cli::parse();
    if let Err(e) = esh_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
