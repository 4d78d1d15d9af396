use clap::Parser;
use icfinv_cli::{run, Cli, EXIT_USAGE};

fn main() {
    let cli = Cli::try_parse().unwrap_or_else(|e| e.exit());
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        let code = e.exit_code();
        if code == EXIT_USAGE {
            eprintln!("usage: icfinv <command> [options]; see `icfinv --help`");
        }
        std::process::exit(code);
    }
}
