use clap::Parser;

use pulse_cli::{execute, Cli};

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = execute(cli) {
        eprintln!("pulse: {e}");
        std::process::exit(e.exit_code());
    }
}
