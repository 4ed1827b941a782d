mod args;
mod commands;
mod error;
mod settings;

use clap::Parser;

use args::{Cli, Command};
use error::{CliError, Result};
use settings::Settings;

fn run(cli: Cli) -> Result<()> {
    let settings = match &cli.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    if let Some(threads) = cli.threads.or(settings.threads) {
        if threads == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    match &cli.command {
        Command::Periodogram(a) => commands::periodogram_cmd(a, &settings),
        Command::Fit(a) => commands::fit_cmd(a, &settings),
        Command::Cluster(a) => commands::cluster_cmd(a, &settings),
        Command::Simulate(a) => commands::simulate_cmd(a, &settings),
        Command::Compare(a) => commands::compare_cmd(a, &settings),
        Command::Serve(a) => commands::serve_cmd(a, &settings),
    }
}

fn main() {
    // clap exits with 2 on usage errors and 0 for --help/--version.
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
