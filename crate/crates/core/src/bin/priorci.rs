use std::process::ExitCode;

use clap::Parser;
use priorci::cli::{error_json, exit_code, run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("PRIORCI_WORKERS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // ignore failure: the pool may already exist
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let mut stdout = std::io::stdout().lock();
    match run(cli, &mut stdout) {
        Ok(outcome) => ExitCode::from(outcome.exit_code() as u8),
        Err(err) => {
            eprintln!("{}", error_json(&err));
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}
