use std::process::ExitCode;

use clap::Parser;

use mmot_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(value) = std::env::var("MK_THREADS") {
        match value.parse::<usize>() {
            Ok(threads) if threads > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
                    eprintln!("warning: could not size the thread pool: {e}");
                }
            }
            _ => {
                eprintln!("error: MK_THREADS must be a positive integer, got {value:?}");
                return ExitCode::from(1);
            }
        }
    }
    ExitCode::from(run(&cli) as u8)
}
