use std::process::ExitCode;

use clap::Parser;
use otod_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run(cli)),
            Err(e) => {
                eprintln!("error: cannot start {n} worker threads: {e}");
                ExitCode::from(1)
            }
        },
        None => run(cli),
    }
}
