//! Command-line harness around `otod-core`.

pub mod args;
pub mod artifacts;
pub mod commands;

use std::process::ExitCode;

use otod_core::Error;

pub use args::Cli;

/// 0 success, 1 validation or domain error, 2 I/O error.
pub fn exit_code_for(err: &Error) -> u8 {
    if err.is_io() {
        2
    } else {
        1
    }
}

fn report<T>(result: otod_core::Result<T>, on_ok: impl FnOnce(T)) -> ExitCode {
    match result {
        Ok(v) => {
            on_ok(v);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

pub fn run(cli: Cli) -> ExitCode {
    use args::Command;
    match cli.command {
        Command::Validate(a) => {
            let outcome = commands::cmd_validate(&a.manifest);
            println!(
                "{}",
                serde_json::to_string_pretty(&outcome.report).expect("report serializes")
            );
            ExitCode::from(outcome.exit_code)
        }
        Command::Eval(a) => report(commands::cmd_eval(&a), |r| {
            print!("{}", otod_core::metrics::markdown_table(&[r]));
        }),
        Command::Ablate(a) => report(commands::cmd_ablate(&a), |rows| {
            for r in rows {
                println!(
                    "({}) alpha={:?} FPR@95={:.2} AUROC={:.2}",
                    r.setting,
                    r.alpha,
                    100.0 * r.mean_fpr_at_95,
                    100.0 * r.mean_auroc
                );
            }
        }),
        Command::SweepTemp(a) => report(commands::cmd_sweep_temp(&a), |points| {
            for p in points {
                println!(
                    "T={} FPR@95={:.2} AUROC={:.2}",
                    p.temperature,
                    100.0 * p.mean_fpr_at_95,
                    100.0 * p.mean_auroc
                );
            }
        }),
        Command::Simulate(a) => report(commands::cmd_simulate(&a), |points| {
            for p in points {
                println!(
                    "shift={} md={:.5} stderr={:.5} auroc={:.4}",
                    p.shift, p.md_estimate, p.md_stderr, p.auroc
                );
            }
        }),
        Command::Synth(a) => report(commands::cmd_synth(&a), |path| {
            println!("{}", path.display());
        }),
    }
}
