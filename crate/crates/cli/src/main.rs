//! `ladderlab`: build, verify and search for shift operators of 1-D
//! Hamiltonians `X(x) D² + V(x)`.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 verification failure,
//! 3 search non-convergence.

mod commands;
mod config;

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;

use config::{Cli, RunConfig};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let cfg = match RunConfig::from_cli(cli, std::env::var("LADDERLAB_SEED").ok()) {
        Ok(cfg) => cfg,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    };
    let outcome = commands::run(&cfg);
    if let Some(msg) = &outcome.message {
        eprintln!("{msg}");
    }
    if let Some(text) = &outcome.output {
        let written = match &cfg.out {
            Some(path) => std::fs::write(path, text)
                .map_err(|e| format!("cannot write {}: {e}", path.display())),
            None => {
                let mut out = std::io::stdout().lock();
                match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
                    // a closed pipe (`| head`) is the reader's choice, not an error
                    Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                        Err(format!("cannot write to stdout: {e}"))
                    }
                    _ => Ok(()),
                }
            }
        };
        if let Err(msg) = written {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    }
    ExitCode::from(outcome.code)
}
