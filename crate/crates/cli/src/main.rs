//! `conv`: detection, flow training, evaluation and the manifold lab from the command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or format error, 3 numeric failure.

mod args;
mod commands;
mod config;
mod inputs;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

use crate::args::Cli;
use crate::commands::UsageError;

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 1;
    }
    let numeric = err
        .chain()
        .any(|e| e.downcast_ref::<conv_core::ConvError>().is_some_and(|c| c.is_numeric()));
    if numeric {
        3
    } else {
        2
    }
}

/// The error chain joined by `: `, dropping causes already quoted by their parent.
fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if out.ends_with(&text) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&text);
    }
    out
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match (cli.global.quiet, cli.global.verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Warn,
        (false, 1) => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_env("CONV_LOG")
        .format_timestamp(None)
        .init();

    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", describe(&err));
            ExitCode::from(exit_code(&err))
        }
    }
}
