use std::process::ExitCode;

use clap::Parser;

mod args;
mod commands;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("AAPL_LOG", "warn"))
        .format_timestamp(None)
        .init();
    // Usage errors exit with status 2 inside parse.
    let cli = args::Cli::parse();
    match commands::run(cli.command).and_then(|outcome| outcome.report().map_err(|e| anyhow::anyhow!("writing stdout: {e}"))) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", error_chain(&e));
            ExitCode::FAILURE
        }
    }
}

/// Joins the cause chain, skipping causes the previous message already
/// spells out.
fn error_chain(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}
