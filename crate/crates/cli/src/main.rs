use std::process::ExitCode;

use aidchain_cli::commands::Context;
use aidchain_cli::profile::OutputFormat;
use aidchain_cli::{run, Cli, CliError};
use clap::Parser;
use serde_json::json;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let json_mode = cli.json || Context::resolve(&cli).is_ok_and(|c| c.format == OutputFormat::Json);
    match run(&cli) {
        Ok(out) => {
            if json_mode {
                println!("{}", serde_json::to_string_pretty(&out.json).expect("JSON serializes"));
            } else {
                println!("{}", out.text);
            }
            ExitCode::SUCCESS
        }
        Err(e) => report(&e, json_mode),
    }
}

fn report(e: &CliError, json_mode: bool) -> ExitCode {
    if json_mode {
        let doc = json!({ "error": e.code(), "message": e.to_string(), "exit_code": e.exit_code() });
        println!("{}", serde_json::to_string_pretty(&doc).expect("JSON serializes"));
    } else {
        eprintln!("error: {e}");
    }
    ExitCode::from(e.exit_code())
}
