mod cli;
mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;
use serde::Serialize;

use cli::Cli;

/// Failure reported as one JSON line on stderr.
#[derive(Debug, Serialize)]
pub struct CliError {
    pub kind: String,
    pub message: String,
}

impl CliError {
    pub fn new(kind: &str, message: impl Into<String>) -> Self {
        CliError {
            kind: kind.to_string(),
            message: message.into(),
        }
    }
}

impl From<vf_core::Error> for CliError {
    fn from(e: vf_core::Error) -> Self {
        CliError::new(e.kind(), e.to_string())
    }
}

macro_rules! via_core {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                vf_core::Error::from(e).into()
            }
        }
    )*};
}

via_core!(
    std::io::Error,
    serde_json::Error,
    vf_core::corpus::CorpusError,
    vf_core::index::IndexError,
    vf_core::dictionary::DictionaryError,
    vf_core::annotate::AnnotateError,
    vf_core::dataset::DatasetError,
    vf_core::model::ModelError,
    vf_core::metrics::MetricsError,
    vf_core::synth::SynthError,
    vf_core::vectorize::VectorizeError
);

fn fail(e: &CliError, code: u8) -> ExitCode {
    let line = serde_json::json!({ "error": e.message.replace('\n', " "), "kind": e.kind });
    eprintln!("{line}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let argv = match config::merge(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => return fail(&e, 2),
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // help and version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            let first = first.strip_prefix("error: ").unwrap_or(first);
            return fail(&CliError::new("usage", first), 2);
        }
    };
    let level = if cli.verbose { "info" } else { "off" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e, 1),
    }
}
