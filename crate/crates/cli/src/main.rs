mod args;
mod output;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use serde_json::json;

use args::Cli;

/// Failure of a run, with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub kind: String,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            kind: "usage".into(),
            message: message.into(),
        }
    }

    pub fn numerical(kind: &str, message: impl Into<String>) -> Self {
        Self {
            code: 1,
            kind: kind.into(),
            message: message.into(),
        }
    }

    pub fn precondition(kind: &str, message: impl Into<String>) -> Self {
        Self {
            code: 3,
            kind: kind.into(),
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::precondition("io", format!("{}: {e}", path.display()))
    }

    pub fn internal(e: impl std::fmt::Display) -> Self {
        Self::numerical("internal", e.to_string())
    }

    fn to_json(&self) -> serde_json::Value {
        json!({ "error": { "kind": self.kind, "message": self.message, "exit_code": self.code } })
    }
}

impl From<thinfb::Error> for CliError {
    fn from(e: thinfb::Error) -> Self {
        use thinfb::Error as E;
        let kind = e.kind();
        match e {
            E::NonConvergence { .. } | E::Singular(_) | E::Degenerate(_) | E::Json(_) => {
                CliError::numerical(kind, e.to_string())
            }
            _ => CliError::precondition(kind, e.to_string()),
        }
    }
}

/// Size of the rayon pool, after `THINFB_THREADS`.
pub fn thread_count() -> usize {
    rayon::current_num_threads()
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("THINFB_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::usage(format!("THINFB_THREADS must be a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(CliError::internal)
}

fn fail(e: &CliError, out: Option<&PathBuf>) -> ExitCode {
    let body = e.to_json();
    eprintln!("{body}");
    if let Some(dir) = out {
        if dir.is_dir() {
            let _ = std::fs::write(dir.join("error.json"), format!("{body:#}\n"));
        }
    }
    ExitCode::from(e.code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            return fail(&CliError::usage(e.kind().to_string()), None);
        }
    };
    if let Err(e) = init_threads() {
        return fail(&e, None);
    }
    let mut out_dir = None;
    match run::dispatch(&cli, &mut out_dir) {
        Ok(code) => ExitCode::from(code),
        Err(e) => fail(&e, out_dir.as_ref()),
    }
}
