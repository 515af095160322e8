//! Command-line front end. Errors print one JSON line on stderr,
//! `{"error": kind, "message": ...}`, and exit with status 2.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde::Serialize;

pub use config::{BackendKind, ConfigFile, Flags, Settings};

#[derive(Debug, Parser)]
#[command(name = "neuroadapt", version, about = "EEG and eye-tracking attention pipeline")]
pub struct Cli {
    #[command(flatten)]
    pub flags: Flags,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a scenario; writes raw.ndjson, features.csv and labels.csv
    Generate {
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the classifier on a feature CSV (default: the built-in synthetic set)
    Train {
        /// Feature CSV with a `label` column
        data: Option<PathBuf>,
        /// Model output path
        #[arg(long)]
        out: PathBuf,
        /// Also run k-fold cross-validation
        #[arg(long)]
        cv: Option<usize>,
    },
    /// Score a model on a feature CSV, or cross-validate with --cv
    Evaluate {
        data: Option<PathBuf>,
        #[arg(long)]
        cv: Option<usize>,
    },
    /// Time the window-to-classification path per stage
    Bench {
        #[arg(long, default_value_t = 10_000)]
        windows: usize,
    },
    /// Run the HTTP and websocket service
    Serve,
    /// Re-run an archive and compare derived events
    Replay { archive: PathBuf },
    /// Write the EEG low-pass taps, one per line
    Taps {
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a scripted session headless and write its archive
    Session {
        /// Archive output path
        #[arg(long)]
        out: PathBuf,
        /// User message sent to the chat backend (repeatable)
        #[arg(long)]
        say: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliError {
    #[serde(rename = "error")]
    pub kind: &'static str,
    pub message: String,
    #[serde(skip)]
    pub status: i32,
}

impl CliError {
    pub fn new(kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
            status: 2,
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new("usage", message)
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self::new("io", message)
    }

    pub fn line(&self) -> String {
        serde_json::to_string(self).expect("error serializes")
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

/// Parses `args` and runs the command. Returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                use std::io::Write;
                let _ = write!(std::io::stdout(), "{e}");
                return 0;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("{}", CliError::usage(first).line());
            return 2;
        }
    };
    let result = Settings::resolve(&cli.flags, |k| std::env::var(k).ok())
        .and_then(|s| commands::dispatch(&cli.command, &s));
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.line());
            e.status
        }
    }
}
