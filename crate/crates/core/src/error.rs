use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the toolkit.
///
/// The CLI maps [`Error::Config`] and [`Error::Input`] to exit code 2 and
/// [`Error::Numerical`] to exit code 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("numerical failure{}: {message} (last residual {residual:.3e})", step_label(*.step))]
    Numerical {
        message: String,
        step: Option<usize>,
        residual: f64,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn step_label(step: Option<usize>) -> String {
    match step {
        Some(s) => format!(" at step {s}"),
        None => String::new(),
    }
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn numerical(msg: impl Into<String>, residual: f64) -> Self {
        Error::Numerical {
            message: msg.into(),
            step: None,
            residual,
        }
    }

    /// Attaches a time-step index to a numerical error; other variants pass through.
    pub fn at_step(self, step: usize) -> Self {
        match self {
            Error::Numerical {
                message, residual, ..
            } => Error::Numerical {
                message,
                step: Some(step),
                residual,
            },
            other => other,
        }
    }

    /// Prefixes the message with context (e.g. the Monte-Carlo sample seed).
    pub fn context(self, ctx: &str) -> Self {
        match self {
            Error::Config(m) => Error::Config(format!("{ctx}: {m}")),
            Error::Input(m) => Error::Input(format!("{ctx}: {m}")),
            Error::Numerical {
                message,
                step,
                residual,
            } => Error::Numerical {
                message: format!("{ctx}: {message}"),
                step,
                residual,
            },
            io => io,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
