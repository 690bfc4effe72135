use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{}", Invalid(.line, .message))]
    Invalid {
        line: Option<usize>,
        message: String,
        /// Text to look for when anchoring the message to a line.
        needle: String,
    },
}

struct Invalid<'a>(&'a Option<usize>, &'a String);

impl fmt::Display for Invalid<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(line) => write!(f, "line {line}: {}", self.1),
            None => f.write_str(self.1),
        }
    }
}

impl ConfigError {
    pub fn invalid(message: impl Into<String>, needle: impl Into<String>) -> Self {
        ConfigError::Invalid {
            line: None,
            message: message.into(),
            needle: needle.into(),
        }
    }

    /// Fills in the first line of `text` mentioning the error's subject.
    pub fn anchor(self, text: &str) -> Self {
        match self {
            ConfigError::Invalid {
                line: None,
                message,
                needle,
            } => {
                let line = text
                    .lines()
                    .position(|l| l.contains(needle.as_str()))
                    .map(|i| i + 1);
                ConfigError::Invalid {
                    line,
                    message,
                    needle,
                }
            }
            other => other,
        }
    }

    pub fn line(&self) -> Option<usize> {
        match self {
            ConfigError::Parse { line, .. } => Some(*line),
            ConfigError::Invalid { line, .. } => *line,
            ConfigError::Io { .. } => None,
        }
    }
}
