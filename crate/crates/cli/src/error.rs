use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}", spec_message(*.line, .message))]
    Spec { line: usize, message: String },

    #[error(transparent)]
    Core(#[from] matchmarket::Error),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{0}")]
    Usage(String),
}

fn spec_message(line: usize, message: &str) -> String {
    if line == 0 {
        format!("spec: {message}")
    } else {
        format!("spec line {line}: {message}")
    }
}

impl CliError {
    pub fn spec(line: usize, message: impl ToString) -> Self {
        CliError::Spec { line, message: message.to_string() }
    }

    /// 2 for bad input, 3 for numerical failures, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_convergence() => 3,
            CliError::Io { .. } => 1,
            _ => 2,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::spec(3, "x").exit_code(), 2);
        assert_eq!(CliError::Core(matchmarket::Error::Convergence("x".into())).exit_code(), 3);
        assert_eq!(CliError::Core(matchmarket::Error::Domain("x".into())).exit_code(), 2);
        let io = CliError::Io { path: "p".into(), source: std::io::Error::other("denied") };
        assert_eq!(io.exit_code(), 1);
    }

    #[test]
    fn spec_messages_carry_line_numbers() {
        assert_eq!(CliError::spec(7, "bad").to_string(), "spec line 7: bad");
        assert_eq!(CliError::spec(0, "missing").to_string(), "spec: missing");
    }
}
