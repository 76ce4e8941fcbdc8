//! Error classification into process exit codes.

use std::fmt;

use noisy_shadows::ShadowError;

pub const EXIT_OTHER: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NOT_INVERTIBLE: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;

/// Malformed or inconsistent user input.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

/// A computation finished but its result failed a numerical check.
#[derive(Debug)]
pub struct NumericalFailure(pub String);

impl fmt::Display for NumericalFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "numerical failure: {}", self.0)
    }
}

impl std::error::Error for NumericalFailure {}

fn library_code(e: &ShadowError) -> u8 {
    match e {
        ShadowError::NotInvertible { .. } | ShadowError::Singular(_) => EXIT_NOT_INVERTIBLE,
        ShadowError::Numerical(_) => EXIT_NUMERICAL,
        _ => EXIT_CONFIG,
    }
}

/// Exit code for the innermost recognized cause of `err`.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<ShadowError>() {
            return library_code(e);
        }
        if cause.is::<ConfigError>() {
            return EXIT_CONFIG;
        }
        if cause.is::<NumericalFailure>() {
            return EXIT_NUMERICAL;
        }
    }
    EXIT_OTHER
}

#[cfg(test)]
mod tests {
    use super::*;
    use anyhow::Context;

    #[test]
    fn codes() {
        let e: anyhow::Error = ShadowError::NotInvertible { beta: 1.0 }.into();
        assert_eq!(exit_code(&e), EXIT_NOT_INVERTIBLE);
        let e = Err::<(), _>(ShadowError::Numerical("x".into()))
            .context("outer")
            .unwrap_err();
        assert_eq!(exit_code(&e), EXIT_NUMERICAL);
        assert_eq!(exit_code(&ConfigError("bad".into()).into()), EXIT_CONFIG);
        assert_eq!(exit_code(&anyhow::anyhow!("io")), EXIT_OTHER);
    }
}
