//! Simulation harness: experiment configs, replication runner, result tables
//! and one-shot inference.

pub mod config;
pub mod oneshot;
pub mod runner;
pub mod table;

use selectcond::Error;

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;
pub const EXIT_CHECK: i32 = 3;

/// A run completed but a check on its results failed.
#[derive(Debug)]
pub struct CheckFailed(pub String);

impl std::fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "check failed: {}", self.0)
    }
}

impl std::error::Error for CheckFailed {}

/// Exit status for an error: numeric failures of the core library give 2,
/// failed checks 3, everything else (bad input, bad config, I/O) 1.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<CheckFailed>() {
            return EXIT_CHECK;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::EmptyTruncation
                | Error::DivergentMle { .. }
                | Error::UnboundedEndpoint { .. }
                | Error::EmptyAlongTarget
                | Error::Numerical(_) => EXIT_NUMERIC,
                _ => EXIT_USAGE,
            };
        }
    }
    EXIT_USAGE
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_cause() {
        assert_eq!(
            exit_code(&anyhow::Error::new(Error::Numerical("x".into())).context("outer")),
            2
        );
        assert_eq!(exit_code(&anyhow::Error::new(Error::NoSelection)), 1);
        assert_eq!(exit_code(&anyhow::Error::new(CheckFailed("audit".into()))), 3);
        assert_eq!(exit_code(&anyhow::anyhow!("bad key")), 1);
    }
}
