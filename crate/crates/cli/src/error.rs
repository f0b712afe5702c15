//! Errors and the exit-code contract.

use carnot_core::blowup::BlowupError;
use carnot_core::factor::FactorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable, malformed or incomplete configuration, or unusable output path.
    #[error("configuration error: {0}")]
    Config(String),
    /// A checked invariant or a precondition of the computation failed.
    #[error("invariant failure: {0}")]
    Invariant(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 3,
            CliError::Invariant(_) => 2,
        }
    }
}

impl From<FactorError> for CliError {
    fn from(e: FactorError) -> Self {
        match e {
            FactorError::Resource { .. }
            | FactorError::Discontinuous(_)
            | FactorError::TooFewSamples { .. }
            | FactorError::Unsupported
            | FactorError::GroupMismatch
            | FactorError::Subgroup(_) => CliError::Config(e.to_string()),
            _ => CliError::Invariant(e.to_string()),
        }
    }
}

impl From<BlowupError> for CliError {
    fn from(e: BlowupError) -> Self {
        match e {
            BlowupError::Factor(f) => f.into(),
            BlowupError::Expr(_)
            | BlowupError::Subgroup(_)
            | BlowupError::WrongGroup
            | BlowupError::GroupMismatch
            | BlowupError::BadDomain(_)
            | BlowupError::BadRadii
            | BlowupError::TooFewRadii(_) => CliError::Config(e.to_string()),
            _ => CliError::Invariant(e.to_string()),
        }
    }
}
