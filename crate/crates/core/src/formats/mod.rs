//! Text formats: DIMACS CNF input and DRAT proof streams.

mod dimacs;
mod drat;

pub use dimacs::{parse_dimacs, write_dimacs, DimacsHeader, DimacsParse, DimacsWarning};
pub use drat::{parse_drat, write_drat_step, DratReader, ProofStep};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("malformed header on line {line}: {reason}")]
    MalformedHeader { line: usize, reason: String },
    #[error("line {line}: expected an integer, found {token:?}")]
    NonIntegerToken { line: usize, token: String },
    #[error("line {line}: literal {value} out of range")]
    LiteralOutOfRange { line: usize, value: i64 },
    #[error("input ended inside a clause starting on line {line}")]
    UnterminatedClause { line: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn parse_literal(token: &str, line: usize) -> Result<i32, FormatError> {
    let value: i64 = token.parse().map_err(|_| FormatError::NonIntegerToken {
        line,
        token: token.to_string(),
    })?;
    if value <= i32::MIN as i64 || value > i32::MAX as i64 {
        return Err(FormatError::LiteralOutOfRange { line, value });
    }
    Ok(value as i32)
}
