use std::io::{BufRead, Write};

use super::{parse_literal, FormatError};
use crate::cnf::{canonicalize, Canonical, CnfFormula, Literal};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DimacsHeader {
    pub num_variables: u32,
    pub num_clauses: u64,
}

/// Non-fatal findings while parsing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DimacsWarning {
    ClauseCountMismatch { declared: u64, found: u64 },
    TautologyDropped { line: usize },
    EmptyClause { line: usize },
    VariableBeyondHeader { line: usize, variable: u32 },
}

#[derive(Debug, Clone)]
pub struct DimacsParse {
    pub header: DimacsHeader,
    pub formula: CnfFormula,
    pub warnings: Vec<DimacsWarning>,
}

/// Parses a DIMACS CNF stream line by line.
///
/// Duplicate literals are merged, tautologies are dropped with a warning and
/// variables above the declared count extend the formula. Empty clauses are
/// reported but not stored; they carry no interaction information.
pub fn parse_dimacs<R: BufRead>(mut input: R) -> Result<DimacsParse, FormatError> {
    let mut line = String::new();
    let mut line_no = 0usize;
    let mut header = None;
    let mut warnings = Vec::new();
    let mut clauses = Vec::new();
    let mut current: Vec<Literal> = Vec::new();
    let mut clause_line = 0usize;
    let mut found: u64 = 0;
    let mut num_variables = 0u32;

    loop {
        line.clear();
        if input.read_line(&mut line)? == 0 {
            break;
        }
        line_no += 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('c') {
            continue;
        }
        if header.is_none() {
            let h = parse_header(trimmed, line_no)?;
            num_variables = h.num_variables;
            header = Some(h);
            continue;
        }
        if trimmed.starts_with('p') {
            return Err(FormatError::MalformedHeader {
                line: line_no,
                reason: "duplicate problem line".into(),
            });
        }
        for token in trimmed.split_ascii_whitespace() {
            let value = parse_literal(token, line_no)?;
            if value == 0 {
                found += 1;
                match canonicalize(&current) {
                    Canonical::Clause(c) => {
                        let max = c.max_variable().index();
                        if max > num_variables {
                            log::warn!("line {clause_line}: variable {max} exceeds header count {num_variables}");
                            warnings.push(DimacsWarning::VariableBeyondHeader {
                                line: clause_line,
                                variable: max,
                            });
                            num_variables = max;
                        }
                        clauses.push(c);
                    }
                    Canonical::Tautology => {
                        log::warn!("line {clause_line}: dropping tautological clause");
                        warnings.push(DimacsWarning::TautologyDropped { line: clause_line });
                    }
                    Canonical::Empty => {
                        warnings.push(DimacsWarning::EmptyClause { line: line_no });
                    }
                }
                current.clear();
            } else {
                if current.is_empty() {
                    clause_line = line_no;
                }
                // parse_literal has excluded 0 and i32::MIN
                current.push(Literal::new(value).expect("valid literal"));
            }
        }
    }

    let header = header.ok_or_else(|| FormatError::MalformedHeader {
        line: line_no,
        reason: "missing \"p cnf\" line".into(),
    })?;
    if !current.is_empty() {
        return Err(FormatError::UnterminatedClause { line: clause_line });
    }
    if found != header.num_clauses {
        log::warn!(
            "header declares {} clauses, found {found}",
            header.num_clauses
        );
        warnings.push(DimacsWarning::ClauseCountMismatch {
            declared: header.num_clauses,
            found,
        });
    }
    Ok(DimacsParse {
        header,
        formula: CnfFormula {
            num_variables,
            clauses,
        },
        warnings,
    })
}

fn parse_header(line: &str, line_no: usize) -> Result<DimacsHeader, FormatError> {
    let malformed = |reason: &str| FormatError::MalformedHeader {
        line: line_no,
        reason: reason.to_string(),
    };
    let mut parts = line.split_ascii_whitespace();
    if parts.next() != Some("p") {
        return Err(malformed("expected \"p cnf <vars> <clauses>\""));
    }
    if parts.next() != Some("cnf") {
        return Err(malformed("format must be \"cnf\""));
    }
    let num_variables = parts
        .next()
        .and_then(|t| t.parse::<u32>().ok())
        .ok_or_else(|| malformed("bad variable count"))?;
    let num_clauses = parts
        .next()
        .and_then(|t| t.parse::<u64>().ok())
        .ok_or_else(|| malformed("bad clause count"))?;
    if parts.next().is_some() {
        return Err(malformed("trailing tokens"));
    }
    Ok(DimacsHeader {
        num_variables,
        num_clauses,
    })
}

pub fn write_dimacs<W: Write>(formula: &CnfFormula, mut out: W) -> std::io::Result<()> {
    writeln!(out, "p cnf {} {}", formula.num_variables, formula.clauses.len())?;
    for clause in &formula.clauses {
        for lit in clause.literals() {
            write!(out, "{lit} ")?;
        }
        writeln!(out, "0")?;
    }
    Ok(())
}
