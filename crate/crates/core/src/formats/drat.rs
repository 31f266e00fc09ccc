use std::io::{BufRead, Write};

use super::{parse_literal, FormatError};
use crate::cnf::{ClauseEvent, EventBody, EventKind, Literal};

/// One addition or deletion line of a textual proof, literals as written.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProofStep {
    pub kind: EventKind,
    pub literals: Vec<Literal>,
}

impl ProofStep {
    pub fn into_event(self, sequence: u64) -> ClauseEvent {
        ClauseEvent::new(sequence, self.kind, EventBody::from_literals(&self.literals))
    }
}

/// Streaming reader over textual DRAT. Only the clause being read is buffered.
///
/// In lenient mode, lines that do not start like a proof line (solver chatter
/// such as `s UNSATISFIABLE` or `v ...`) are skipped instead of failing.
pub struct DratReader<R> {
    input: R,
    line: String,
    line_no: usize,
    tokens: Vec<String>,
    next_token: usize,
    lenient: bool,
    done: bool,
}

pub fn parse_drat<R: BufRead>(input: R) -> DratReader<R> {
    DratReader::new(input)
}

impl<R: BufRead> DratReader<R> {
    pub fn new(input: R) -> Self {
        DratReader {
            input,
            line: String::new(),
            line_no: 0,
            tokens: Vec::new(),
            next_token: 0,
            lenient: false,
            done: false,
        }
    }

    pub fn lenient(mut self) -> Self {
        self.lenient = true;
        self
    }

    fn fill(&mut self) -> Result<bool, FormatError> {
        loop {
            self.line.clear();
            if self.input.read_line(&mut self.line)? == 0 {
                return Ok(false);
            }
            self.line_no += 1;
            let trimmed = self.line.trim();
            if trimmed.is_empty() || trimmed.starts_with('c') {
                continue;
            }
            if self.lenient {
                let first = trimmed.as_bytes()[0];
                if !(first.is_ascii_digit() || first == b'-' || first == b'd') {
                    continue;
                }
            }
            self.tokens.clear();
            self.tokens
                .extend(trimmed.split_ascii_whitespace().map(str::to_string));
            self.next_token = 0;
            return Ok(true);
        }
    }

    fn read_step(&mut self) -> Result<Option<ProofStep>, FormatError> {
        let mut kind = None;
        let mut literals = Vec::new();
        let mut start_line = 0;
        loop {
            if self.next_token >= self.tokens.len() {
                if !self.fill()? {
                    return if kind.is_none() {
                        Ok(None)
                    } else {
                        Err(FormatError::UnterminatedClause { line: start_line })
                    };
                }
                continue;
            }
            let token = &self.tokens[self.next_token];
            self.next_token += 1;
            if kind.is_none() {
                start_line = self.line_no;
                if token == "d" {
                    kind = Some(EventKind::Delete);
                    continue;
                }
                kind = Some(EventKind::Add);
            }
            let value = parse_literal(token, self.line_no)?;
            if value == 0 {
                return Ok(Some(ProofStep {
                    kind: kind.unwrap_or(EventKind::Add),
                    literals,
                }));
            }
            literals.push(Literal::new(value).expect("valid literal"));
        }
    }
}

impl<R: BufRead> Iterator for DratReader<R> {
    type Item = Result<ProofStep, FormatError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.read_step() {
            Ok(Some(step)) => Some(Ok(step)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

pub fn write_drat_step<W: Write>(kind: EventKind, literals: &[Literal], mut out: W) -> std::io::Result<()> {
    if kind == EventKind::Delete {
        out.write_all(b"d ")?;
    }
    for lit in literals {
        write!(out, "{lit} ")?;
    }
    out.write_all(b"0\n")
}
