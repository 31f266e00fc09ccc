//! Formulas, clauses, literals and the clause events streamed from proofs.

use std::cmp::Ordering;
use std::fmt;
use std::num::NonZeroI32;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// A Boolean variable, indexed from 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Variable(u32);

impl Variable {
    /// Returns `None` for index 0.
    pub fn new(index: u32) -> Option<Self> {
        (index > 0).then_some(Variable(index))
    }

    pub fn index(self) -> u32 {
        self.0
    }

    /// Zero-based node id of this variable in an interaction graph.
    pub fn node(self) -> u32 {
        self.0 - 1
    }

    pub fn from_node(node: u32) -> Self {
        Variable(node + 1)
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A possibly negated variable in DIMACS convention.
///
/// Ordered by variable index first and polarity second (positive before negative),
/// which is the canonical literal order inside a [`Clause`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i32", into = "i32")]
pub struct Literal(NonZeroI32);

impl Literal {
    /// Returns `None` for 0 and for `i32::MIN`, whose magnitude is not representable.
    pub fn new(value: i32) -> Option<Self> {
        if value == i32::MIN {
            return None;
        }
        NonZeroI32::new(value).map(Literal)
    }

    pub fn value(self) -> i32 {
        self.0.get()
    }

    pub fn variable(self) -> Variable {
        Variable(self.0.unsigned_abs().get())
    }

    pub fn is_negative(self) -> bool {
        self.0.get() < 0
    }

    pub fn negated(self) -> Self {
        Literal(-self.0)
    }
}

impl Ord for Literal {
    fn cmp(&self, other: &Self) -> Ordering {
        self.variable()
            .cmp(&other.variable())
            .then(self.is_negative().cmp(&other.is_negative()))
    }
}

impl PartialOrd for Literal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl TryFrom<i32> for Literal {
    type Error = String;

    fn try_from(value: i32) -> Result<Self, Self::Error> {
        Literal::new(value).ok_or_else(|| format!("invalid literal {value}"))
    }
}

impl From<Literal> for i32 {
    fn from(lit: Literal) -> i32 {
        lit.value()
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A canonical, non-empty, non-tautological clause.
///
/// Literals are deduplicated and sorted by variable index, so each variable
/// occurs exactly once. The literal slice is reference counted; clones are cheap.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Clause(Arc<[Literal]>);

/// Result of bringing a raw literal list into canonical form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Canonical {
    Clause(Clause),
    Tautology,
    Empty,
}

/// Canonicalizes a raw literal list: dedup, sort, and detect the two marker cases.
pub fn canonicalize(literals: &[Literal]) -> Canonical {
    if literals.is_empty() {
        return Canonical::Empty;
    }
    let mut lits = literals.to_vec();
    lits.sort_unstable();
    lits.dedup();
    if lits.windows(2).any(|w| w[0].variable() == w[1].variable()) {
        return Canonical::Tautology;
    }
    Canonical::Clause(Clause(lits.into()))
}

impl Clause {
    /// Canonicalizes raw integers; `None` if any is not a valid literal
    /// or the result is empty or tautological.
    pub fn from_ints(values: &[i32]) -> Option<Self> {
        let lits: Option<Vec<Literal>> = values.iter().map(|&v| Literal::new(v)).collect();
        match canonicalize(&lits?) {
            Canonical::Clause(c) => Some(c),
            _ => None,
        }
    }

    pub fn literals(&self) -> &[Literal] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Variables in increasing order.
    pub fn variables(&self) -> impl ExactSizeIterator<Item = Variable> + '_ {
        self.0.iter().map(|l| l.variable())
    }

    pub fn max_variable(&self) -> Variable {
        // Sorted by variable, and never empty.
        self.0[self.0.len() - 1].variable()
    }

    /// Order-independent 64-bit fingerprint, stable across platforms and runs.
    pub fn fingerprint(&self) -> u64 {
        let mut h = 0x243f_6a88_85a3_08d3_u64;
        for lit in self.0.iter() {
            h = splitmix64(h ^ (lit.value() as i64 as u64));
        }
        h
    }
}

impl fmt::Debug for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter().map(|l| l.value())).finish()
    }
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// A parsed CNF formula. Tautologies are already dropped.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CnfFormula {
    pub num_variables: u32,
    pub clauses: Vec<Clause>,
}

impl CnfFormula {
    /// Builds a formula from raw integer clauses, extending the variable
    /// count if needed. Tautological and empty clauses are skipped.
    pub fn from_ints(num_variables: u32, clauses: &[&[i32]]) -> Self {
        let mut formula = CnfFormula {
            num_variables,
            clauses: Vec::with_capacity(clauses.len()),
        };
        for raw in clauses {
            if let Some(c) = Clause::from_ints(raw) {
                formula.num_variables = formula.num_variables.max(c.max_variable().index());
                formula.clauses.push(c);
            }
        }
        formula
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Add,
    Delete,
}

/// The clause carried by an event. Tautologies and the empty clause are kept
/// in the log so sequence numbers line up with the proof, but they never
/// touch the graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventBody {
    Clause(Clause),
    Empty,
    /// Raw literals of a tautological clause, kept so the log can be re-encoded.
    Tautology(Arc<[Literal]>),
}

impl EventBody {
    pub fn from_literals(literals: &[Literal]) -> Self {
        match canonicalize(literals) {
            Canonical::Clause(c) => EventBody::Clause(c),
            Canonical::Empty => EventBody::Empty,
            Canonical::Tautology => EventBody::Tautology(literals.into()),
        }
    }

    pub fn clause(&self) -> Option<&Clause> {
        match self {
            EventBody::Clause(c) => Some(c),
            _ => None,
        }
    }

    /// Literals as they would appear on the wire.
    pub fn literals(&self) -> &[Literal] {
        match self {
            EventBody::Clause(c) => c.literals(),
            EventBody::Empty => &[],
            EventBody::Tautology(raw) => raw,
        }
    }
}

/// A clause addition or deletion as streamed by a producer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClauseEvent {
    pub sequence: u64,
    pub kind: EventKind,
    pub body: EventBody,
}

impl ClauseEvent {
    pub fn new(sequence: u64, kind: EventKind, body: EventBody) -> Self {
        ClauseEvent {
            sequence,
            kind,
            body,
        }
    }

    pub fn add(sequence: u64, values: &[i32]) -> Self {
        Self::from_ints(sequence, EventKind::Add, values)
    }

    pub fn delete(sequence: u64, values: &[i32]) -> Self {
        Self::from_ints(sequence, EventKind::Delete, values)
    }

    /// Panics on a 0 or `i32::MIN` literal; intended for tests and fixtures.
    pub fn from_ints(sequence: u64, kind: EventKind, values: &[i32]) -> Self {
        let lits: Vec<Literal> = values
            .iter()
            .map(|&v| Literal::new(v).expect("nonzero literal"))
            .collect();
        ClauseEvent::new(sequence, kind, EventBody::from_literals(&lits))
    }
}
