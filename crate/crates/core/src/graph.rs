//! Weighted variable interaction graphs and their incremental maintenance.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use im::OrdMap;
use serde::{Deserialize, Serialize};

use crate::cnf::{Clause, ClauseEvent, CnfFormula, EventBody, EventKind, Variable};

/// Edges whose accumulated weight falls to or below this are removed.
pub const EDGE_EPSILON: f64 = 1e-9;

/// How a clause (a hyperedge over its variables) becomes ordinary edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReductionKind {
    /// Every pair of variables in the clause.
    CliqueExpansion,
    /// Consecutive variables in sorted order, closed by a (min, max) edge.
    #[default]
    RingReduction,
}

impl FromStr for ReductionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ring" | "ring-reduction" => Ok(ReductionKind::RingReduction),
            "clique" | "clique-expansion" => Ok(ReductionKind::CliqueExpansion),
            other => Err(format!("unknown reduction {other:?} (expected ring or clique)")),
        }
    }
}

impl fmt::Display for ReductionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReductionKind::CliqueExpansion => "clique",
            ReductionKind::RingReduction => "ring",
        })
    }
}

/// Weight each reduced edge of a clause receives, decreasing in clause size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightFunction {
    /// `1 / (|c| - 1)`; binary clauses weigh 1.
    #[default]
    InverseSizeMinusOne,
    /// `1 / |c|`
    InverseSize,
    /// `2^(1 - |c|)`
    ExponentialDecay,
}

impl WeightFunction {
    /// Only meaningful for clauses of two or more literals.
    pub fn weight(self, clause_len: usize) -> f64 {
        let n = clause_len as f64;
        match self {
            WeightFunction::InverseSizeMinusOne => 1.0 / (n - 1.0),
            WeightFunction::InverseSize => 1.0 / n,
            WeightFunction::ExponentialDecay => (1.0 - n).exp2(),
        }
    }
}

impl FromStr for WeightFunction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inverse-size-minus-one" => Ok(WeightFunction::InverseSizeMinusOne),
            "inverse-size" => Ok(WeightFunction::InverseSize),
            "exponential" | "exponential-decay" => Ok(WeightFunction::ExponentialDecay),
            other => Err(format!(
                "unknown weight function {other:?} (expected inverse-size-minus-one, inverse-size or exponential)"
            )),
        }
    }
}

impl fmt::Display for WeightFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightFunction::InverseSizeMinusOne => "inverse-size-minus-one",
            WeightFunction::InverseSize => "inverse-size",
            WeightFunction::ExponentialDecay => "exponential",
        })
    }
}

/// Calls `f` once per reduced pair `(u, v)` with `u < v`.
pub fn for_each_pair(clause: &Clause, kind: ReductionKind, mut f: impl FnMut(Variable, Variable)) {
    let vars = clause.literals();
    let n = vars.len();
    if n < 2 {
        return;
    }
    match kind {
        ReductionKind::CliqueExpansion => {
            for i in 0..n {
                for j in i + 1..n {
                    f(vars[i].variable(), vars[j].variable());
                }
            }
        }
        ReductionKind::RingReduction => {
            for w in vars.windows(2) {
                f(w[0].variable(), w[1].variable());
            }
            if n >= 3 {
                f(vars[0].variable(), vars[n - 1].variable());
            }
        }
    }
}

pub fn reduce_clause(clause: &Clause, kind: ReductionKind) -> Vec<(Variable, Variable)> {
    let mut pairs = Vec::new();
    for_each_pair(clause, kind, |u, v| pairs.push((u, v)));
    pairs
}

/// Undirected graph on nodes `0..num_nodes` with positive edge weights.
///
/// Edges live in a persistent ordered map, so clones share structure and
/// iteration is always in `(u, v)` order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightedGraph {
    num_nodes: u32,
    edges: OrdMap<(u32, u32), f64>,
}

impl WeightedGraph {
    pub fn new(num_nodes: u32) -> Self {
        WeightedGraph {
            num_nodes,
            edges: OrdMap::new(),
        }
    }

    /// Builds from `(u, v, w)` triples, summing parallel edges.
    pub fn from_edges(num_nodes: u32, edges: impl IntoIterator<Item = (u32, u32, f64)>) -> Self {
        let mut g = WeightedGraph::new(num_nodes);
        for (u, v, w) in edges {
            g.add_weight(u, v, w);
        }
        g
    }

    pub fn num_nodes(&self) -> u32 {
        self.num_nodes
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn ensure_nodes(&mut self, n: u32) {
        self.num_nodes = self.num_nodes.max(n);
    }

    /// Adds `delta` to edge `{u, v}`, creating or removing it as needed.
    /// Self-loops are ignored.
    pub fn add_weight(&mut self, u: u32, v: u32, delta: f64) {
        if u == v {
            return;
        }
        let key = if u < v { (u, v) } else { (v, u) };
        debug_assert!(key.1 < self.num_nodes, "edge {key:?} outside node range");
        let w = self.edges.get(&key).copied().unwrap_or(0.0) + delta;
        if w <= EDGE_EPSILON {
            self.edges.remove(&key);
        } else {
            self.edges.insert(key, w);
        }
    }

    pub fn weight(&self, u: u32, v: u32) -> f64 {
        let key = if u < v { (u, v) } else { (v, u) };
        self.edges.get(&key).copied().unwrap_or(0.0)
    }

    /// Edges as `(u, v, w)` with `u < v`, in ascending `(u, v)` order.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        self.edges.iter().map(|(&(u, v), &w)| (u, v, w))
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.values().sum()
    }

    pub fn adjacency(&self) -> Adjacency {
        Adjacency::from_graph(self)
    }

    /// `u v w` per line; node ids shifted by `offset` (1 for variable ids).
    pub fn write_edge_list<W: Write>(&self, mut out: W, offset: u32) -> io::Result<()> {
        for (u, v, w) in self.edges() {
            writeln!(out, "{} {} {}", u + offset, v + offset, w)?;
        }
        Ok(())
    }

    pub fn write_dot<W: Write>(&self, mut out: W, offset: u32) -> io::Result<()> {
        writeln!(out, "graph vig {{")?;
        for n in 0..self.num_nodes {
            writeln!(out, "  {};", n + offset)?;
        }
        for (u, v, w) in self.edges() {
            writeln!(out, "  {} -- {} [weight={}];", u + offset, v + offset, w)?;
        }
        writeln!(out, "}}")
    }
}

/// Compressed sparse rows; neighbours of each node are sorted by id.
#[derive(Debug, Clone)]
pub struct Adjacency {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    weights: Vec<f64>,
}

impl Adjacency {
    pub fn from_graph(graph: &WeightedGraph) -> Self {
        let n = graph.num_nodes() as usize;
        let mut degree = vec![0usize; n];
        for (u, v, _) in graph.edges() {
            degree[u as usize] += 1;
            degree[v as usize] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let m = *offsets.last().unwrap();
        let mut neighbors = vec![0u32; m];
        let mut weights = vec![0f64; m];
        let mut fill = offsets[..n].to_vec();
        // Edges arrive sorted by (u, v): row a first receives every (u, a) with
        // u < a in order of u, then every (a, v) in order of v.
        for (u, v, w) in graph.edges() {
            for (a, b) in [(u, v), (v, u)] {
                let slot = &mut fill[a as usize];
                neighbors[*slot] = b;
                weights[*slot] = w;
                *slot += 1;
            }
        }
        debug_assert!((0..n).all(|r| neighbors[offsets[r]..offsets[r + 1]].windows(2).all(|w| w[0] < w[1])));
        Adjacency {
            offsets,
            neighbors,
            weights,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn neighbors(&self, node: u32) -> impl Iterator<Item = (u32, f64)> + '_ {
        let (s, e) = (self.offsets[node as usize], self.offsets[node as usize + 1]);
        self.neighbors[s..e]
            .iter()
            .copied()
            .zip(self.weights[s..e].iter().copied())
    }

    pub fn degree(&self, node: u32) -> usize {
        self.offsets[node as usize + 1] - self.offsets[node as usize]
    }

    /// Sum of incident edge weights.
    pub fn strength(&self, node: u32) -> f64 {
        let (s, e) = (self.offsets[node as usize], self.offsets[node as usize + 1]);
        self.weights[s..e].iter().sum()
    }
}

/// Canonical clause → number of live copies.
///
/// The digest is an order-independent sum of clause fingerprints weighted by
/// multiplicity, so two multisets with equal contents have equal digests.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LiveClauseMultiset {
    counts: OrdMap<Clause, u32>,
    digest: u64,
    live: u64,
}

impl LiveClauseMultiset {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the new count.
    pub fn insert(&mut self, clause: &Clause) -> u32 {
        let count = self.counts.get(clause).copied().unwrap_or(0) + 1;
        self.counts.insert(clause.clone(), count);
        self.digest = self.digest.wrapping_add(clause.fingerprint());
        self.live += 1;
        count
    }

    /// Returns false, leaving the multiset unchanged, when the clause is not live.
    pub fn remove(&mut self, clause: &Clause) -> bool {
        match self.counts.get(clause).copied() {
            None => false,
            Some(count) => {
                if count == 1 {
                    self.counts.remove(clause);
                } else {
                    self.counts.insert(clause.clone(), count - 1);
                }
                self.digest = self.digest.wrapping_sub(clause.fingerprint());
                self.live -= 1;
                true
            }
        }
    }

    pub fn count(&self, clause: &Clause) -> u32 {
        self.counts.get(clause).copied().unwrap_or(0)
    }

    pub fn digest(&self) -> u64 {
        self.digest
    }

    /// Total live clauses, counting multiplicity.
    pub fn len(&self) -> u64 {
        self.live
    }

    pub fn is_empty(&self) -> bool {
        self.live == 0
    }

    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    /// Distinct clauses with their counts, in canonical clause order.
    pub fn iter(&self) -> impl Iterator<Item = (&Clause, u32)> {
        self.counts.iter().map(|(c, &n)| (c, n))
    }
}

fn add_clause_weight(graph: &mut WeightedGraph, clause: &Clause, kind: ReductionKind, wf: WeightFunction, sign: f64) {
    if clause.len() < 2 {
        return;
    }
    let w = sign * wf.weight(clause.len());
    for_each_pair(clause, kind, |u, v| graph.add_weight(u.node(), v.node(), w));
}

/// The graph of a formula before any event.
pub fn build_initial(formula: &CnfFormula, kind: ReductionKind, wf: WeightFunction) -> WeightedGraph {
    let mut graph = WeightedGraph::new(formula.num_variables);
    for clause in &formula.clauses {
        graph.ensure_nodes(clause.max_variable().index());
        add_clause_weight(&mut graph, clause, kind, wf, 1.0);
    }
    graph
}

/// From-scratch graph over a live multiset with a fixed node count.
pub fn build_from_live(num_nodes: u32, live: &LiveClauseMultiset, kind: ReductionKind, wf: WeightFunction) -> WeightedGraph {
    let mut graph = WeightedGraph::new(num_nodes);
    for (clause, count) in live.iter() {
        graph.ensure_nodes(clause.max_variable().index());
        for _ in 0..count {
            add_clause_weight(&mut graph, clause, kind, wf, 1.0);
        }
    }
    graph
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApplyOutcome {
    Added,
    Deleted,
    /// A deletion of a clause that was not live; nothing changed.
    UnknownDelete,
    /// Empty and tautological clauses carry no interactions.
    Ignored,
}

/// Applies one event to a graph and its live multiset.
pub fn apply_event(
    graph: &mut WeightedGraph,
    live: &mut LiveClauseMultiset,
    event: &ClauseEvent,
    kind: ReductionKind,
    wf: WeightFunction,
) -> ApplyOutcome {
    let EventBody::Clause(clause) = &event.body else {
        return ApplyOutcome::Ignored;
    };
    match event.kind {
        EventKind::Add => {
            live.insert(clause);
            graph.ensure_nodes(clause.max_variable().index());
            add_clause_weight(graph, clause, kind, wf, 1.0);
            ApplyOutcome::Added
        }
        EventKind::Delete => {
            if live.remove(clause) {
                add_clause_weight(graph, clause, kind, wf, -1.0);
                ApplyOutcome::Deleted
            } else {
                ApplyOutcome::UnknownDelete
            }
        }
    }
}

/// The live interaction graph together with the clause multiset it is built from.
#[derive(Debug, Clone)]
pub struct InteractionGraph {
    pub graph: WeightedGraph,
    pub live: LiveClauseMultiset,
    pub reduction: ReductionKind,
    pub weights: WeightFunction,
    pub unknown_deletes: u64,
}

impl InteractionGraph {
    pub fn from_formula(formula: &CnfFormula, reduction: ReductionKind, weights: WeightFunction) -> Self {
        let mut live = LiveClauseMultiset::new();
        for clause in &formula.clauses {
            live.insert(clause);
        }
        InteractionGraph {
            graph: build_initial(formula, reduction, weights),
            live,
            reduction,
            weights,
            unknown_deletes: 0,
        }
    }

    pub fn apply(&mut self, event: &ClauseEvent) -> ApplyOutcome {
        let outcome = apply_event(&mut self.graph, &mut self.live, event, self.reduction, self.weights);
        if outcome == ApplyOutcome::UnknownDelete {
            self.unknown_deletes += 1;
            log::debug!("deletion of non-live clause at sequence {}", event.sequence);
        }
        outcome
    }

    /// Rebuilds the weights from the live clauses, discarding accumulated
    /// rounding drift. The node set is kept.
    pub fn rebuild(&self) -> WeightedGraph {
        build_from_live(self.graph.num_nodes(), &self.live, self.reduction, self.weights)
    }
}
