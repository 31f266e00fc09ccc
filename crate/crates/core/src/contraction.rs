//! Graph coarsening by label propagation, applied recursively.
//!
//! Each node starts with its own id as label. A round visits all nodes in a
//! shuffled order and lets each adopt the label with the highest vote among
//! its neighbours. Once labels settle (or the round budget runs out), every
//! label group collapses into one supernode; inter-group weights are summed
//! and intra-group weights vanish.

use std::io::{self, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{Adjacency, WeightedGraph};

/// How a neighbour's label is weighed when a node picks its new label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VoteMode {
    /// Edge weight divided by the neighbour's total incident weight, so a hub
    /// spreads one unit of influence across all of its edges.
    #[default]
    NormalizedWeight,
    /// Raw edge weight.
    Weight,
    /// One vote per neighbour, ignoring weights.
    Count,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractionConfig {
    /// Stop once a level has at most this many nodes.
    pub target_size: u32,
    /// Maximum number of contraction steps above the input level.
    pub max_levels: usize,
    /// Propagation rounds per contraction step.
    pub max_rounds: usize,
    pub seed: u64,
    pub vote: VoteMode,
}

impl Default for ContractionConfig {
    fn default() -> Self {
        ContractionConfig {
            target_size: 30_000,
            max_levels: 10,
            max_rounds: 10,
            seed: 0,
            vote: VoteMode::default(),
        }
    }
}

/// Reusable per-level state for label propagation.
pub struct LabelPropagation<'a> {
    adjacency: &'a Adjacency,
    strength: Vec<f64>,
    vote: VoteMode,
    score: Vec<f64>,
    touched: Vec<u32>,
    order: Vec<u32>,
}

impl<'a> LabelPropagation<'a> {
    pub fn new(adjacency: &'a Adjacency, vote: VoteMode) -> Self {
        let n = adjacency.num_nodes();
        LabelPropagation {
            adjacency,
            strength: (0..n as u32).map(|v| adjacency.strength(v)).collect(),
            vote,
            score: vec![0.0; n],
            touched: Vec::new(),
            order: (0..n as u32).collect(),
        }
    }

    /// One round over a fresh shuffled permutation. Returns how many labels changed.
    ///
    /// Ties go to the smallest label id; nodes without neighbours keep their label.
    pub fn round(&mut self, labels: &mut [u32], rng: &mut ChaCha8Rng) -> usize {
        self.order.shuffle(rng);
        let mut changed = 0;
        for i in 0..self.order.len() {
            let node = self.order[i];
            if let Some(best) = self.best_label(node, labels) {
                if best != labels[node as usize] {
                    labels[node as usize] = best;
                    changed += 1;
                }
            }
        }
        changed
    }

    fn best_label(&mut self, node: u32, labels: &[u32]) -> Option<u32> {
        for (nb, w) in self.adjacency.neighbors(node) {
            let vote = match self.vote {
                VoteMode::NormalizedWeight => w / self.strength[nb as usize],
                VoteMode::Weight => w,
                VoteMode::Count => 1.0,
            };
            let label = labels[nb as usize];
            if self.score[label as usize] == 0.0 {
                self.touched.push(label);
            }
            self.score[label as usize] += vote;
        }
        let mut best: Option<(u32, f64)> = None;
        for &label in &self.touched {
            let s = self.score[label as usize];
            best = match best {
                Some((bl, bs)) if bs > s || (bs == s && bl < label) => Some((bl, bs)),
                _ => Some((label, s)),
            };
        }
        for &label in &self.touched {
            self.score[label as usize] = 0.0;
        }
        self.touched.clear();
        best.map(|(l, _)| l)
    }
}

/// Convenience wrapper for a single round on a fresh propagation state.
pub fn propagate_round(adjacency: &Adjacency, labels: &mut [u32], rng: &mut ChaCha8Rng, vote: VoteMode) -> usize {
    LabelPropagation::new(adjacency, vote).round(labels, rng)
}

/// One coarsening step: fine node → coarse node, plus the coarse graph.
#[derive(Debug, Clone)]
pub struct Contraction {
    pub map: Vec<u32>,
    pub graph: WeightedGraph,
    pub rounds: usize,
}

/// Collapses label groups. Coarse ids follow the ascending order of labels.
pub fn collapse(graph: &WeightedGraph, labels: &[u32]) -> (Vec<u32>, WeightedGraph) {
    let n = graph.num_nodes() as usize;
    let mut rank = vec![u32::MAX; n];
    let mut present = vec![false; n];
    for &l in labels {
        present[l as usize] = true;
    }
    let mut next = 0u32;
    for (l, p) in present.iter().enumerate() {
        if *p {
            rank[l] = next;
            next += 1;
        }
    }
    let map: Vec<u32> = labels.iter().map(|&l| rank[l as usize]).collect();
    let mut coarse = WeightedGraph::new(next);
    for (u, v, w) in graph.edges() {
        let (cu, cv) = (map[u as usize], map[v as usize]);
        if cu != cv {
            coarse.add_weight(cu, cv, w);
        }
    }
    (map, coarse)
}

/// Propagates labels until no label changes or `max_rounds` is reached, then collapses.
pub fn contract_once(graph: &WeightedGraph, max_rounds: usize, rng: &mut ChaCha8Rng, vote: VoteMode) -> Contraction {
    let adjacency = graph.adjacency();
    let mut lp = LabelPropagation::new(&adjacency, vote);
    let mut labels: Vec<u32> = (0..graph.num_nodes()).collect();
    let mut rounds = 0;
    while rounds < max_rounds.max(1) {
        rounds += 1;
        if lp.round(&mut labels, rng) == 0 {
            break;
        }
    }
    let (map, graph) = collapse(graph, &labels);
    Contraction { map, graph, rounds }
}

/// Level 0 is the input graph; `maps[k]` sends level-k nodes to level-(k+1) nodes.
#[derive(Debug, Clone)]
pub struct ContractionHierarchy {
    levels: Vec<WeightedGraph>,
    maps: Vec<Vec<u32>>,
}

impl ContractionHierarchy {
    /// A hierarchy with only the input level.
    pub fn trivial(graph: WeightedGraph) -> Self {
        ContractionHierarchy {
            levels: vec![graph],
            maps: Vec::new(),
        }
    }

    pub fn levels(&self) -> &[WeightedGraph] {
        &self.levels
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn base(&self) -> &WeightedGraph {
        &self.levels[0]
    }

    pub fn top(&self) -> &WeightedGraph {
        self.levels.last().expect("at least one level")
    }

    pub fn map(&self, level: usize) -> &[u32] {
        &self.maps[level]
    }

    /// Level-0 node → node at `level`.
    pub fn map_to_level(&self, level: usize) -> Vec<u32> {
        let mut map: Vec<u32> = (0..self.levels[0].num_nodes()).collect();
        for step in &self.maps[..level] {
            for m in map.iter_mut() {
                *m = step[*m as usize];
            }
        }
        map
    }

    /// Level-0 node → top-level node.
    pub fn top_map(&self) -> Vec<u32> {
        self.map_to_level(self.levels.len() - 1)
    }

    /// Number of level-0 nodes represented by each top-level node.
    pub fn member_counts(&self) -> Vec<u32> {
        let mut counts = vec![0u32; self.top().num_nodes() as usize];
        for t in self.top_map() {
            counts[t as usize] += 1;
        }
        counts
    }

    /// `fine_id coarse_id` lines for the step from `level` to `level + 1`.
    pub fn write_map<W: Write>(&self, level: usize, mut out: W) -> io::Result<()> {
        for (fine, coarse) in self.maps[level].iter().enumerate() {
            writeln!(out, "{fine} {coarse}")?;
        }
        Ok(())
    }
}

/// Contracts until the graph has at most `target_size` nodes, a step shrinks
/// it by less than 1%, or `max_levels` steps have been taken.
pub fn build_hierarchy(graph: &WeightedGraph, config: &ContractionConfig) -> ContractionHierarchy {
    let mut hierarchy = ContractionHierarchy::trivial(graph.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    while hierarchy.maps.len() < config.max_levels && hierarchy.top().num_nodes() > config.target_size.max(1) {
        let n = hierarchy.top().num_nodes() as f64;
        let step = contract_once(hierarchy.top(), config.max_rounds, &mut rng, config.vote);
        let shrink = n - step.graph.num_nodes() as f64;
        if shrink < 0.01 * n {
            break;
        }
        log::debug!(
            "contraction level {}: {} -> {} nodes in {} rounds",
            hierarchy.maps.len() + 1,
            n,
            step.graph.num_nodes(),
            step.rounds
        );
        hierarchy.levels.push(step.graph);
        hierarchy.maps.push(step.map);
    }
    hierarchy
}
