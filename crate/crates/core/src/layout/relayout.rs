//! Relayout with weights adjusted by the clauses seen so far.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{layout, LayoutConfig, LayoutError, LayoutOutcome, Positions};
use crate::contraction::{build_hierarchy, ContractionConfig, ContractionHierarchy};
use crate::graph::{build_from_live, LiveClauseMultiset, ReductionKind, WeightFunction, WeightedGraph};

/// Everything a relayout needs, owned so it can move to a worker thread.
#[derive(Debug, Clone)]
pub struct RelayoutInput {
    /// Fine node count; the live clauses may mention more variables.
    pub num_nodes: u32,
    pub live: LiveClauseMultiset,
    pub reduction: ReductionKind,
    pub weights: WeightFunction,
    /// Fine node → coarse node of the layout being replaced.
    pub previous_map: Vec<u32>,
    /// Coarse positions of the layout being replaced.
    pub previous_positions: Positions,
    pub contraction: ContractionConfig,
    pub layout: LayoutConfig,
}

#[derive(Debug, Clone)]
pub struct RelayoutOutput {
    pub hierarchy: ContractionHierarchy,
    pub outcome: LayoutOutcome,
}

/// Rebuilds the graph from the live clauses, re-contracts it, and lays out
/// the new top level starting from the old picture.
pub fn relayout_from_session(input: &RelayoutInput) -> Result<RelayoutOutput, LayoutError> {
    let graph = build_from_live(input.num_nodes, &input.live, input.reduction, input.weights);
    let hierarchy = build_hierarchy(&graph, &input.contraction);
    let warm = warm_start_through(
        &graph,
        &input.previous_map,
        &input.previous_positions,
        &hierarchy,
        input.layout.seed,
    );
    let outcome = layout(hierarchy.top(), &input.layout, Some(&warm))?;
    Ok(RelayoutOutput { hierarchy, outcome })
}

/// Maps old coarse positions onto the top level of a new hierarchy.
///
/// Each fine node inherits its old supernode's position. Fine nodes the old
/// layout did not know sit at the centroid of their placed neighbours, or at
/// a seeded random point if they have none. A new supernode then takes the
/// mean of its members; when all members agree exactly, that value is used
/// as is, so an unchanged partition reproduces the old positions bit for bit.
pub fn warm_start_through(
    fine: &WeightedGraph,
    previous_map: &[u32],
    previous: &Positions,
    hierarchy: &ContractionHierarchy,
    seed: u64,
) -> Positions {
    let previous = previous.normalized();
    let n = fine.num_nodes() as usize;
    let mut fine_pos: Vec<Option<[f64; 2]>> = (0..n)
        .map(|v| previous_map.get(v).and_then(|&c| previous.0.get(c as usize)).copied())
        .collect();

    if fine_pos.iter().any(Option::is_none) {
        let adjacency = fine.adjacency();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        #[allow(clippy::needless_range_loop)]
        for v in 0..n {
            if fine_pos[v].is_some() {
                continue;
            }
            let (mut sx, mut sy, mut k) = (0.0, 0.0, 0usize);
            for (u, _) in adjacency.neighbors(v as u32) {
                if let Some(p) = previous_map.get(u as usize).and_then(|&c| previous.0.get(c as usize)) {
                    sx += p[0];
                    sy += p[1];
                    k += 1;
                }
            }
            fine_pos[v] = Some(if k > 0 {
                [sx / k as f64, sy / k as f64]
            } else {
                [rng.gen::<f64>(), rng.gen::<f64>()]
            });
        }
    }

    let top_map = hierarchy.top_map();
    let m = hierarchy.top().num_nodes() as usize;
    let mut sum = vec![[0.0f64; 2]; m];
    let mut count = vec![0usize; m];
    let mut first: Vec<Option<[f64; 2]>> = vec![None; m];
    let mut uniform = vec![true; m];
    for (v, p) in fine_pos.iter().enumerate() {
        let p = p.expect("every fine node placed");
        let t = top_map[v] as usize;
        sum[t][0] += p[0];
        sum[t][1] += p[1];
        count[t] += 1;
        match first[t] {
            None => first[t] = Some(p),
            Some(f) if f != p => uniform[t] = false,
            Some(_) => {}
        }
    }
    let out = (0..m)
        .map(|t| match first[t] {
            Some(f) if uniform[t] => f,
            Some(_) => [sum[t][0] / count[t] as f64, sum[t][1] / count[t] as f64],
            None => [0.5, 0.5],
        })
        .collect();
    Positions(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnf::{CnfFormula, ClauseEvent};
    use crate::graph::InteractionGraph;

    fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
        (a[0] - b[0]).hypot(a[1] - b[1])
    }

    fn ring_formula(n: u32) -> CnfFormula {
        let clauses: Vec<Vec<i32>> = (1..=n as i32)
            .map(|v| vec![v, -(v % n as i32 + 1), (v + 2) % n as i32 + 1])
            .collect();
        let refs: Vec<&[i32]> = clauses.iter().map(Vec::as_slice).collect();
        CnfFormula::from_ints(n, &refs)
    }

    fn initial(ig: &InteractionGraph, layout_cfg: &LayoutConfig, contraction: &ContractionConfig) -> (ContractionHierarchy, Positions) {
        let h = build_hierarchy(&ig.rebuild(), contraction);
        let p = layout(h.top(), layout_cfg, None).unwrap().positions;
        (h, p)
    }

    fn input(ig: &InteractionGraph, h: &ContractionHierarchy, p: &Positions, layout_cfg: &LayoutConfig, contraction: &ContractionConfig) -> RelayoutInput {
        RelayoutInput {
            num_nodes: ig.graph.num_nodes(),
            live: ig.live.clone(),
            reduction: ig.reduction,
            weights: ig.weights,
            previous_map: h.top_map(),
            previous_positions: p.clone(),
            contraction: *contraction,
            layout: layout_cfg.clone(),
        }
    }

    #[test]
    fn no_events_equals_plain_warm_layout() {
        let ig = InteractionGraph::from_formula(&ring_formula(40), ReductionKind::RingReduction, WeightFunction::default());
        let lc = LayoutConfig { iterations: 80, ..Default::default() };
        for target in [100, 8] {
            let cc = ContractionConfig { target_size: target, ..Default::default() };
            let (h, p) = initial(&ig, &lc, &cc);
            let out = relayout_from_session(&input(&ig, &h, &p, &lc, &cc)).unwrap();
            assert_eq!(out.hierarchy.top(), h.top());
            assert_eq!(out.outcome, layout(h.top(), &lc, Some(&p)).unwrap());
        }
    }

    #[test]
    fn loose_variable_drifts_outward() {
        let n = 30;
        let formula = ring_formula(n);
        let mut ig = InteractionGraph::from_formula(&formula, ReductionKind::RingReduction, WeightFunction::default());
        let lc = LayoutConfig { iterations: 200, seed: 3, ..Default::default() };
        let cc = ContractionConfig { target_size: 1000, ..Default::default() };
        let (h, before) = initial(&ig, &lc, &cc);

        let v = 7u32;
        let mut seq = 0;
        for clause in &formula.clauses {
            if clause.variables().any(|x| x.node() == v) {
                let ints: Vec<i32> = clause.literals().iter().map(|l| l.value()).collect();
                ig.apply(&ClauseEvent::delete(seq, &ints));
                seq += 1;
            }
        }
        let fine = ig.rebuild();
        let adj = fine.adjacency();
        assert_eq!(adj.degree(v), 0);

        let out = relayout_from_session(&input(&ig, &h, &before, &lc, &cc)).unwrap();
        let after = &out.outcome.positions;
        let spread = |p: &Positions| {
            let (mut cx, mut cy, mut total) = (0.0, 0.0, 0.0);
            for u in 0..n {
                let s = adj.strength(u);
                if s > 0.0 {
                    cx += s * p.get(u)[0];
                    cy += s * p.get(u)[1];
                    total += s;
                }
            }
            dist(p.get(v), [cx / total, cy / total])
        };
        let (d0, d1) = (spread(&before.normalized()), spread(after));
        assert!(d1 >= d0, "isolated node moved inward: {d0} -> {d1}");
    }

    #[test]
    fn learned_community_tightens() {
        let n = 40;
        let mut ig = InteractionGraph::from_formula(&ring_formula(n), ReductionKind::RingReduction, WeightFunction::default());
        let lc = LayoutConfig { iterations: 200, seed: 9, ..Default::default() };
        let cc = ContractionConfig { target_size: 1000, ..Default::default() };
        let (h, before) = initial(&ig, &lc, &cc);

        let subset = [2i32, 11, 19, 27, 33, 38];
        let mut seq = 0;
        for _ in 0..20 {
            for i in 0..subset.len() {
                for j in i + 1..subset.len() {
                    ig.apply(&ClauseEvent::add(seq, &[subset[i], -subset[j]]));
                    seq += 1;
                }
            }
        }
        let out = relayout_from_session(&input(&ig, &h, &before, &lc, &cc)).unwrap();
        let mean_pair = |p: &Positions| {
            let mut total = 0.0;
            let mut pairs = 0.0;
            for i in 0..subset.len() {
                for j in i + 1..subset.len() {
                    total += dist(p.get(subset[i] as u32 - 1), p.get(subset[j] as u32 - 1));
                    pairs += 1.0;
                }
            }
            total / pairs
        };
        let (d0, d1) = (mean_pair(&before.normalized()), mean_pair(&out.outcome.positions));
        assert!(d1 < d0, "community did not tighten: {d0} -> {d1}");
    }

    #[test]
    fn new_variables_start_near_their_neighbours() {
        let fine = WeightedGraph::from_edges(4, [(0, 2, 1.0), (1, 2, 1.0)]);
        let previous = Positions(vec![[0.0, 0.0], [1.0, 1.0]]);
        let h = ContractionHierarchy::trivial(fine.clone());
        let warm = warm_start_through(&fine, &[0, 1], &previous, &h, 1);
        assert_eq!(warm.get(2), [0.5, 0.5]);
        let p3 = warm.get(3);
        assert!((0.0..1.0).contains(&p3[0]) && (0.0..1.0).contains(&p3[1]));
    }
}
