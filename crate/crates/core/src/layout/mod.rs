//! Force-directed placement.
//!
//! A spring embedder in the Fruchterman–Reingold style: every pair of nodes
//! repels with `k² / d` (approximated by a Barnes–Hut quadtree), every edge
//! attracts with `attraction · w · d² / k`, and a weak linear pull toward the
//! centroid keeps disconnected parts on screen. Moves are capped by a
//! temperature that falls linearly to zero. The ideal edge length `k` is 1;
//! nodes start in a square of side `√n`.
//!
//! Everything is sequential and seeded, so identical inputs give bit-identical
//! output.

mod quadtree;
mod relayout;

use std::io::{self, BufRead, Write};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cnf::splitmix64;
use crate::contraction::ContractionHierarchy;
use crate::graph::WeightedGraph;

pub use quadtree::QuadTree;
pub use relayout::{relayout_from_session, warm_start_through, RelayoutInput, RelayoutOutput};

#[derive(Debug, Error)]
pub enum LayoutError {
    #[error("cannot lay out a graph without nodes")]
    EmptyGraph,
    #[error("invalid layout configuration: {0}")]
    InvalidConfig(String),
    #[error("warm start has {got} positions, graph has {expected} nodes")]
    WarmStartMismatch { expected: usize, got: usize },
    #[error("positions file line {line}: {reason}")]
    BadPositions { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutConfig {
    pub iterations: usize,
    pub seed: u64,
    /// Multiplier on the spring force.
    pub attraction: f64,
    /// Barnes–Hut opening angle.
    pub theta: f64,
    /// Initial step cap as a fraction of the starting bounding-box diagonal.
    pub cooling: f64,
    /// Strength of the linear pull toward the centroid.
    pub gravity: f64,
    /// Wall-clock cap in milliseconds; `None` keeps runs deterministic.
    #[serde(default)]
    pub time_budget_ms: Option<u64>,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        LayoutConfig {
            iterations: 500,
            seed: 0,
            attraction: 1.0,
            theta: 0.9,
            cooling: 0.1,
            gravity: 0.1,
            time_budget_ms: None,
        }
    }
}

impl LayoutConfig {
    pub fn validate(&self) -> Result<(), LayoutError> {
        let bad = |m: &str| Err(LayoutError::InvalidConfig(m.to_string()));
        if self.iterations == 0 {
            return bad("iterations must be at least 1");
        }
        if !(self.theta > 0.0 && self.theta <= 1.5) {
            return bad("theta must be in (0, 1.5]");
        }
        if !(self.attraction > 0.0 && self.attraction.is_finite()) {
            return bad("attraction must be positive");
        }
        if !(self.cooling > 0.0 && self.cooling.is_finite()) {
            return bad("cooling must be positive");
        }
        if !(self.gravity >= 0.0 && self.gravity.is_finite()) {
            return bad("gravity must be non-negative");
        }
        Ok(())
    }
}

/// Node coordinates, indexed by node id.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Positions(pub Vec<[f64; 2]>);

impl Positions {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, node: u32) -> [f64; 2] {
        self.0[node as usize]
    }

    pub fn as_slice(&self) -> &[[f64; 2]] {
        &self.0
    }

    /// Scales uniformly into the unit box: the longer axis spans [0, 1] and
    /// the shorter one is centred. A degenerate set collapses to (0.5, 0.5).
    pub fn normalized(&self) -> Positions {
        let mut out = self.clone();
        normalize_in_place(&mut out.0);
        out
    }

    /// `node_id x y` per line.
    pub fn write_text<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (i, p) in self.0.iter().enumerate() {
            writeln!(out, "{i} {} {}", p[0], p[1])?;
        }
        Ok(())
    }

    /// Reads the `node_id x y` format; ids may come in any order but must
    /// cover `0..n` exactly once.
    pub fn read_text<R: BufRead>(input: R) -> Result<Positions, LayoutError> {
        let mut entries: Vec<(usize, [f64; 2])> = Vec::new();
        for (no, line) in input.lines().enumerate() {
            let line = line?;
            let line_no = no + 1;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let bad = |reason: &str| LayoutError::BadPositions {
                line: line_no,
                reason: reason.to_string(),
            };
            let mut parts = t.split_ascii_whitespace();
            let id: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad node id"))?;
            let x: f64 = parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad x"))?;
            let y: f64 = parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad y"))?;
            if !(x.is_finite() && y.is_finite()) {
                return Err(bad("non-finite coordinate"));
            }
            entries.push((id, [x, y]));
        }
        let mut out = vec![None; entries.len()];
        for (id, p) in entries {
            match out.get_mut(id) {
                Some(slot @ None) => *slot = Some(p),
                _ => {
                    return Err(LayoutError::BadPositions {
                        line: 0,
                        reason: format!("node id {id} duplicated or out of range"),
                    })
                }
            }
        }
        Ok(Positions(out.into_iter().map(|p| p.expect("all ids present")).collect()))
    }
}

fn normalize_in_place(points: &mut [[f64; 2]]) {
    if points.is_empty() {
        return;
    }
    let (mut minx, mut miny, mut maxx, mut maxy) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in points.iter() {
        minx = minx.min(p[0]);
        miny = miny.min(p[1]);
        maxx = maxx.max(p[0]);
        maxy = maxy.max(p[1]);
    }
    let extent = (maxx - minx).max(maxy - miny);
    if extent <= 0.0 || !extent.is_finite() {
        points.iter_mut().for_each(|p| *p = [0.5, 0.5]);
        return;
    }
    let ox = (1.0 - (maxx - minx) / extent) / 2.0;
    let oy = (1.0 - (maxy - miny) / extent) / 2.0;
    for p in points.iter_mut() {
        p[0] = ((p[0] - minx) / extent + ox).clamp(0.0, 1.0);
        p[1] = ((p[1] - miny) / extent + oy).clamp(0.0, 1.0);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayoutOutcome {
    /// Normalized to the unit box.
    pub positions: Positions,
    pub iterations_run: usize,
    /// True if the wall-clock budget ended the run.
    pub budget_exhausted: bool,
}

/// Lays out `graph`, optionally continuing from `warm_start`.
///
/// The warm start is normalized first, so translating or scaling it does not
/// change the result.
pub fn layout(graph: &WeightedGraph, config: &LayoutConfig, warm_start: Option<&Positions>) -> Result<LayoutOutcome, LayoutError> {
    config.validate()?;
    let n = graph.num_nodes() as usize;
    if n == 0 {
        return Err(LayoutError::EmptyGraph);
    }
    let side = (n as f64).sqrt();
    let mut pos: Vec<[f64; 2]> = match warm_start {
        Some(w) => {
            if w.len() != n {
                return Err(LayoutError::WarmStartMismatch {
                    expected: n,
                    got: w.len(),
                });
            }
            let mut p = w.0.clone();
            normalize_in_place(&mut p);
            p.iter_mut().for_each(|q| *q = [q[0] * side, q[1] * side]);
            p
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            (0..n).map(|_| [rng.gen::<f64>() * side, rng.gen::<f64>() * side]).collect()
        }
    };
    let edges: Vec<(u32, u32, f64)> = graph.edges().collect();
    let outcome = run(&mut pos, &edges, config);
    normalize_in_place(&mut pos);
    Ok(LayoutOutcome {
        positions: Positions(pos),
        iterations_run: outcome.0,
        budget_exhausted: outcome.1,
    })
}

fn run(pos: &mut [[f64; 2]], edges: &[(u32, u32, f64)], config: &LayoutConfig) -> (usize, bool) {
    let n = pos.len();
    let k = 1.0;
    let k2 = k * k;
    let (mut minx, mut miny, mut maxx, mut maxy) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in pos.iter() {
        minx = minx.min(p[0]);
        miny = miny.min(p[1]);
        maxx = maxx.max(p[0]);
        maxy = maxy.max(p[1]);
    }
    let diagonal = (maxx - minx).hypot(maxy - miny).max(k);
    let t0 = config.cooling * diagonal;
    let budget = config.time_budget_ms.map(Duration::from_millis);
    let started = Instant::now();
    let mut tree = QuadTree::new();
    let mut disp = vec![[0.0f64; 2]; n];
    let mut tree_order: Vec<u32> = Vec::with_capacity(n);

    for it in 0..config.iterations {
        if let Some(b) = budget {
            if started.elapsed() >= b {
                log::info!("layout stopped by time budget at iteration {it}");
                return (it, true);
            }
        }
        let temperature = t0 * (1.0 - it as f64 / config.iterations as f64);

        tree.build(pos);
        // Visiting bodies in tree order keeps consecutive traversals in cache;
        // each body's sum is independent of the visiting order.
        tree_order.clear();
        tree_order.extend_from_slice(tree.bodies());
        for &i in &tree_order {
            let d = &mut disp[i as usize];
            *d = [0.0; 2];
            tree.repulsion(pos, i, config.theta, k2, d);
        }

        for &(u, v, w) in edges {
            let (pu, pv) = (pos[u as usize], pos[v as usize]);
            let dx = pu[0] - pv[0];
            let dy = pu[1] - pv[1];
            let dist = (dx * dx + dy * dy).sqrt();
            if dist < quadtree::MIN_DISTANCE {
                continue;
            }
            // (dx, dy) / dist * attraction * w * dist² / k
            let f = config.attraction * w * dist / k;
            disp[u as usize][0] -= dx * f;
            disp[u as usize][1] -= dy * f;
            disp[v as usize][0] += dx * f;
            disp[v as usize][1] += dy * f;
        }

        if config.gravity > 0.0 {
            let (mut cx, mut cy) = (0.0, 0.0);
            for p in pos.iter() {
                cx += p[0];
                cy += p[1];
            }
            cx /= n as f64;
            cy /= n as f64;
            for (p, d) in pos.iter().zip(disp.iter_mut()) {
                d[0] += config.gravity * (cx - p[0]);
                d[1] += config.gravity * (cy - p[1]);
            }
        }

        for (p, d) in pos.iter_mut().zip(&disp) {
            let len = d[0].hypot(d[1]);
            if len > 0.0 && len.is_finite() {
                let step = len.min(temperature) / len;
                p[0] += d[0] * step;
                p[1] += d[1] * step;
            }
        }
    }
    (config.iterations, false)
}

/// Seeds fine nodes around their supernode: members of each coarse node are
/// spread on a small sunflower disc whose radius shrinks with the number of
/// coarse nodes. Input positions are normalized first.
pub fn expand_positions(coarse: &Positions, map: &[u32], seed: u64) -> Positions {
    let coarse = coarse.normalized();
    let spacing = 0.5 / (coarse.len().max(1) as f64).sqrt();
    let mut members = vec![0u32; coarse.len()];
    for &c in map {
        members[c as usize] += 1;
    }
    let mut rank = vec![0u32; coarse.len()];
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let phase = (splitmix64(seed) >> 11) as f64 / (1u64 << 53) as f64 * std::f64::consts::TAU;
    let out = map
        .iter()
        .map(|&c| {
            let c = c as usize;
            let r = rank[c] as f64;
            rank[c] += 1;
            let radius = spacing * ((r + 0.5) / members[c] as f64).sqrt();
            let angle = phase + r * golden;
            let base = coarse.0[c];
            [base[0] + radius * angle.cos(), base[1] + radius * angle.sin()]
        })
        .collect();
    Positions(out)
}

/// Lays out the top of the hierarchy, then walks down to `display_level`,
/// expanding each supernode into its members and refining.
pub fn layout_hierarchy(
    hierarchy: &ContractionHierarchy,
    config: &LayoutConfig,
    display_level: usize,
) -> Result<LayoutOutcome, LayoutError> {
    let top = hierarchy.depth() - 1;
    let display_level = display_level.min(top);
    let mut outcome = layout(hierarchy.top(), config, None)?;
    for level in (display_level..top).rev() {
        let warm = expand_positions(&outcome.positions, hierarchy.map(level), config.seed ^ level as u64);
        outcome = layout(&hierarchy.levels()[level], config, Some(&warm))?;
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
        (a[0] - b[0]).hypot(a[1] - b[1])
    }

    #[test]
    fn single_node_is_centered() {
        let out = layout(&WeightedGraph::new(1), &LayoutConfig::default(), None).unwrap();
        assert_eq!(out.positions.0, vec![[0.5, 0.5]]);
    }

    #[test]
    fn edge_spans_one_axis() {
        let g = WeightedGraph::from_edges(2, [(0, 1, 1.0)]);
        let p = layout(&g, &LayoutConfig::default(), None).unwrap().positions;
        assert_ne!(p.get(0), p.get(1));
        let spans_x = (p.get(0)[0] - p.get(1)[0]).abs() == 1.0;
        let spans_y = (p.get(0)[1] - p.get(1)[1]).abs() == 1.0;
        assert!(spans_x || spans_y, "{p:?}");
    }

    #[test]
    fn empty_graph_is_an_error() {
        assert!(matches!(
            layout(&WeightedGraph::new(0), &LayoutConfig::default(), None),
            Err(LayoutError::EmptyGraph)
        ));
    }

    #[test]
    fn config_is_validated() {
        let g = WeightedGraph::new(3);
        for cfg in [
            LayoutConfig { iterations: 0, ..Default::default() },
            LayoutConfig { theta: 0.0, ..Default::default() },
            LayoutConfig { theta: 1.6, ..Default::default() },
        ] {
            assert!(matches!(layout(&g, &cfg, None), Err(LayoutError::InvalidConfig(_))));
        }
        let warm = Positions(vec![[0.0, 0.0]; 2]);
        assert!(matches!(
            layout(&g, &LayoutConfig::default(), Some(&warm)),
            Err(LayoutError::WarmStartMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn heavy_edge_is_shorter() {
        let g = WeightedGraph::from_edges(3, [(0, 1, 10.0), (1, 2, 0.1)]);
        let mut ok = 0;
        for seed in 0..20 {
            let cfg = LayoutConfig { seed, ..Default::default() };
            let p = layout(&g, &cfg, None).unwrap().positions;
            ok += (dist(p.get(0), p.get(1)) < dist(p.get(1), p.get(2))) as usize;
        }
        assert!(ok >= 18, "{ok}/20");
    }

    #[test]
    fn deterministic_and_finite() {
        let g = WeightedGraph::from_edges(40, (0..39).map(|i| (i, (i * 7 + 3) % 40, 1.0 + i as f64 / 10.0)));
        let cfg = LayoutConfig { seed: 11, iterations: 100, ..Default::default() };
        let a = layout(&g, &cfg, None).unwrap();
        let b = layout(&g, &cfg, None).unwrap();
        assert_eq!(a, b);
        for p in a.positions.as_slice() {
            assert!(p[0].is_finite() && (0.0..=1.0).contains(&p[0]));
            assert!(p[1].is_finite() && (0.0..=1.0).contains(&p[1]));
        }
    }

    #[test]
    fn coincident_start_stays_finite() {
        let g = WeightedGraph::from_edges(5, [(0, 1, 1.0), (2, 3, 1.0)]);
        let warm = Positions(vec![[3.0, 3.0]; 5]);
        let p = layout(&g, &LayoutConfig { iterations: 50, ..Default::default() }, Some(&warm))
            .unwrap()
            .positions;
        assert!(p.as_slice().iter().all(|q| q[0].is_finite() && q[1].is_finite()));
        let distinct: std::collections::HashSet<_> = p.as_slice().iter().map(|q| (q[0].to_bits(), q[1].to_bits())).collect();
        assert_eq!(distinct.len(), 5);
    }

    #[test]
    fn warm_start_translation_and_scale_do_not_matter() {
        let g = WeightedGraph::from_edges(6, [(0, 1, 1.0), (1, 2, 2.0), (2, 3, 1.0), (3, 4, 0.5), (4, 5, 1.0)]);
        let cfg = LayoutConfig { iterations: 60, ..Default::default() };
        let warm = layout(&g, &cfg, None).unwrap().positions;
        let moved = Positions(warm.0.iter().map(|p| [p[0] * 3.0 - 7.0, p[1] * 3.0 + 2.0]).collect());
        let a = layout(&g, &cfg, Some(&warm)).unwrap();
        let b = layout(&g, &cfg, Some(&moved)).unwrap();
        // Renormalizing the moved start differs in the last bits, and 60
        // iterations amplify that to about 1e-9.
        for (p, q) in a.positions.as_slice().iter().zip(b.positions.as_slice()) {
            assert!(dist(*p, *q) < 1e-6, "{p:?} vs {q:?}");
        }
    }

    #[test]
    fn time_budget_is_reported() {
        let g = WeightedGraph::from_edges(200, (0..199).map(|i| (i, i + 1, 1.0)));
        let cfg = LayoutConfig { iterations: 1_000_000, time_budget_ms: Some(20), ..Default::default() };
        let out = layout(&g, &cfg, None).unwrap();
        assert!(out.budget_exhausted);
        assert!(out.iterations_run < 1_000_000);
    }

    #[test]
    fn positions_text_round_trip() {
        let p = Positions(vec![[0.25, 0.5], [1.0 / 3.0, 0.0]]);
        let mut buf = Vec::new();
        p.write_text(&mut buf).unwrap();
        assert_eq!(Positions::read_text(buf.as_slice()).unwrap(), p);
        assert!(Positions::read_text("0 1 1\n0 2 2\n".as_bytes()).is_err());
        assert!(Positions::read_text("0 x 1\n".as_bytes()).is_err());
    }

    #[test]
    fn multilevel_reaches_display_level() {
        use crate::contraction::{build_hierarchy, ContractionConfig};
        let mut edges = Vec::new();
        for c in 0..4u32 {
            for a in 0..5u32 {
                for b in a + 1..5 {
                    edges.push((c * 5 + a, c * 5 + b, 1.0));
                }
            }
            edges.push((c * 5, ((c + 1) % 4) * 5, 1.0));
        }
        let g = WeightedGraph::from_edges(20, edges);
        let h = build_hierarchy(&g, &ContractionConfig { target_size: 4, ..Default::default() });
        assert!(h.depth() >= 2);
        let cfg = LayoutConfig { iterations: 80, ..Default::default() };
        assert_eq!(layout_hierarchy(&h, &cfg, 0).unwrap().positions.len(), 20);
        assert_eq!(
            layout_hierarchy(&h, &cfg, 99).unwrap().positions.len() as u32,
            h.top().num_nodes()
        );
    }
}
