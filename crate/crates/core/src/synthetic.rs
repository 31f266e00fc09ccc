//! Seeded generators for formulas and proof streams with community structure.
//!
//! Variables are split into blocks; most clauses stay inside one block and a
//! few reach into another, which is roughly what industrial instances look
//! like to the interaction graph.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cnf::{ClauseEvent, CnfFormula, EventKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub num_variables: u32,
    pub community_size: u32,
    /// Chance that a clause takes one variable from another community.
    pub cross_probability: f64,
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_variables: 100,
            community_size: 20,
            cross_probability: 0.1,
            min_len: 2,
            max_len: 6,
        }
    }
}

pub struct Generator {
    spec: SyntheticSpec,
    rng: ChaCha8Rng,
}

impl Generator {
    pub fn new(spec: SyntheticSpec, seed: u64) -> Self {
        assert!(spec.num_variables >= 1 && spec.min_len >= 1 && spec.min_len <= spec.max_len);
        Generator {
            spec,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// A clause as signed literals over distinct variables.
    pub fn clause(&mut self) -> Vec<i32> {
        let n = self.spec.num_variables;
        let size = self.spec.community_size.clamp(1, n);
        let communities = n.div_ceil(size);
        let c = self.rng.gen_range(0..communities);
        let lo = c * size + 1;
        let hi = ((c + 1) * size).min(n);
        let span = (hi - lo + 1) as usize;
        let len = self.rng.gen_range(self.spec.min_len..=self.spec.max_len).min(span);
        let mut vars: Vec<u32> = rand::seq::index::sample(&mut self.rng, span, len)
            .into_iter()
            .map(|i| lo + i as u32)
            .collect();
        if len >= 2 && self.rng.gen_bool(self.spec.cross_probability) {
            let other = self.rng.gen_range(1..=n);
            if !vars.contains(&other) {
                let last = vars.len() - 1;
                vars[last] = other;
            }
        }
        vars.into_iter()
            .map(|v| if self.rng.gen_bool(0.5) { v as i32 } else { -(v as i32) })
            .collect()
    }

    pub fn formula(&mut self, num_clauses: usize) -> CnfFormula {
        let clauses: Vec<Vec<i32>> = (0..num_clauses).map(|_| self.clause()).collect();
        let refs: Vec<&[i32]> = clauses.iter().map(Vec::as_slice).collect();
        CnfFormula::from_ints(self.spec.num_variables, &refs)
    }

    /// Learned-clause additions interleaved with deletions of earlier
    /// learned clauses; `delete_fraction` of the events are deletions once
    /// something is available to delete.
    pub fn proof(&mut self, num_events: usize, delete_fraction: f64) -> Vec<ClauseEvent> {
        let mut live: Vec<Vec<i32>> = Vec::new();
        let mut out = Vec::with_capacity(num_events);
        for seq in 0..num_events as u64 {
            if !live.is_empty() && self.rng.gen_bool(delete_fraction) {
                let i = self.rng.gen_range(0..live.len());
                let mut c = live.swap_remove(i);
                c.shuffle(&mut self.rng);
                out.push(ClauseEvent::from_ints(seq, EventKind::Delete, &c));
            } else {
                let c = self.clause();
                out.push(ClauseEvent::from_ints(seq, EventKind::Add, &c));
                live.push(c);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_in_range() {
        let spec = SyntheticSpec::default();
        let a = Generator::new(spec, 5).proof(500, 0.3);
        let b = Generator::new(spec, 5).proof(500, 0.3);
        assert_eq!(a, b);
        for e in &a {
            let c = e.body.clause().expect("distinct variables give proper clauses");
            assert!(c.max_variable().index() <= spec.num_variables);
            assert!((1..=spec.max_len).contains(&c.len()));
        }
        assert!(a.iter().any(|e| e.kind == EventKind::Delete));
    }

    #[test]
    fn deletions_name_live_clauses() {
        use crate::graph::{ApplyOutcome, InteractionGraph};
        let mut gen = Generator::new(SyntheticSpec::default(), 8);
        let f = gen.formula(50);
        let mut g = InteractionGraph::from_formula(&f, Default::default(), Default::default());
        for e in gen.proof(400, 0.4) {
            assert_ne!(g.apply(&e), ApplyOutcome::UnknownDelete);
        }
    }
}
