//! Visualising SAT proofs as heat-maps over variable interaction graphs.
//!
//! A CNF formula becomes a weighted graph of co-occurring variables. Clauses
//! added and deleted by a solver (read from a DRAT proof or streamed over
//! TCP) adjust the weights and light up the variables they touch. Large
//! graphs are coarsened by label propagation before force-directed layout.

pub mod cnf;
pub mod contraction;
pub mod formats;
pub mod graph;
pub mod heatmap;
pub mod layout;
pub mod render;
pub mod session;
pub mod synthetic;
pub mod wire;
