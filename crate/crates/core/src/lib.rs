//! Core algorithms for the stochastic firefighter problem: an infection
//! spreads over a graph in discrete steps while a controller vaccinates a
//! bounded number of healthy nodes per step.
//!
//! The crate is `no_std` (with `alloc`) and holds every pure computation:
//!
//! * [`graph`]: immutable graphs, generators, neighborhoods and cuts.
//! * [`dynamics`]: the Markov decision process, trajectories and loss.
//! * [`policies`]: CUT, random, tree, scripted and no-op vaccination.
//! * [`oracle`]: exhaustive ground truth on tiny instances.
//! * [`growth`]: Monte-Carlo lower-bound profiles and the affine fit.
//! * [`bounds`]: closed-form containment bounds and the growth recursion.
//! * [`allocator`]: state-dependent budget allocation.
//!
//! File formats, parallel drivers and the command line live in the `fflab`
//! companion crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod allocator;
pub mod bounds;
pub mod dynamics;
mod error;
pub mod graph;
pub mod growth;
pub mod oracle;
pub mod policies;
pub mod rng;

pub use error::{Error, Result};
pub use graph::{Graph, NodeId, NodeSet};
