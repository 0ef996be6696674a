//! Item-based models of distributed systems: actions over passed and stored
//! items, their execution as a labeled transition system, decompositions
//! into components, traveler and resident processes, a Petri-net
//! interpretation with colored tokens, and deadlock analysis.

pub mod analysis;
pub mod canonical;
pub mod decomposition;
pub mod engine;
pub mod io;
pub mod model;
pub mod petri;
