//! Polymer-model Markov chain sampling and simulated-annealing approximate
//! counting for low-temperature spin systems on bounded-degree graphs.
//!
//! The library provides, bottom up:
//!
//! - [`graph`]: host graphs, the graph square, exact expansion checking on
//!   small instances, and a random regular bipartite generator;
//! - [`enumerate`]: connected-subgraph enumeration;
//! - [`model`]: the abstract polymer-model contract, configurations, and
//!   weight-condition checkers;
//! - [`dynamics`]: the single-polymer-update Markov chain and its local
//!   sampler;
//! - [`anneal`]: the simulated-annealing partition-function estimator;
//! - [`potts`]: the ferromagnetic Potts application;
//! - [`hardcore`]: the hard-core application on bipartite graphs;
//! - [`glauber`]: truncated models and restricted single-spin dynamics;
//! - [`oracle`]: brute-force ground truth for everything above.

pub mod anneal;
pub mod dynamics;
pub mod enumerate;
pub mod error;
pub mod glauber;
pub mod graph;
pub mod hardcore;
pub mod model;
pub mod oracle;
pub mod potts;
pub mod seed;

pub use error::{Error, Result};
