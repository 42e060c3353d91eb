//! Price-zone delineation for electricity networks.
//!
//! Two methods propose divisions of a network into contiguous price zones:
//!
//! * consensus clustering of locational marginal prices across wind
//!   scenarios ([`pipeline::lmp_pipeline`]), and
//! * sequential bipartitioning of the network along frequently congested
//!   lines, using the reference-free distribution-factor operator
//!   ([`pipeline::sequential_partition`]).
//!
//! Candidate divisions are ranked by the scenario-averaged cost of supplying
//! demand under a zonal market ([`welfare`]).

pub mod clustering;
pub mod config;
pub mod error;
pub mod fixtures;
pub mod format;
pub mod grid;
pub mod lp;
pub mod opf;
pub mod output;
pub mod pipeline;
pub mod ptdf;
pub mod scenarios;
pub mod welfare;

pub use config::Tolerances;
pub use error::{Error, Result};
pub use grid::{Branch, Bus, Generator, Network};
