//! Distributed observers for LTI plants over switching neighbor graphs.
//!
//! Each agent sees one output channel, estimates the whole state with a
//! Luenberger-style correction on its observable quotient, and fuses the
//! unobservable part with its current neighbors through a consensus term of
//! gain `g`. The crate designs the local gains, builds the switched error
//! model, computes gain certificates, and simulates the network.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod design;
pub mod error;
pub mod errormodel;
pub mod gaincert;
pub mod linalg;
pub mod network;
pub mod pipeline;
pub mod plant;
pub mod random;
pub mod scenario;
pub mod simulate;
pub mod subspaces;
pub mod switching;

pub use design::{build_observer, AgentDesign, ObserverDesign};
pub use error::{Error, Result};
pub use errormodel::ErrorModel;
pub use network::{GraphFamily, NeighborGraph};
pub use pipeline::{run, RunOptions, RunReport};
pub use plant::Plant;
pub use scenario::{load_scenario, Scenario};
pub use switching::SwitchingSignal;
