//! Exact restoration planning for earthquake-damaged distribution grids.
//!
//! The crate builds a finite-horizon Markov decision process whose states
//! pair the per-bus knowledge (unknown / damaged / energized) with the
//! positions of the field teams, optionally shrinks it with a set of
//! value-preserving reductions, and solves it with backward value
//! iteration. The resulting policy can then be executed step by step as
//! field outcomes are reported.
//!
//! Module map:
//!
//! * [`system_model`] – grid description, travel times, problem documents.
//! * [`energization`] – reachability sets and the outcome cascade.
//! * [`actions`] – feasible team commands and the elimination rules.
//! * [`mdp_builder`] – reachability-based construction of the model.
//! * [`solver`] – finite-horizon value iteration and policy extraction.
//! * [`oracle`] – a deliberately naive reference model for cross-checks.
//! * [`partition`] – independent solves over user-defined bus groups.
//! * [`executor`] – stepping a solved policy as outcomes arrive.

pub mod actions;
pub mod energization;
pub mod executor;
pub mod flags;
pub mod mdp_builder;
pub mod oracle;
pub mod partition;
pub mod solver;
pub mod system_model;

pub use actions::{ActionVector, TeamCommand};
pub use energization::{BusSet, BusStatus, BusStatusVector, Outcome, OutcomeSet};
pub use executor::{ExecutionState, Plan};
pub use flags::OptFlags;
pub use mdp_builder::{BuildError, BuildOptions, Mdp, MdpState, TeamState, Transition};
pub use solver::{Horizon, PolicyTable, SolveError};
pub use system_model::{DistributionSystem, ModelError, ProblemDocument, TravelTimeMatrix};
