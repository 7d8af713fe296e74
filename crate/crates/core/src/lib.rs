//! Message passing on constrained Forney-style factor graphs.
//!
//! Variational message passing minimises Bethe free energy; marking
//! goal-observation pairs with p-substitution turns the objective into a
//! generalised free energy whose minimisers show epistemic behaviour. The
//! `tmaze` module builds the classic T-maze agents on top of the engine.

pub mod cli;
pub mod dist;
pub mod engine;
pub mod error;
pub mod gfe;
pub mod graph;
pub mod tmaze;

pub use error::{Error, Result};
